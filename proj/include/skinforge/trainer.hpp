#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "skinforge/error.hpp"
#include "skinforge/generator.hpp"

namespace skinforge {

struct TrainStage {
  int iterations = 0;
  int batch_size = 1;
};

struct TrainConfig {
  TrainStage stage4{250, 16};
  TrainStage stage8{300, 16};
  double lr_generator = 2e-3;
  double lr_discriminator = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> warm_start;
  GeneratorConfig generator;  // ignored with warm_start; the checkpoint decides
  int discriminator_channels = 32;
  bool noise = true;
  // Contact sheets of generated samples every `sample_interval` iterations
  // when both are set.
  int sample_interval = 0;
  std::optional<std::filesystem::path> sample_dir;
  std::optional<std::filesystem::path> log_path;

  // Full-size regime: 10K iterations per stage, batches 1024 and 512.
  static TrainConfig paper_scale();
  // Laptop-CPU regime used by the smoke tests.
  static TrainConfig desk_scale();
};

void validate(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);

struct TrainRecord {
  int iteration = 0;  // global, counting across both stages
  int resolution = 4;
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
  double real_score = 0.0;  // batch mean of D(real)
  double fake_score = 0.0;  // batch mean of D(fake)
};

struct TrainLog {
  std::vector<TrainRecord> records;
  bool aborted = false;
  std::string failure;
};

nlohmann::json to_json(const TrainRecord& r);

struct TrainResult {
  GeneratorWeights weights;
  TrainLog log;
};

// Thrown when a loss goes non-finite; carries the log up to that point.
class TrainingDiverged : public NonFiniteLoss {
 public:
  TrainingDiverged(const std::string& message, TrainLog log) : NonFiniteLoss(message), log_(std::move(log)) {}
  const TrainLog& log() const noexcept { return log_; }

 private:
  TrainLog log_;
};

// Stage 1 trains the 4x4 output against the corpus area-downsampled to 4x4,
// stage 2 continues from the same weights at 8x8. Non-saturating GAN loss,
// Adam for both networks, everything seeded from cfg.seed.
TrainResult train(const std::vector<FaceTexture>& corpus, const TrainConfig& cfg);
TrainResult train(const std::filesystem::path& corpus_dir, const TrainConfig& cfg);

// Smallest per-value MSE to `target` over `samples` zero-noise renders of
// mapped z drawn from `seed`.
double best_sample_mse(const GeneratorWeights& weights, const FaceTexture& target, int samples, std::uint64_t seed);

}  // namespace skinforge
