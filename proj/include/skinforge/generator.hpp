#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skinforge/latent.hpp"
#include "skinforge/rng.hpp"
#include "skinforge/texture.hpp"

namespace skinforge {

struct NoiseSeed {
  std::uint64_t value = 0;
};

struct GeneratorConfig {
  int mapping_depth = 4;
  int channels_4 = 64;  // feature maps at the 4x4 level
  int channels_8 = 32;  // feature maps at the 8x8 level

  bool operator==(const GeneratorConfig&) const = default;
};

// Position of one named parameter tensor inside the flat parameter vector.
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct GeneratorLayout {
  struct Dense {
    std::size_t weight = 0;  // out x in, row-major
    std::size_t bias = 0;
  };
  struct Level {
    int in_channels = 0;
    int channels = 0;
    int resolution = 0;
    std::size_t conv_weight = 0;  // channels x in_channels x 3 x 3
    std::size_t conv_bias = 0;
    std::size_t noise_scale = 0;  // per channel
    std::size_t style_weight = 0;  // (2 * channels) x 512: scales then shifts
    std::size_t style_bias = 0;
    std::size_t rgb_weight = 0;  // 3 x channels
    std::size_t rgb_bias = 0;
  };

  explicit GeneratorLayout(const GeneratorConfig& config);

  std::vector<Dense> mapping;
  std::size_t constant = 0;  // channels_4 x 4 x 4
  Level levels[kLevelCount];
  std::vector<TensorSlot> tensors;
  std::size_t total = 0;
};

// Mapping network + two-level synthesis network. Parameters are float32 so a
// checkpoint round-trips bit-exactly; all arithmetic runs in double.
class GeneratorWeights {
 public:
  GeneratorWeights(const GeneratorConfig& config, std::vector<float> params);
  static GeneratorWeights initialize(const GeneratorConfig& config, std::uint64_t seed);

  const GeneratorConfig& config() const noexcept { return config_; }
  const GeneratorLayout& layout() const noexcept { return layout_; }
  std::span<const float> params() const noexcept { return params_; }
  std::span<float> params() noexcept { return params_; }
  std::span<const float> tensor(std::size_t offset, std::size_t size) const { return {params_.data() + offset, size}; }

  // Cached mean latent, stored alongside the parameters in checkpoints.
  const std::optional<LatentWPlus>& cached_average() const noexcept { return average_; }
  void set_cached_average(std::optional<LatentWPlus> average) { average_ = std::move(average); }

  bool operator==(const GeneratorWeights& other) const {
    return config_ == other.config_ && params_ == other.params_ && average_ == other.average_;
  }

 private:
  GeneratorConfig config_;
  GeneratorLayout layout_;
  std::vector<float> params_;
  std::optional<LatentWPlus> average_;
};

// Per-pixel noise inputs, shared across channels within a level.
struct NoiseMaps {
  std::vector<double> level4 = std::vector<double>(16, 0.0);
  std::vector<double> level8 = std::vector<double>(64, 0.0);

  static NoiseMaps zero() { return {}; }
  static NoiseMaps from_seed(NoiseSeed seed);
  static NoiseMaps sample(Rng& rng);
};

inline constexpr int kAverageSamples = 10000;
inline constexpr std::uint64_t kAverageSeed = 0;

LatentZ sample_z(Rng& rng);

LatentWPlus map_latent(const GeneratorWeights& weights, const LatentZ& z);

FaceTexture synthesize(const GeneratorWeights& weights, const LatentWPlus& w,
                       std::optional<NoiseSeed> noise = std::nullopt);

// Mean of map_latent over n_samples draws from a stream seeded with `seed`.
LatentWPlus average_latent(const GeneratorWeights& weights, int n_samples, NoiseSeed seed);

// (1 - truncation) * w_avg + truncation * map_latent(z). Uses the cached
// average when present; otherwise computes it with the default sample count.
LatentWPlus sample_random_latent(const GeneratorWeights& weights, double truncation, NoiseSeed seed);

// Returns the cached average, computing (and caching) it with the defaults
// when it is missing. Returns true when the cache was filled.
bool ensure_average_latent(GeneratorWeights& weights);
LatentWPlus resolve_average_latent(const GeneratorWeights& weights);

// One forward evaluation of the synthesis network with everything needed for
// reverse-mode gradients. `resolution` is 4 (first level only) or 8.
class SynthesisPass {
 public:
  SynthesisPass(const GeneratorWeights& weights, const LatentWPlus& w, const NoiseMaps& noise, int resolution = 8);

  int resolution() const noexcept { return resolution_; }
  // HWC, resolution x resolution x 3, values in [0,1].
  std::span<const double> output() const noexcept { return rgb_; }
  FaceTexture face() const;
  RgbImage image() const;

  // Gradient of a scalar loss w.r.t. w given dLoss/dOutput (HWC). When
  // `param_grads` is non-empty it must span the whole parameter vector and
  // receives accumulated parameter gradients.
  LatentWPlus backward(std::span<const double> d_output, std::span<double> param_grads = {}) const;

 private:
  struct LevelState {
    std::vector<double> input;   // conv input (CHW): constant, or upsampled previous level
    std::vector<double> act;     // activation output
    std::vector<double> normed;  // instance-normalized activation
    std::vector<double> pre;     // conv + noise, before activation
    std::vector<double> inv_std;
    std::vector<double> scale;
    std::vector<double> out;  // styled features
  };

  const GeneratorWeights* weights_;
  LatentWPlus w_;
  NoiseMaps noise_;
  int resolution_;
  LevelState levels_[kLevelCount];
  std::vector<double> rgb_pre_;
  std::vector<double> rgb_;
};

// Forward pass of the mapping network on already-sampled z, with backward
// support for training. `w` has length 512.
class MappingPass {
 public:
  MappingPass(const GeneratorWeights& weights, std::span<const double> z);

  std::span<const double> w() const noexcept { return activations_.back(); }
  void backward(std::span<const double> d_w, std::span<double> param_grads) const;

 private:
  const GeneratorWeights* weights_;
  std::vector<std::vector<double>> activations_;  // [0] = normalized z
  std::vector<std::vector<double>> pre_;
};

}  // namespace skinforge
