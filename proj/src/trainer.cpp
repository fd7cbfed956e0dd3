#include "skinforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "nn_ops.hpp"
#include "skinforge/adam.hpp"
#include "skinforge/checkpoint.hpp"
#include "skinforge/dataset.hpp"
#include "skinforge/discriminator.hpp"
#include "skinforge/image_io.hpp"

namespace skinforge {

namespace fs = std::filesystem;

namespace {

constexpr int kSheetSide = 4;  // contact sheets are 4x4 samples

// Renders a grid of samples from fixed z so sheets are comparable across time.
void write_contact_sheet(const GeneratorWeights& g, int resolution, const fs::path& path) {
  const int cell = resolution + 1;
  RgbImage sheet(kSheetSide * cell + 1, kSheetSide * cell + 1, 1.0);
  Rng rng(0x5eed);
  for (int k = 0; k < kSheetSide * kSheetSide; ++k) {
    const MappingPass mp(g, sample_z(rng).values());
    const SynthesisPass sp(g, LatentWPlus::broadcast(mp.w()), NoiseMaps::zero(), resolution);
    const auto out = sp.output();
    const int oy = 1 + (k / kSheetSide) * cell, ox = 1 + (k % kSheetSide) * cell;
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        for (int c = 0; c < 3; ++c) sheet.at(oy + y, ox + x, c) = out[(y * resolution + x) * 3 + c];
      }
    }
  }
  save_image_png(sheet, path);
}

constexpr double kMappingLrMultiplier = 0.01;

// Adam moves every weight by roughly the learning rate per step, so wide
// layers would move far faster than narrow ones. Scaling each tensor's rate
// by its initialization std evens that out, and the mapping gets an extra
// 0.01 as in style-based generators.
std::vector<double> generator_lr_scale(const GeneratorLayout& layout) {
  std::vector<double> scale(layout.total, 1.0);
  auto set = [&](std::size_t offset, std::size_t size, double v) {
    std::fill(scale.begin() + offset, scale.begin() + offset + size, v);
  };
  const std::size_t dim = kLatentDim;
  for (std::size_t l = 0; l < layout.mapping.size(); ++l) {
    const bool last = l + 1 == layout.mapping.size();
    set(layout.mapping[l].weight, dim * dim, kMappingLrMultiplier * std::sqrt((last ? 1.0 : 2.0) / dim));
    set(layout.mapping[l].bias, dim, kMappingLrMultiplier);
  }
  for (const auto& lv : layout.levels) {
    const std::size_t c = lv.channels;
    set(lv.conv_weight, c * lv.in_channels * 9, std::sqrt(2.0 / (lv.in_channels * 9.0)));
    set(lv.style_weight, 2 * c * dim, std::sqrt(1.0 / dim));
    set(lv.rgb_weight, 3 * c, std::sqrt(1.0 / c));
  }
  return scale;
}

class LogSink {
 public:
  explicit LogSink(const std::optional<fs::path>& path) {
    if (path) {
      out_.open(*path, std::ios::trunc);
      if (!out_) throw IoError("cannot write training log " + path->string());
    }
  }
  void write(const nlohmann::json& record) {
    if (out_.is_open()) out_ << record.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainConfig TrainConfig::paper_scale() {
  TrainConfig cfg;
  cfg.stage4 = {10000, 1024};
  cfg.stage8 = {10000, 512};
  return cfg;
}

TrainConfig TrainConfig::desk_scale() { return TrainConfig{}; }

void validate(const TrainConfig& cfg) {
  for (const TrainStage& s : {cfg.stage4, cfg.stage8}) {
    if (s.iterations < 0) throw InvalidArgument("stage iterations must be >= 0");
    if (s.batch_size < 1) throw InvalidArgument("batch size must be positive");
  }
  if (!(cfg.lr_generator > 0.0) || !(cfg.lr_discriminator > 0.0)) throw InvalidArgument("learning rates must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw InvalidArgument("moment decays must be in [0,1)");
  }
  if (cfg.discriminator_channels < 1) throw InvalidArgument("discriminator_channels must be positive");
  if (cfg.sample_interval < 0) throw InvalidArgument("sample_interval must be >= 0");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (j.value("preset", std::string("desk")) == "paper") cfg = TrainConfig::paper_scale();
  auto stage = [](const nlohmann::json& s, TrainStage fallback) {
    return TrainStage{s.value("iterations", fallback.iterations), s.value("batch_size", fallback.batch_size)};
  };
  if (j.contains("stage4")) cfg.stage4 = stage(j.at("stage4"), cfg.stage4);
  if (j.contains("stage8")) cfg.stage8 = stage(j.at("stage8"), cfg.stage8);
  cfg.lr_generator = j.value("lr_generator", cfg.lr_generator);
  cfg.lr_discriminator = j.value("lr_discriminator", cfg.lr_discriminator);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("warm_start") && !j.at("warm_start").is_null()) cfg.warm_start = j.at("warm_start").get<std::string>();
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    cfg.generator.mapping_depth = g.value("mapping_depth", cfg.generator.mapping_depth);
    cfg.generator.channels_4 = g.value("channels_4", cfg.generator.channels_4);
    cfg.generator.channels_8 = g.value("channels_8", cfg.generator.channels_8);
  }
  cfg.discriminator_channels = j.value("discriminator_channels", cfg.discriminator_channels);
  cfg.noise = j.value("noise", cfg.noise);
  cfg.sample_interval = j.value("sample_interval", cfg.sample_interval);
  if (j.contains("sample_dir") && !j.at("sample_dir").is_null()) cfg.sample_dir = j.at("sample_dir").get<std::string>();
  if (j.contains("log_path") && !j.at("log_path").is_null()) cfg.log_path = j.at("log_path").get<std::string>();
  validate(cfg);
  return cfg;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j = {
      {"stage4", {{"iterations", cfg.stage4.iterations}, {"batch_size", cfg.stage4.batch_size}}},
      {"stage8", {{"iterations", cfg.stage8.iterations}, {"batch_size", cfg.stage8.batch_size}}},
      {"lr_generator", cfg.lr_generator},
      {"lr_discriminator", cfg.lr_discriminator},
      {"beta1", cfg.beta1},
      {"beta2", cfg.beta2},
      {"seed", cfg.seed},
      {"generator",
       {{"mapping_depth", cfg.generator.mapping_depth},
        {"channels_4", cfg.generator.channels_4},
        {"channels_8", cfg.generator.channels_8}}},
      {"discriminator_channels", cfg.discriminator_channels},
      {"noise", cfg.noise},
      {"sample_interval", cfg.sample_interval},
  };
  j["warm_start"] = cfg.warm_start ? nlohmann::json(cfg.warm_start->string()) : nlohmann::json(nullptr);
  j["sample_dir"] = cfg.sample_dir ? nlohmann::json(cfg.sample_dir->string()) : nlohmann::json(nullptr);
  j["log_path"] = cfg.log_path ? nlohmann::json(cfg.log_path->string()) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const TrainRecord& r) {
  return {{"iteration", r.iteration},        {"resolution", r.resolution},
          {"generator_loss", r.generator_loss}, {"discriminator_loss", r.discriminator_loss},
          {"real_score", r.real_score},      {"fake_score", r.fake_score}};
}

TrainResult train(const std::vector<FaceTexture>& corpus, const TrainConfig& cfg) {
  validate(cfg);
  if (corpus.empty()) throw EmptyCorpus("training corpus is empty");

  GeneratorWeights g = cfg.warm_start ? load_weights(*cfg.warm_start) : GeneratorWeights::initialize(cfg.generator, cfg.seed);
  TrainLog log;
  if (cfg.stage4.iterations == 0 && cfg.stage8.iterations == 0) return {std::move(g), std::move(log)};
  // The parameters are about to move; a cached average would be stale.
  g.set_cached_average(std::nullopt);

  Rng seeds(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng rng(seeds.next_u64());
  Adam adam_g(g.params().size(), AdamOptions{cfg.lr_generator, cfg.beta1, cfg.beta2, 1e-8}, generator_lr_scale(g.layout()));
  std::vector<double> g_grad(g.params().size());

  std::vector<RgbImage> real4, real8;
  for (const FaceTexture& face : corpus) {
    real8.push_back(face.to_image());
    real4.push_back(area_downsample(real8.back(), 4));
  }

  LogSink sink(cfg.log_path);
  int iteration = 0;
  for (const int resolution : {4, 8}) {
    const TrainStage stage = resolution == 4 ? cfg.stage4 : cfg.stage8;
    const std::vector<RgbImage>& real = resolution == 4 ? real4 : real8;
    Discriminator disc(resolution, cfg.discriminator_channels, seeds.next_u64());
    Adam adam_d(disc.params().size(), AdamOptions{cfg.lr_discriminator, cfg.beta1, cfg.beta2, 1e-8},
                disc.learning_rate_scale());
    std::vector<double> d_grad(disc.params().size());
    const double inv_batch = 1.0 / stage.batch_size;

    auto fake_pass = [&](const MappingPass& mp) {
      const NoiseMaps noise = cfg.noise ? NoiseMaps::sample(rng) : NoiseMaps::zero();
      return SynthesisPass(g, LatentWPlus::broadcast(mp.w()), noise, resolution);
    };

    for (int it = 0; it < stage.iterations; ++it, ++iteration) {
      TrainRecord record;
      record.iteration = iteration;
      record.resolution = resolution;

      bool finite = true;
      try {
      // Discriminator: softplus(D(fake)) + softplus(-D(real)).
      std::fill(d_grad.begin(), d_grad.end(), 0.0);
      for (int b = 0; b < stage.batch_size; ++b) {
        const RgbImage& x = real[rng.index(real.size())];
        const Discriminator::Pass real_pass(disc, x.values());
        const double s_real = real_pass.score();
        record.discriminator_loss += nn::softplus(-s_real) * inv_batch;
        record.real_score += s_real * inv_batch;
        real_pass.backward(-nn::sigmoid(-s_real) * inv_batch, d_grad);

        const MappingPass mp(g, sample_z(rng).values());
        const SynthesisPass sp = fake_pass(mp);
        const Discriminator::Pass fake(disc, sp.output());
        const double s_fake = fake.score();
        record.discriminator_loss += nn::softplus(s_fake) * inv_batch;
        record.fake_score += s_fake * inv_batch;
        fake.backward(nn::sigmoid(s_fake) * inv_batch, d_grad);
      }
      adam_d.step(disc.params(), std::span<const double>(d_grad));

      // Generator: softplus(-D(G(z))).
      std::fill(g_grad.begin(), g_grad.end(), 0.0);
      for (int b = 0; b < stage.batch_size; ++b) {
        const MappingPass mp(g, sample_z(rng).values());
        const SynthesisPass sp = fake_pass(mp);
        const Discriminator::Pass fake(disc, sp.output());
        const double s = fake.score();
        record.generator_loss += nn::softplus(-s) * inv_batch;
        const std::vector<double> d_image = fake.backward(-nn::sigmoid(-s) * inv_batch);
        const LatentWPlus d_w = sp.backward(d_image, g_grad);
        std::vector<double> d_style(kLatentDim);
        for (int j = 0; j < kLatentDim; ++j) d_style[j] = d_w.row(0)[j] + d_w.row(1)[j];
        mp.backward(d_style, g_grad);
      }
      } catch (const InvalidArgument&) {
        // A latent or image went non-finite mid-batch.
        finite = false;
      }

      finite = finite && std::isfinite(record.generator_loss) && std::isfinite(record.discriminator_loss) &&
               std::isfinite(record.real_score) && std::isfinite(record.fake_score);
      if (!finite) {
        log.aborted = true;
        log.failure = "non-finite loss at iteration " + std::to_string(iteration);
        sink.write({{"aborted", true}, {"failure", log.failure}, {"record", to_json(record)}});
        throw TrainingDiverged(log.failure, std::move(log));
      }
      adam_g.step(g.params(), std::span<const double>(g_grad));
      log.records.push_back(record);
      sink.write(to_json(record));

      if (cfg.sample_interval > 0 && cfg.sample_dir && (iteration + 1) % cfg.sample_interval == 0) {
        fs::create_directories(*cfg.sample_dir);
        char name[32];
        std::snprintf(name, sizeof name, "iter_%06d.png", iteration + 1);
        write_contact_sheet(g, resolution, *cfg.sample_dir / name);
      }
    }
  }
  return {std::move(g), std::move(log)};
}

TrainResult train(const fs::path& corpus_dir, const TrainConfig& cfg) { return train(load_corpus(corpus_dir), cfg); }

double best_sample_mse(const GeneratorWeights& weights, const FaceTexture& target, int samples, std::uint64_t seed) {
  Rng rng(seed);
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const MappingPass mp(weights, sample_z(rng).values());
    const SynthesisPass sp(weights, LatentWPlus::broadcast(mp.w()), NoiseMaps::zero(), kFaceSize);
    double sum = 0.0;
    const auto out = sp.output();
    for (std::size_t i = 0; i < kFaceValues; ++i) sum += (out[i] - target.values()[i]) * (out[i] - target.values()[i]);
    best = std::min(best, sum / static_cast<double>(kFaceValues));
  }
  return best;
}

}  // namespace skinforge
