#include "skinforge/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "json.hpp"

#include "skinforge/adam.hpp"
#include "skinforge/error.hpp"

namespace skinforge {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double squared_error(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

void validate(const InversionConfig& cfg) {
  if (!(cfg.lambda_mse >= 0.0) || !(cfg.lambda_stat >= 0.0)) throw InvalidArgument("loss weights must be >= 0");
  if (cfg.steps < 1) throw InvalidArgument("steps must be positive");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(cfg.lr_rampdown >= 0.0 && cfg.lr_rampdown <= 1.0)) throw InvalidArgument("lr_rampdown must be in [0, 1]");
}

double scheduled_learning_rate(const InversionConfig& cfg, int step) {
  if (cfg.lr_rampdown <= 0.0) return cfg.learning_rate;
  const double remaining = 1.0 - static_cast<double>(step) / cfg.steps;
  const double r = std::min(1.0, remaining / cfg.lr_rampdown);
  return cfg.learning_rate * (0.5 - 0.5 * std::cos(r * std::numbers::pi));
}

double stat_loss(std::span<const double> generated, const ChannelStats& original) {
  const ChannelStats gen = channel_stats(generated);
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    sum += std::abs(gen.mu[c] - original.mu[c]) + std::abs(gen.sigma[c] - original.sigma[c]);
  }
  return sum / 3.0;
}

double stat_loss(const FaceTexture& generated, const SourceImage& original) {
  return stat_loss(generated.values(), channel_stats(original.image()));
}

double stat_loss_with_gradient(std::span<const double> generated, const ChannelStats& original, double scale,
                               std::span<double> grad) {
  const ChannelStats gen = channel_stats(generated);
  const std::size_t n = generated.size() / 3;
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d_mu = gen.mu[c] - original.mu[c];
    const double d_sigma = gen.sigma[c] - original.sigma[c];
    sum += std::abs(d_mu) + std::abs(d_sigma);

    const double g_mu = scale * sign(d_mu) / 3.0 / static_cast<double>(n);
    const double g_sigma =
        gen.sigma[c] > 0.0 ? scale * sign(d_sigma) / 3.0 / (static_cast<double>(n) * gen.sigma[c]) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      grad[3 * i + c] += g_mu + g_sigma * (generated[3 * i + c] - gen.mu[c]);
    }
  }
  return sum / 3.0;
}

ObjectiveTerms inversion_objective(const GeneratorWeights& weights, const LatentWPlus& w, const FaceTexture& target_down,
                                   const SourceImage& original, const InversionConfig& cfg) {
  const FaceTexture generated = synthesize(weights, w);
  ObjectiveTerms terms;
  terms.mse_term = squared_error(generated.values(), target_down.values());
  terms.stat_term = stat_loss(generated, original);
  terms.total = cfg.lambda_mse * terms.mse_term / kFaceValueCount + cfg.lambda_stat * terms.stat_term;
  return terms;
}

ObjectiveTerms inversion_objective_gradient(const GeneratorWeights& weights, const LatentWPlus& w,
                                            const FaceTexture& target_down, const ChannelStats& original_stats,
                                            const InversionConfig& cfg, LatentWPlus& grad) {
  const SynthesisPass pass(weights, w, NoiseMaps::zero());
  const auto out = pass.output();
  const auto target = target_down.values();

  std::vector<double> d_out(out.size(), 0.0);
  ObjectiveTerms terms;
  const double mse_scale = cfg.lambda_mse / kFaceValueCount;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - target[i];
    terms.mse_term += d * d;
    d_out[i] = 2.0 * mse_scale * d;
  }
  terms.stat_term = stat_loss_with_gradient(out, original_stats, cfg.lambda_stat, d_out);
  terms.total = mse_scale * terms.mse_term + cfg.lambda_stat * terms.stat_term;
  grad = pass.backward(d_out);
  return terms;
}

LatentWPlus initial_latent(const GeneratorWeights& weights, InitMode init, std::uint64_t seed) {
  if (init == InitMode::average) return resolve_average_latent(weights);
  Rng rng(seed);
  return map_latent(weights, sample_z(rng));
}

InversionResult invert(const GeneratorWeights& weights, const SourceImage& image, const InversionConfig& cfg,
                       const ProgressFn& progress) {
  validate(cfg);
  const FaceTexture target = downsample_to_face(image);
  const ChannelStats original_stats = channel_stats(image.image());

  LatentWPlus w = initial_latent(weights, cfg.init, cfg.seed);
  Adam adam(kWPlusSize, AdamOptions{cfg.learning_rate, 0.9, 0.999, 1e-8});

  InversionResult result;
  if (cfg.record_trajectory) result.loss_trajectory.emplace();
  bool have_best = false;
  LatentWPlus grad;

  auto consider = [&](const ObjectiveTerms& terms, int step) {
    if (!std::isfinite(terms.total)) {
      throw NonFiniteLoss("inversion objective became non-finite at step " + std::to_string(step));
    }
    if (!have_best || terms.total < result.final_loss) {
      have_best = true;
      result.latent = w;
      result.final_loss = terms.total;
      result.mse_term = terms.mse_term;
      result.stat_term = terms.stat_term;
      result.best_step = step;
    }
  };

  for (int step = 0; step < cfg.steps; ++step) {
    const ObjectiveTerms terms = inversion_objective_gradient(weights, w, target, original_stats, cfg, grad);
    consider(terms, step);
    if (result.loss_trajectory) {
      result.loss_trajectory->push_back({step, terms.total, terms.mse_term, terms.stat_term});
    }
    adam.set_learning_rate(scheduled_learning_rate(cfg, step));
    adam.step(w.values(), std::span<const double>(grad.values()));
    if (progress) progress(step + 1, cfg.steps);
  }
  // The iterate produced by the last update has not been scored yet.
  for (double v : w.values()) {
    if (!std::isfinite(v)) throw NonFiniteLoss("latent became non-finite at step " + std::to_string(cfg.steps));
  }
  consider(inversion_objective_gradient(weights, w, target, original_stats, cfg, grad), cfg.steps);

  result.rendered = synthesize(weights, result.latent);
  return result;
}

void write_trajectory(const std::vector<TrajectoryPoint>& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write trajectory " + path.string());
  for (const TrajectoryPoint& p : trajectory) {
    nlohmann::json record = {{"step", p.step}, {"total", p.total}, {"mse_term", p.mse_term}, {"stat_term", p.stat_term}};
    out << record.dump() << '\n';
  }
}

}  // namespace skinforge
