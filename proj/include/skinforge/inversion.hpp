#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "skinforge/dataset.hpp"
#include "skinforge/generator.hpp"
#include "skinforge/texture.hpp"

namespace skinforge {

// Number of channel values in a face: the MSE normalizer.
inline constexpr double kFaceValueCount = static_cast<double>(kFaceValues);

enum class InitMode { average, random };

struct InversionConfig {
  double lambda_mse = 1.0;
  double lambda_stat = 0.5;
  int steps = 500;
  double learning_rate = 0.05;
  // Fraction of the run over which the learning rate falls to zero along a
  // half cosine. 0 keeps it constant.
  double lr_rampdown = 0.25;
  InitMode init = InitMode::average;
  std::uint64_t seed = 0;  // used by InitMode::random
  bool record_trajectory = false;
};

void validate(const InversionConfig& cfg);

// Learning rate used for the update after step `step` (0-based).
double scheduled_learning_rate(const InversionConfig& cfg, int step);

struct ObjectiveTerms {
  double total = 0.0;
  double mse_term = 0.0;   // sum of squared differences over 192 values
  double stat_term = 0.0;  // statistics loss
};

struct TrajectoryPoint {
  int step = 0;
  double total = 0.0;
  double mse_term = 0.0;
  double stat_term = 0.0;
};

struct InversionResult {
  LatentWPlus latent;
  double final_loss = 0.0;
  double mse_term = 0.0;
  double stat_term = 0.0;
  int best_step = 0;  // iterate index of `latent`; 0 is the starting point
  std::optional<std::vector<TrajectoryPoint>> loss_trajectory;
  FaceTexture rendered;
};

// Called after each optimizer step with (completed_steps, total_steps).
using ProgressFn = std::function<void(int, int)>;

// Mean absolute gap of per-channel means and population standard deviations,
// averaged over R, G, B. The original's statistics are taken at full resolution.
double stat_loss(const FaceTexture& generated, const SourceImage& original);
double stat_loss(std::span<const double> generated, const ChannelStats& original);
// Same value; adds dLoss/dGenerated * scale into `grad`. At a tie
// (generated stat equal to target) the subgradient 0 is used.
double stat_loss_with_gradient(std::span<const double> generated, const ChannelStats& original, double scale,
                               std::span<double> grad);

ObjectiveTerms inversion_objective(const GeneratorWeights& weights, const LatentWPlus& w, const FaceTexture& target_down,
                                   const SourceImage& original, const InversionConfig& cfg);

// Objective and its gradient w.r.t. w at zero noise.
ObjectiveTerms inversion_objective_gradient(const GeneratorWeights& weights, const LatentWPlus& w,
                                            const FaceTexture& target_down, const ChannelStats& original_stats,
                                            const InversionConfig& cfg, LatentWPlus& grad);

LatentWPlus initial_latent(const GeneratorWeights& weights, InitMode init, std::uint64_t seed);

// Adam on the objective from cfg.init; returns the best iterate visited.
// Throws NonFiniteLoss naming the step when the objective stops being finite.
InversionResult invert(const GeneratorWeights& weights, const SourceImage& image, const InversionConfig& cfg,
                       const ProgressFn& progress = {});

void write_trajectory(const std::vector<TrajectoryPoint>& trajectory, const std::filesystem::path& path);

}  // namespace skinforge
