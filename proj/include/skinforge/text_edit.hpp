#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "skinforge/generator.hpp"
#include "skinforge/inversion.hpp"
#include "skinforge/scorer.hpp"

namespace skinforge {

struct EditConfig {
  double lambda_l2 = 0.008;
  // Zero steps returns the source latent untouched.
  int steps = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  bool record_trajectory = false;
};

void validate(const EditConfig& cfg);

struct EditTerms {
  double total = 0.0;
  double clip_term = 0.0;  // scorer distance of the render
  double l2_term = 0.0;    // unsquared Euclidean distance to the source latent
};

struct EditPoint {
  int step = 0;
  double total = 0.0;
  double clip_term = 0.0;
  double l2_term = 0.0;
};

struct EditResult {
  LatentWPlus latent;
  double clip_term = 0.0;
  double l2_term = 0.0;
  double total = 0.0;
  int best_step = 0;
  FaceTexture rendered;
  std::optional<std::vector<EditPoint>> trajectory;
};

EditTerms edit_objective(const GeneratorWeights& weights, const LatentWPlus& w_fin, const LatentWPlus& w_star,
                         const TextPrompt& prompt, const TextImageScorer& scorer, double lambda_l2);

// Objective plus gradient w.r.t. w_fin. The norm's gradient at zero
// displacement is taken as 0.
EditTerms edit_objective_gradient(const GeneratorWeights& weights, const LatentWPlus& w_fin, const LatentWPlus& w_star,
                                  const TextPrompt& prompt, const TextImageScorer& scorer, double lambda_l2,
                                  LatentWPlus& grad);

// Adam from w_star with w_star held fixed; returns the best iterate visited.
EditResult edit(const GeneratorWeights& weights, const LatentWPlus& w_star, const TextPrompt& prompt,
                const TextImageScorer& scorer, const EditConfig& cfg, const ProgressFn& progress = {});

struct EditSource {
  enum class Kind { average, random, latent };
  Kind kind = Kind::average;
  std::uint64_t seed = 0;    // Kind::random
  double truncation = 1.0;   // Kind::random
  std::optional<LatentWPlus> latent;  // Kind::latent

  static EditSource average() { return {}; }
  static EditSource random(std::uint64_t seed, double truncation = 1.0) {
    return {Kind::random, seed, truncation, std::nullopt};
  }
  static EditSource from_latent(LatentWPlus w) { return {Kind::latent, 0, 1.0, std::move(w)}; }
};

LatentWPlus resolve_source(const GeneratorWeights& weights, const EditSource& source);

EditResult edit_from_source(const GeneratorWeights& weights, const EditSource& source, const TextPrompt& prompt,
                            const TextImageScorer& scorer, const EditConfig& cfg, const ProgressFn& progress = {});

void write_trajectory(const std::vector<EditPoint>& trajectory, const std::filesystem::path& path);

}  // namespace skinforge
