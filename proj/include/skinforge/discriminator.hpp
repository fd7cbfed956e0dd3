#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skinforge/texture.hpp"

namespace skinforge {

// Realness critic for one training stage: conv3x3 -> SiLU -> conv3x3 -> SiLU
// -> dense -> scalar. Input is an HWC image at the stage resolution.
class Discriminator {
 public:
  Discriminator(int resolution, int channels, std::uint64_t seed);

  int resolution() const noexcept { return resolution_; }
  int channels() const noexcept { return channels_; }
  std::span<const float> params() const noexcept { return params_; }
  std::span<float> params() noexcept { return params_; }

  // Throws ShapeMismatch unless the image is resolution x resolution.
  double forward(std::span<const double> image) const;
  double forward(const RgbImage& image) const { return forward(image.values()); }
  double forward(const FaceTexture& face) const { return forward(std::span<const double>(face.values())); }
  std::vector<double> forward_batch(const std::vector<RgbImage>& images) const;

  // Per-parameter learning-rate multipliers (each tensor's init std).
  std::vector<double> learning_rate_scale() const;

  class Pass {
   public:
    Pass(const Discriminator& disc, std::span<const double> image);
    double score() const noexcept { return score_; }
    // Returns dScore/dImage * d_score (HWC); adds parameter gradients when
    // `param_grads` is non-empty.
    std::vector<double> backward(double d_score, std::span<double> param_grads = {}) const;

   private:
    const Discriminator* disc_;
    std::vector<double> input_;  // CHW
    std::vector<double> pre_a_, act_a_, pre_b_, act_b_;
    double score_ = 0.0;
  };

 private:
  friend class Pass;

  int resolution_;
  int channels_;
  std::size_t conv_a_w_, conv_a_b_, conv_b_w_, conv_b_b_, dense_w_, dense_b_;
  std::vector<float> params_;
};

}  // namespace skinforge
