#include "skinforge/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nn_ops.hpp"
#include "skinforge/error.hpp"
#include "skinforge/rng.hpp"

namespace skinforge {

Discriminator::Discriminator(int resolution, int channels, std::uint64_t seed)
    : resolution_(resolution), channels_(channels) {
  if (resolution < 1 || channels < 1) throw InvalidArgument("discriminator needs positive resolution and channels");
  const std::size_t c = channels, area = static_cast<std::size_t>(resolution) * resolution;
  std::size_t total = 0;
  auto add = [&total](std::size_t n) {
    const std::size_t at = total;
    total += n;
    return at;
  };
  conv_a_w_ = add(c * 3 * 9);
  conv_a_b_ = add(c);
  conv_b_w_ = add(c * c * 9);
  conv_b_b_ = add(c);
  dense_w_ = add(c * area);
  dense_b_ = add(1);
  params_.assign(total, 0.0f);

  Rng rng(seed);
  auto fill = [&](std::size_t offset, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) params_[offset + i] = static_cast<float>(rng.normal() * stddev);
  };
  fill(conv_a_w_, c * 3 * 9, std::sqrt(2.0 / 27.0));
  fill(conv_b_w_, c * c * 9, std::sqrt(2.0 / (9.0 * c)));
  fill(dense_w_, c * area, std::sqrt(1.0 / (c * area)));
}

std::vector<double> Discriminator::learning_rate_scale() const {
  const std::size_t c = channels_, area = static_cast<std::size_t>(resolution_) * resolution_;
  std::vector<double> scale(params_.size(), 1.0);
  std::fill_n(scale.begin() + conv_a_w_, c * 27, std::sqrt(2.0 / 27.0));
  std::fill_n(scale.begin() + conv_b_w_, c * c * 9, std::sqrt(2.0 / (9.0 * c)));
  std::fill_n(scale.begin() + dense_w_, c * area, std::sqrt(1.0 / (c * area)));
  return scale;
}

double Discriminator::forward(std::span<const double> image) const { return Pass(*this, image).score(); }

std::vector<double> Discriminator::forward_batch(const std::vector<RgbImage>& images) const {
  std::vector<double> scores;
  scores.reserve(images.size());
  for (const RgbImage& img : images) scores.push_back(forward(img));
  return scores;
}

Discriminator::Pass::Pass(const Discriminator& disc, std::span<const double> image) : disc_(&disc) {
  const int res = disc.resolution_, ch = disc.channels_, area = res * res;
  if (image.size() != static_cast<std::size_t>(area) * 3) {
    throw ShapeMismatch("discriminator expects a " + std::to_string(res) + "x" + std::to_string(res) + " image, got " +
                        std::to_string(image.size()) + " values");
  }
  input_.resize(image.size());
  for (int p = 0; p < area; ++p) {
    for (int c = 0; c < 3; ++c) input_[static_cast<std::size_t>(c) * area + p] = image[3 * p + c];
  }
  const std::span<const float> params = disc.params_;
  const std::size_t n = static_cast<std::size_t>(ch) * area;

  pre_a_.assign(n, 0.0);
  nn::conv3x3(input_, 3, res, params.subspan(disc.conv_a_w_, ch * 27), params.subspan(disc.conv_a_b_, ch), ch, pre_a_);
  act_a_.resize(n);
  for (std::size_t k = 0; k < n; ++k) act_a_[k] = nn::silu(pre_a_[k]);

  pre_b_.assign(n, 0.0);
  nn::conv3x3(act_a_, ch, res, params.subspan(disc.conv_b_w_, static_cast<std::size_t>(ch) * ch * 9),
              params.subspan(disc.conv_b_b_, ch), ch, pre_b_);
  act_b_.resize(n);
  for (std::size_t k = 0; k < n; ++k) act_b_[k] = nn::silu(pre_b_[k]);

  double acc = params[disc.dense_b_];
  for (std::size_t k = 0; k < n; ++k) acc += params[disc.dense_w_ + k] * act_b_[k];
  score_ = acc;
}

std::vector<double> Discriminator::Pass::backward(double d_score, std::span<double> param_grads) const {
  const Discriminator& disc = *disc_;
  const int res = disc.resolution_, ch = disc.channels_, area = res * res;
  const std::size_t n = static_cast<std::size_t>(ch) * area;
  const bool want_params = !param_grads.empty();
  if (want_params && param_grads.size() != disc.params_.size()) {
    throw ShapeMismatch("discriminator parameter gradient has the wrong size");
  }
  const std::span<const float> params = disc.params_;
  auto pg = [&](std::size_t offset, std::size_t size) {
    return want_params ? param_grads.subspan(offset, size) : std::span<double>();
  };

  std::vector<double> d_b(n);
  for (std::size_t k = 0; k < n; ++k) {
    d_b[k] = d_score * params[disc.dense_w_ + k] * nn::silu_grad(pre_b_[k]);
    if (want_params) param_grads[disc.dense_w_ + k] += d_score * act_b_[k];
  }
  if (want_params) param_grads[disc.dense_b_] += d_score;

  std::vector<double> d_act_a(n, 0.0);
  nn::conv3x3_backward(act_a_, ch, res, params.subspan(disc.conv_b_w_, static_cast<std::size_t>(ch) * ch * 9), ch, d_b,
                       d_act_a, pg(disc.conv_b_w_, static_cast<std::size_t>(ch) * ch * 9), pg(disc.conv_b_b_, ch));
  for (std::size_t k = 0; k < n; ++k) d_act_a[k] *= nn::silu_grad(pre_a_[k]);

  std::vector<double> d_input(input_.size(), 0.0);
  nn::conv3x3_backward(input_, 3, res, params.subspan(disc.conv_a_w_, ch * 27), ch, d_act_a, d_input,
                       pg(disc.conv_a_w_, ch * 27), pg(disc.conv_a_b_, ch));

  std::vector<double> d_image(input_.size());
  for (int p = 0; p < area; ++p) {
    for (int c = 0; c < 3; ++c) d_image[3 * p + c] = d_input[static_cast<std::size_t>(c) * area + p];
  }
  return d_image;
}

}  // namespace skinforge
