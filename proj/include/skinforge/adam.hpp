#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "skinforge/error.hpp"

namespace skinforge {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer over a flat parameter vector. The parameter type
// can be float (network weights) or double (latents); moments stay in double.
class Adam {
 public:
  Adam(std::size_t size, AdamOptions options) : options_(options), m_(size, 0.0), v_(size, 0.0) {}
  // Per-element learning-rate multipliers; empty means 1 everywhere.
  Adam(std::size_t size, AdamOptions options, std::vector<double> lr_scale)
      : options_(options), m_(size, 0.0), v_(size, 0.0), scale_(std::move(lr_scale)) {
    if (!scale_.empty() && scale_.size() != size) throw ShapeMismatch("adam: learning-rate scale size mismatch");
  }

  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) noexcept { options_.learning_rate = lr; }
  long steps() const noexcept { return t_; }

  template <typename T>
  void step(std::span<T> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeMismatch("adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const double lr = options_.learning_rate;
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const double g = grads[i];
      m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
      v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      const double step = (scale_.empty() ? lr : lr * scale_[i]) * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      params[i] = static_cast<T>(params[i] - step);
    }
  }

 private:
  AdamOptions options_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::vector<double> scale_;
  long t_ = 0;
};

}  // namespace skinforge
