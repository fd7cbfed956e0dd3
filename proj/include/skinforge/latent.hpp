#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace skinforge {

inline constexpr int kLatentDim = 512;
inline constexpr int kLevelCount = 2;
inline constexpr std::size_t kWPlusSize = static_cast<std::size_t>(kLatentDim) * kLevelCount;

// Input latent z of the mapping network.
class LatentZ {
 public:
  // Throws ShapeMismatch on length != 512, InvalidArgument on non-finite entries.
  explicit LatentZ(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  bool operator==(const LatentZ&) const = default;

 private:
  std::vector<double> values_;
};

// Limited W+ latent: one 512-wide style vector per synthesis level (4x4, 8x8).
class LatentWPlus {
 public:
  LatentWPlus() : values_(kWPlusSize, 0.0) {}
  // Throws ShapeMismatch unless exactly 1024 values, InvalidArgument on non-finite entries.
  explicit LatentWPlus(std::vector<double> values);
  // Both rows set to `w` (length 512).
  static LatentWPlus broadcast(std::span<const double> w);

  std::span<const double> row(int level) const { return {values_.data() + level * kLatentDim, kLatentDim}; }
  std::span<double> row(int level) { return {values_.data() + level * kLatentDim, kLatentDim}; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool operator==(const LatentWPlus&) const = default;

 private:
  std::vector<double> values_;
};

double l2_distance(const LatentWPlus& a, const LatentWPlus& b);
double linf_distance(const LatentWPlus& a, const LatentWPlus& b);

}  // namespace skinforge
