#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace skinforge {

inline constexpr int kFaceSize = 8;
inline constexpr int kFaceChannels = 3;
inline constexpr std::size_t kFaceValues = kFaceSize * kFaceSize * kFaceChannels;

// Top-left corner of the head's front face on a skin sheet. Same in both
// the 64x64 and the legacy 64x32 layouts.
inline constexpr int kFaceOriginX = 8;
inline constexpr int kFaceOriginY = 8;

// Row-major RGB image with channels in [0,1], interleaved (HWC).
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int height, int width, double fill = 0.0);
  RgbImage(int height, int width, std::vector<double> values);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  double& at(int y, int x, int c) { return values_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return values_[index(y, x, c)]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// A user-supplied picture: any RgbImage at least 8x8.
class SourceImage {
 public:
  // Throws TooSmall when either side is below 8, InvalidArgument when a
  // channel is outside [0,1].
  explicit SourceImage(RgbImage image);

  const RgbImage& image() const noexcept { return image_; }
  int height() const noexcept { return image_.height(); }
  int width() const noexcept { return image_.width(); }

 private:
  RgbImage image_;
};

// The 8x8 RGB head-front texture. Values stay in [0,1].
class FaceTexture {
 public:
  FaceTexture() { values_.fill(0.0); }
  explicit FaceTexture(double fill) { values_.fill(fill); }
  // Throws InvalidArgument unless there are exactly 192 values in [0,1].
  static FaceTexture from_values(std::span<const double> values);

  double& at(int y, int x, int c) { return values_[(y * kFaceSize + x) * 3 + c]; }
  double at(int y, int x, int c) const { return values_[(y * kFaceSize + x) * 3 + c]; }

  std::span<const double, kFaceValues> values() const noexcept { return values_; }
  std::span<double, kFaceValues> values() noexcept { return values_; }

  RgbImage to_image() const;
  SourceImage as_source() const { return SourceImage(to_image()); }

  bool operator==(const FaceTexture&) const = default;

 private:
  std::array<double, kFaceValues> values_{};
};

enum class SkinLayout { modern, legacy };

struct Rgba8 {
  std::uint8_t r = 0, g = 0, b = 0, a = 0;
  bool operator==(const Rgba8&) const = default;
};

// 64x64 (modern) or 64x32 (legacy) RGBA8 skin sheet.
class SkinTexture {
 public:
  explicit SkinTexture(SkinLayout layout = SkinLayout::modern, Rgba8 fill = {});
  // Throws ShapeMismatch unless width is 64 and height is 64 or 32.
  static SkinTexture from_rgba(int width, int height, std::span<const std::uint8_t> rgba);

  SkinLayout layout() const noexcept { return layout_; }
  int width() const noexcept { return 64; }
  int height() const noexcept { return layout_ == SkinLayout::modern ? 64 : 32; }

  Rgba8& at(int y, int x) { return pixels_[static_cast<std::size_t>(y) * 64 + x]; }
  const Rgba8& at(int y, int x) const { return pixels_[static_cast<std::size_t>(y) * 64 + x]; }

  std::span<const Rgba8> pixels() const noexcept { return pixels_; }

  bool operator==(const SkinTexture&) const = default;

 private:
  SkinLayout layout_;
  std::vector<Rgba8> pixels_;
};

std::uint8_t quantize_channel(double value);
inline double dequantize_channel(std::uint8_t q) { return q / 255.0; }

SkinTexture embed_face(const FaceTexture& face, const SkinTexture& base);
FaceTexture extract_face(const SkinTexture& skin);

// Area-average an image down to size x size. Row/column block boundaries are
// floor(i * extent / size), so blocks are equal when extent is a multiple of
// size and differ by at most one pixel otherwise.
RgbImage area_downsample(const RgbImage& image, int size);
FaceTexture downsample_to_face(const SourceImage& image);

// Plain skin used when the caller supplies no base sheet.
SkinTexture default_base_skin();

}  // namespace skinforge
