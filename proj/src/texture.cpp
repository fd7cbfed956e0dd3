#include "skinforge/texture.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skinforge/error.hpp"

namespace skinforge {

namespace {

bool in_unit_range(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

void fill_rect(SkinTexture& skin, int x0, int y0, int w, int h, Rgba8 color) {
  for (int y = y0; y < y0 + h && y < skin.height(); ++y) {
    for (int x = x0; x < x0 + w; ++x) skin.at(y, x) = color;
  }
}

}  // namespace

RgbImage::RgbImage(int height, int width, double fill)
    : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width * 3, fill) {
  if (height < 0 || width < 0) throw InvalidArgument("negative image dimensions");
}

RgbImage::RgbImage(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 0 || width < 0) throw InvalidArgument("negative image dimensions");
  if (values_.size() != static_cast<std::size_t>(height) * width * 3) {
    throw ShapeMismatch("image buffer has " + std::to_string(values_.size()) + " values, expected " +
                        std::to_string(static_cast<std::size_t>(height) * width * 3));
  }
}

SourceImage::SourceImage(RgbImage image) : image_(std::move(image)) {
  if (image_.height() < kFaceSize || image_.width() < kFaceSize) {
    throw TooSmall("image is " + std::to_string(image_.width()) + "x" + std::to_string(image_.height()) +
                   ", need at least 8x8");
  }
  for (double v : image_.values()) {
    if (!in_unit_range(v)) throw InvalidArgument("image channel outside [0,1]");
  }
}

FaceTexture FaceTexture::from_values(std::span<const double> values) {
  if (values.size() != kFaceValues) {
    throw ShapeMismatch("face texture needs 192 values, got " + std::to_string(values.size()));
  }
  FaceTexture face;
  for (std::size_t i = 0; i < kFaceValues; ++i) {
    if (!in_unit_range(values[i])) throw InvalidArgument("face channel outside [0,1]");
    face.values_[i] = values[i];
  }
  return face;
}

RgbImage FaceTexture::to_image() const {
  return RgbImage(kFaceSize, kFaceSize, std::vector<double>(values_.begin(), values_.end()));
}

SkinTexture::SkinTexture(SkinLayout layout, Rgba8 fill)
    : layout_(layout), pixels_(static_cast<std::size_t>(64) * (layout == SkinLayout::modern ? 64 : 32), fill) {}

SkinTexture SkinTexture::from_rgba(int width, int height, std::span<const std::uint8_t> rgba) {
  if (width != 64 || (height != 64 && height != 32)) {
    throw ShapeMismatch("skin must be 64x64 or 64x32, got " + std::to_string(width) + "x" +
                        std::to_string(height));
  }
  if (rgba.size() != static_cast<std::size_t>(width) * height * 4) {
    throw ShapeMismatch("skin pixel buffer has wrong length");
  }
  SkinTexture skin(height == 64 ? SkinLayout::modern : SkinLayout::legacy);
  for (std::size_t i = 0; i < skin.pixels_.size(); ++i) {
    skin.pixels_[i] = {rgba[4 * i], rgba[4 * i + 1], rgba[4 * i + 2], rgba[4 * i + 3]};
  }
  return skin;
}

std::uint8_t quantize_channel(double value) {
  const double clamped = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

SkinTexture embed_face(const FaceTexture& face, const SkinTexture& base) {
  SkinTexture out = base;
  for (int y = 0; y < kFaceSize; ++y) {
    for (int x = 0; x < kFaceSize; ++x) {
      out.at(kFaceOriginY + y, kFaceOriginX + x) = {quantize_channel(face.at(y, x, 0)),
                                                    quantize_channel(face.at(y, x, 1)),
                                                    quantize_channel(face.at(y, x, 2)), 255};
    }
  }
  return out;
}

FaceTexture extract_face(const SkinTexture& skin) {
  FaceTexture face;
  for (int y = 0; y < kFaceSize; ++y) {
    for (int x = 0; x < kFaceSize; ++x) {
      const Rgba8& p = skin.at(kFaceOriginY + y, kFaceOriginX + x);
      face.at(y, x, 0) = dequantize_channel(p.r);
      face.at(y, x, 1) = dequantize_channel(p.g);
      face.at(y, x, 2) = dequantize_channel(p.b);
    }
  }
  return face;
}

RgbImage area_downsample(const RgbImage& image, int size) {
  if (size <= 0) throw InvalidArgument("downsample target must be positive");
  if (image.height() < size || image.width() < size) {
    throw TooSmall("cannot area-downsample below the source size");
  }
  RgbImage out(size, size);
  for (int oy = 0; oy < size; ++oy) {
    const int y0 = static_cast<int>(static_cast<long long>(oy) * image.height() / size);
    const int y1 = static_cast<int>(static_cast<long long>(oy + 1) * image.height() / size);
    for (int ox = 0; ox < size; ++ox) {
      const int x0 = static_cast<int>(static_cast<long long>(ox) * image.width() / size);
      const int x1 = static_cast<int>(static_cast<long long>(ox + 1) * image.width() / size);
      const double area = static_cast<double>(y1 - y0) * (x1 - x0);
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) sum += image.at(y, x, c);
        }
        out.at(oy, ox, c) = sum / area;
      }
    }
  }
  return out;
}

FaceTexture downsample_to_face(const SourceImage& image) {
  const RgbImage small = area_downsample(image.image(), kFaceSize);
  FaceTexture face;
  auto dst = face.values();
  auto src = small.values();
  // Block means of values in [0,1] can drift a hair past the ends.
  for (std::size_t i = 0; i < kFaceValues; ++i) dst[i] = std::clamp(src[i], 0.0, 1.0);
  return face;
}

SkinTexture default_base_skin() {
  SkinTexture skin(SkinLayout::modern);
  const Rgba8 hair{74, 52, 34, 255};
  const Rgba8 skin_tone{196, 148, 116, 255};
  const Rgba8 shirt{0, 168, 168, 255};
  const Rgba8 trousers{60, 58, 160, 255};
  const Rgba8 shoes{70, 70, 70, 255};

  // Head: top/bottom strip then the four sides.
  fill_rect(skin, 8, 0, 8, 8, hair);
  fill_rect(skin, 16, 0, 8, 8, skin_tone);
  fill_rect(skin, 0, 8, 32, 8, skin_tone);
  fill_rect(skin, 0, 8, 32, 2, hair);
  fill_rect(skin, 24, 8, 8, 8, hair);
  // Right leg, body, right arm.
  fill_rect(skin, 0, 16, 16, 16, trousers);
  fill_rect(skin, 4, 16, 4, 4, shoes);
  fill_rect(skin, 0, 28, 16, 4, shoes);
  fill_rect(skin, 16, 16, 24, 16, shirt);
  fill_rect(skin, 40, 16, 16, 16, skin_tone);
  fill_rect(skin, 40, 20, 16, 4, shirt);
  // Left leg and left arm in the lower half of modern sheets.
  fill_rect(skin, 16, 48, 16, 16, trousers);
  fill_rect(skin, 16, 60, 16, 4, shoes);
  fill_rect(skin, 32, 48, 16, 16, skin_tone);
  fill_rect(skin, 32, 52, 16, 4, shirt);

  // The face itself is overwritten by embed_face; keep a neutral default.
  fill_rect(skin, kFaceOriginX, kFaceOriginY, kFaceSize, kFaceSize, skin_tone);
  return skin;
}

}  // namespace skinforge
