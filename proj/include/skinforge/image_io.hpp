#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skinforge/texture.hpp"

namespace skinforge {

// Decoded 8-bit RGBA pixels, row-major.
struct Rgba8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;
};

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// PNG or JPEG, sniffed from the leading bytes. Throws DecodeError.
Rgba8Image decode_image(std::span<const std::uint8_t> bytes);
Rgba8Image load_rgba(const std::filesystem::path& path);

// Normalizes to [0,1] and composites alpha over opaque white.
SourceImage to_source_image(const Rgba8Image& decoded);
SourceImage load_image(const std::filesystem::path& path);

Bytes encode_png_rgba(int width, int height, std::span<const std::uint8_t> rgba);
Bytes encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);

Bytes encode_skin_png(const SkinTexture& skin);
SkinTexture load_skin(const std::filesystem::path& path);
void save_skin(const SkinTexture& skin, const std::filesystem::path& path);

// 8x8 RGB PNG, channels quantized with quantize_channel.
Bytes encode_face_png(const FaceTexture& face);
void save_face(const FaceTexture& face, const std::filesystem::path& path);
// Accepts an 8x8 PNG, or a full skin sheet (the face rectangle is cropped).
FaceTexture load_face(const std::filesystem::path& path);

void save_image_png(const RgbImage& image, const std::filesystem::path& path);

}  // namespace skinforge
