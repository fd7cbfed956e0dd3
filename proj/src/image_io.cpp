#include "skinforge/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include <jpeglib.h>

#include "skinforge/error.hpp"

namespace skinforge {

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff;
}

Rgba8Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DecodeError(std::string("png: ") + image.message);
  }
  image.format = PNG_FORMAT_RGBA;
  Rgba8Image out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgba.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgba.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw DecodeError("png: " + message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Rgba8Image decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.message[0] = '\0';

  // Only trivially destructible locals between setjmp and longjmp.
  Rgba8Image* out = new Rgba8Image();
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    delete out;
    throw DecodeError(std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out->width = static_cast<int>(cinfo.output_width);
  out->height = static_cast<int>(cinfo.output_height);
  out->rgba.assign(static_cast<std::size_t>(out->width) * out->height * 4, 255);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(out->width) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row_ptr = row.data();
    const auto y = cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row_ptr, 1);
    for (int x = 0; x < out->width; ++x) {
      std::uint8_t* px = &out->rgba[(static_cast<std::size_t>(y) * out->width + x) * 4];
      px[0] = row[x * 3];
      px[1] = row[x * 3 + 1];
      px[2] = row[x * 3 + 2];
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Rgba8Image result = std::move(*out);
  delete out;
  return result;
}

Bytes encode_png(int width, int height, std::uint32_t format, std::span<const std::uint8_t> pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (pixels.size() != PNG_IMAGE_SIZE(image)) throw ShapeMismatch("png encode: pixel buffer size mismatch");

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw FileNotFound("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Rgba8Image decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw DecodeError("unsupported image format (expected PNG or JPEG)");
}

Rgba8Image load_rgba(const std::filesystem::path& path) { return decode_image(read_file(path)); }

SourceImage to_source_image(const Rgba8Image& decoded) {
  if (decoded.width < kFaceSize || decoded.height < kFaceSize) {
    throw TooSmall("image is " + std::to_string(decoded.width) + "x" + std::to_string(decoded.height) +
                   ", need at least 8x8");
  }
  RgbImage image(decoded.height, decoded.width);
  auto dst = image.values();
  const std::size_t n = image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = decoded.rgba[4 * i + 3] / 255.0;
    for (int c = 0; c < 3; ++c) {
      const double v = decoded.rgba[4 * i + c] / 255.0;
      dst[3 * i + c] = alpha == 1.0 ? v : v * alpha + (1.0 - alpha);
    }
  }
  return SourceImage(std::move(image));
}

SourceImage load_image(const std::filesystem::path& path) { return to_source_image(load_rgba(path)); }

Bytes encode_png_rgba(int width, int height, std::span<const std::uint8_t> rgba) {
  return encode_png(width, height, PNG_FORMAT_RGBA, rgba);
}

Bytes encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb) {
  return encode_png(width, height, PNG_FORMAT_RGB, rgb);
}

Bytes encode_skin_png(const SkinTexture& skin) {
  std::vector<std::uint8_t> rgba;
  rgba.reserve(skin.pixels().size() * 4);
  for (const Rgba8& p : skin.pixels()) {
    rgba.insert(rgba.end(), {p.r, p.g, p.b, p.a});
  }
  return encode_png_rgba(skin.width(), skin.height(), rgba);
}

SkinTexture load_skin(const std::filesystem::path& path) {
  const Rgba8Image img = load_rgba(path);
  return SkinTexture::from_rgba(img.width, img.height, img.rgba);
}

void save_skin(const SkinTexture& skin, const std::filesystem::path& path) {
  write_file(path, encode_skin_png(skin));
}

Bytes encode_face_png(const FaceTexture& face) {
  std::vector<std::uint8_t> rgb(kFaceValues);
  auto values = face.values();
  for (std::size_t i = 0; i < kFaceValues; ++i) rgb[i] = quantize_channel(values[i]);
  return encode_png_rgb(kFaceSize, kFaceSize, rgb);
}

void save_face(const FaceTexture& face, const std::filesystem::path& path) {
  write_file(path, encode_face_png(face));
}

FaceTexture load_face(const std::filesystem::path& path) {
  const Rgba8Image img = load_rgba(path);
  if (img.width == 64 && (img.height == 64 || img.height == 32)) {
    return extract_face(SkinTexture::from_rgba(img.width, img.height, img.rgba));
  }
  if (img.width != kFaceSize || img.height != kFaceSize) {
    throw ShapeMismatch(path.string() + " is neither an 8x8 face nor a 64x64/64x32 skin");
  }
  FaceTexture face;
  auto dst = face.values();
  for (std::size_t i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) dst[3 * i + c] = dequantize_channel(img.rgba[4 * i + c]);
  }
  return face;
}

void save_image_png(const RgbImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> rgb(image.values().size());
  auto src = image.values();
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = quantize_channel(src[i]);
  write_file(path, encode_png_rgb(image.width(), image.height(), rgb));
}

}  // namespace skinforge
