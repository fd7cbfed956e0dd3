#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "skinforge/error.hpp"
#include "skinforge/image_io.hpp"
#include "skinforge/texture.hpp"

using namespace skinforge;

namespace {

Bytes solid_png(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a = 255) {
  std::vector<std::uint8_t> rgba;
  for (int i = 0; i < w * h; ++i) rgba.insert(rgba.end(), {r, g, b, a});
  return encode_png_rgba(w, h, rgba);
}

SkinTexture random_skin(std::mt19937_64& gen, SkinLayout layout) {
  SkinTexture s(layout);
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) {
      const auto v = gen();
      s.at(y, x) = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v >> 16),
                    static_cast<std::uint8_t>(v >> 24)};
    }
  return s;
}

}  // namespace

TEST_SUITE("texture") {
  TEST_CASE("load_image normalizes and validates size") {
    fixtures::TempDir dir;
    write_file(dir / "white.png", solid_png(64, 64, 255, 255, 255));
    const SourceImage white = load_image(dir / "white.png");
    CHECK(white.width() == 64);
    for (double v : white.image().values()) REQUIRE(v == 1.0);

    write_file(dir / "mid.png", solid_png(8, 8, 128, 128, 128));
    CHECK(load_image(dir / "mid.png").image().at(3, 3, 1) == doctest::Approx(0.50196).epsilon(1e-5));
    CHECK(load_image(dir / "mid.png").image().at(0, 0, 0) == 128.0 / 255.0);

    write_file(dir / "tiny.png", solid_png(4, 4, 0, 0, 0));
    CHECK_THROWS_AS(load_image(dir / "tiny.png"), TooSmall);
    CHECK_THROWS_AS(load_image(dir / "absent.png"), FileNotFound);

    write_file(dir / "junk.png", Bytes{0x89, 'P', 'N', 'G', 1, 2, 3});
    CHECK_THROWS_AS(load_image(dir / "junk.png"), DecodeError);
  }

  TEST_CASE("transparent pixels composite over white") {
    fixtures::TempDir dir;
    write_file(dir / "clear.png", solid_png(8, 8, 0, 0, 0, 0));
    const SourceImage clear = load_image(dir / "clear.png");
    for (double v : clear.image().values()) REQUIRE(v == 1.0);
  }

  TEST_CASE("skin PNG round trip is bit-identical") {
    fixtures::TempDir dir;
    std::mt19937_64 gen(3);
    for (int i = 0; i < 100; ++i) {
      const SkinTexture s = random_skin(gen, i % 5 == 0 ? SkinLayout::legacy : SkinLayout::modern);
      save_skin(s, dir / "s.png");
      REQUIRE(load_skin(dir / "s.png") == s);
    }
    const SkinTexture legacy(SkinLayout::legacy);
    save_skin(legacy, dir / "legacy.png");
    CHECK(load_rgba(dir / "legacy.png").height == 32);
    CHECK_THROWS_AS(save_skin(legacy, dir / "no" / "such" / "dir.png"), IoError);
  }

  TEST_CASE("embed places the quantized face and nothing else") {
    FaceTexture red;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) red.at(y, x, 0) = 1.0;
    const SkinTexture base(SkinLayout::modern);
    const SkinTexture out = embed_face(red, base);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const bool inside = x >= 8 && x <= 15 && y >= 8 && y <= 15;
        REQUIRE(out.at(y, x) == (inside ? Rgba8{255, 0, 0, 255} : Rgba8{}));
      }
    CHECK(quantize_channel(0.5) == 128);
  }

  TEST_CASE("quantization agrees with an independent rounding oracle") {
    for (int i = 0; i <= 100000; ++i) {
      const double v = i / 100000.0;
      REQUIRE(quantize_channel(v) == oracle::quantize(v));
    }
    CHECK(quantize_channel(-0.2) == 0);
    CHECK(quantize_channel(1.7) == 255);
  }

  TEST_CASE("embed is local and extract is within 1/255 (1000 cases)") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 1000; ++i) {
      const FaceTexture f = fixtures::random_face(gen);
      const SkinTexture base = random_skin(gen, i % 2 ? SkinLayout::legacy : SkinLayout::modern);
      const SkinTexture out = embed_face(f, base);
      for (int y = 0; y < base.height(); ++y)
        for (int x = 0; x < 64; ++x)
          if (x < 8 || x > 15 || y < 8 || y > 15) REQUIRE(out.at(y, x) == base.at(y, x));
      const FaceTexture back = extract_face(out);
      for (std::size_t k = 0; k < kFaceValues; ++k) REQUIRE(std::fabs(back.values()[k] - f.values()[k]) <= 1.0 / 255.0);
    }
  }

  TEST_CASE("extract matches a slicing oracle") {
    std::mt19937_64 gen(8);
    const SkinTexture s = random_skin(gen, SkinLayout::modern);
    const FaceTexture f = extract_face(s);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const Rgba8 p = s.pixels()[(8 + y) * 64 + 8 + x];
        CHECK(f.at(y, x, 0) == p.r / 255.0);
        CHECK(f.at(y, x, 1) == p.g / 255.0);
        CHECK(f.at(y, x, 2) == p.b / 255.0);
      }
    CHECK(extract_face(SkinTexture(SkinLayout::modern, {255, 255, 255, 255})) == FaceTexture(1.0));
    CHECK(extract_face(SkinTexture(SkinLayout::legacy, {0, 0, 0, 255})) == FaceTexture(0.0));
  }

  TEST_CASE("save, reload and extract gives the quantized face") {
    fixtures::TempDir dir;
    std::mt19937_64 gen(12);
    const FaceTexture f = fixtures::random_face(gen);
    save_skin(embed_face(f, default_base_skin()), dir / "skin.png");
    const FaceTexture back = extract_face(load_skin(dir / "skin.png"));
    for (std::size_t k = 0; k < kFaceValues; ++k) CHECK(back.values()[k] == quantize_channel(f.values()[k]) / 255.0);
  }

  TEST_CASE("skin size is validated") {
    std::vector<std::uint8_t> rgba(32 * 32 * 4);
    CHECK_THROWS_AS(SkinTexture::from_rgba(32, 32, rgba), ShapeMismatch);
  }

  TEST_CASE("downsample examples") {
    std::mt19937_64 gen(1);
    const FaceTexture f = fixtures::random_face(gen);
    CHECK(downsample_to_face(f.as_source()) == f);

    CHECK(downsample_to_face(SourceImage(RgbImage(16, 16, 0.25))) == FaceTexture(0.25));

    RgbImage blocks(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) blocks.at(y, x, c) = y % 2 ? 1.0 : 0.0;
    CHECK(downsample_to_face(SourceImage(blocks)) == FaceTexture(0.5));
  }

  TEST_CASE("downsample matches brute-force block averages") {
    std::mt19937_64 gen(2);
    for (auto [h, w] : {std::pair{13, 21}, std::pair{8, 9}, std::pair{40, 24}, std::pair{100, 67}}) {
      const RgbImage img = fixtures::random_image(gen, h, w);
      const FaceTexture f = downsample_to_face(SourceImage(img));
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          for (int c = 0; c < 3; ++c) {
            const double expect = oracle::block_mean(img, y * h / 8, (y + 1) * h / 8, x * w / 8, (x + 1) * w / 8, c);
            REQUIRE(f.at(y, x, c) == doctest::Approx(expect).epsilon(1e-12));
          }
    }
  }

  TEST_CASE("downsample preserves channel means on multiples of 8") {
    std::mt19937_64 gen(4);
    for (int k = 1; k <= 6; ++k) {
      const RgbImage img = fixtures::random_image(gen, 8 * k, 8 * (7 - k));
      const FaceTexture f = downsample_to_face(SourceImage(img));
      for (int c = 0; c < 3; ++c) {
        CHECK(std::fabs(oracle::mean_channel(f.values(), c) - oracle::mean_channel(img.values(), c)) < 1e-6);
      }
    }
  }

  TEST_CASE("face value validation") {
    std::vector<double> v(kFaceValues, 0.5);
    v[7] = 1.5;
    CHECK_THROWS_AS(FaceTexture::from_values(v), InvalidArgument);
    v.pop_back();
    CHECK_THROWS_AS(FaceTexture::from_values(v), ShapeMismatch);
    CHECK_THROWS_AS(SourceImage(RgbImage(7, 30)), TooSmall);
  }

  TEST_CASE("face PNG round trip and skin-sheet crop") {
    fixtures::TempDir dir;
    std::mt19937_64 gen(6);
    const FaceTexture f = fixtures::random_face(gen);
    save_face(f, dir / "f.png");
    const FaceTexture back = load_face(dir / "f.png");
    for (std::size_t k = 0; k < kFaceValues; ++k) CHECK(back.values()[k] == quantize_channel(f.values()[k]) / 255.0);
    save_skin(embed_face(f, default_base_skin()), dir / "skin.png");
    CHECK(load_face(dir / "skin.png") == back);
  }
}
