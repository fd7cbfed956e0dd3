#pragma once

// Labelled face fixtures for the refinement pipeline. Every value sits on the
// 8-bit grid so the labels survive a PNG round trip.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "skinforge/dataset.hpp"
#include "skinforge/image_io.hpp"
#include "skinforge/texture.hpp"

namespace fixtures {

inline double q(int level) { return level / 255.0; }

inline skinforge::FaceTexture monochrome_face(std::mt19937_64& gen, bool jitter) {
  std::uniform_int_distribution<int> level(1, 254);
  const int base[3] = {level(gen), level(gen), level(gen)};
  skinforge::FaceTexture f;
  std::uniform_int_distribution<int> step(-1, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = q(base[c] + (jitter && (x + y) % 3 == 0 ? step(gen) : 0));
  return f;
}

inline skinforge::FaceTexture checker_face(std::mt19937_64& gen, int period) {
  std::uniform_int_distribution<int> level(0, 255);
  skinforge::FaceTexture f;
  int tile[4][4][3];
  for (auto& row : tile)
    for (auto& px : row)
      for (int& v : px) v = level(gen);
  tile[0][0][0] = 0;  // guarantee two distinct colors
  tile[period - 1][period - 1][0] = 255;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = q(tile[y % period][x % period][c]);
  return f;
}

inline skinforge::FaceTexture classic_checkerboard() {
  skinforge::FaceTexture f;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = (x + y) % 2 ? 1.0 : 0.0;
  return f;
}

// Flat color with three pixels nudged in one channel: not monochrome at the
// default tolerance, but far below the default std threshold.
inline skinforge::FaceTexture low_std_face(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> level(20, 200);
  const int base[3] = {level(gen), level(gen), level(gen)};
  skinforge::FaceTexture f;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = q(base[c]);
  const int c = static_cast<int>(gen() % 3);
  f.at(1, 2, c) = q(base[c] + 12);
  f.at(5, 3, c) = q(base[c] + 9);
  f.at(6, 7, c) = q(base[c] + 13);
  return f;
}

// Shaded gradient with per-pixel grain, like a drawn face.
inline skinforge::FaceTexture natural_face(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> base(40, 160), grain(-25, 25);
  const int b[3] = {base(gen), base(gen), base(gen)};
  skinforge::FaceTexture f;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = q(std::clamp(b[c] + 6 * y - 3 * x + grain(gen), 0, 255));
  return f;
}

struct LabelledFile {
  std::string name;
  skinforge::RejectReason label;
};

// 10 monochrome, 10 checkerboard (p = 2 and 4), 10 low-std, 20 natural,
// alternating between full skin sheets and bare 8x8 faces.
inline std::vector<LabelledFile> write_labelled_corpus(const std::filesystem::path& dir, std::uint64_t seed) {
  using skinforge::RejectReason;
  std::filesystem::create_directories(dir);
  std::mt19937_64 gen(seed);
  std::vector<LabelledFile> files;
  int index = 0;
  auto emit = [&](const skinforge::FaceTexture& face, RejectReason label) {
    const std::string name = "item_" + std::to_string(100 + index) + ".png";
    if (index % 2 == 0) {
      skinforge::save_skin(skinforge::embed_face(face, skinforge::default_base_skin()), dir / name);
    } else {
      skinforge::save_face(face, dir / name);
    }
    files.push_back({name, label});
    ++index;
  };
  for (int i = 0; i < 10; ++i) emit(monochrome_face(gen, i % 2 == 1), RejectReason::monochrome);
  for (int i = 0; i < 10; ++i) emit(checker_face(gen, i % 2 ? 4 : 2), RejectReason::checkerboard);
  for (int i = 0; i < 10; ++i) emit(low_std_face(gen), RejectReason::low_std);
  for (int i = 0; i < 20; ++i) emit(natural_face(gen), RejectReason::none);
  return files;
}

}  // namespace fixtures
