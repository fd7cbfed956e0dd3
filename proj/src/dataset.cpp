#include "skinforge/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

#include "skinforge/error.hpp"
#include "skinforge/image_io.hpp"

namespace skinforge {

namespace fs = std::filesystem;

namespace {

using QuantizedColor = std::array<std::uint8_t, 3>;

QuantizedColor quantized_at(const FaceTexture& face, int y, int x) {
  return {quantize_channel(face.at(y, x, 0)), quantize_channel(face.at(y, x, 1)),
          quantize_channel(face.at(y, x, 2))};
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::optional<FaceTexture> read_face_crop(const fs::path& path) {
  try {
    const Rgba8Image img = load_rgba(path);
    if (img.width == 64 && (img.height == 64 || img.height == 32)) {
      return extract_face(SkinTexture::from_rgba(img.width, img.height, img.rgba));
    }
    if (img.width == kFaceSize && img.height == kFaceSize) {
      FaceTexture face;
      auto dst = face.values();
      for (std::size_t i = 0; i < 64; ++i) {
        for (int c = 0; c < 3; ++c) dst[3 * i + c] = dequantize_channel(img.rgba[4 * i + c]);
      }
      return face;
    }
  } catch (const Error&) {
  }
  return std::nullopt;
}

}  // namespace

ChannelStats channel_stats(std::span<const double> values) {
  if (values.empty() || values.size() % 3 != 0) {
    throw ShapeMismatch("channel_stats needs a non-empty interleaved RGB buffer");
  }
  const std::size_t n = values.size() / 3;
  ChannelStats stats;
  for (int c = 0; c < 3; ++c) {
    // Shifted by the first sample so a constant channel gives exactly sigma 0.
    const double shift = values[c];
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[3 * i + c] - shift;
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = values[3 * i + c] - shift - mean;
      sq += d * d;
    }
    stats.mu[c] = shift + mean;
    stats.sigma[c] = std::sqrt(sq / static_cast<double>(n));
  }
  return stats;
}

ChannelStats channel_stats(const FaceTexture& face) { return channel_stats(std::span<const double>(face.values())); }

ChannelStats channel_stats(const RgbImage& image) { return channel_stats(image.values()); }

bool is_low_variance(const FaceTexture& face, double threshold) {
  const ChannelStats stats = channel_stats(face);
  const double mean_sigma = (stats.sigma[0] + stats.sigma[1] + stats.sigma[2]) / 3.0;
  return mean_sigma < threshold;
}

bool is_monochromatic(const FaceTexture& face, double tolerance) {
  std::map<QuantizedColor, int> counts;
  for (int y = 0; y < kFaceSize; ++y) {
    for (int x = 0; x < kFaceSize; ++x) ++counts[quantized_at(face, y, x)];
  }
  // Ties go to the lexicographically smallest color (first in map order).
  auto mode = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > mode->second) mode = it;
  }
  // The reference is the first pixel (raster order) that falls in the modal
  // bucket, so a constant off-grid face still has distance 0.
  std::array<double, 3> reference{};
  for (int p = 0; p < kFaceSize * kFaceSize; ++p) {
    if (quantized_at(face, p / kFaceSize, p % kFaceSize) == mode->first) {
      for (int c = 0; c < 3; ++c) reference[c] = face.values()[3 * p + c];
      break;
    }
  }
  // Slack for the rounding in q/255 when a tolerance sits exactly on a grid step.
  const double limit = tolerance + 1e-12;
  for (int y = 0; y < kFaceSize; ++y) {
    for (int x = 0; x < kFaceSize; ++x) {
      for (int c = 0; c < 3; ++c) {
        if (std::abs(face.at(y, x, c) - reference[c]) > limit) return false;
      }
    }
  }
  return true;
}

bool is_checkerboard(const FaceTexture& face) {
  std::set<QuantizedColor> distinct;
  for (int y = 0; y < kFaceSize; ++y) {
    for (int x = 0; x < kFaceSize; ++x) distinct.insert(quantized_at(face, y, x));
  }
  if (distinct.size() < 2) return false;

  for (int period : {2, 4}) {
    bool tiled = true;
    for (int y = 0; y < kFaceSize && tiled; ++y) {
      for (int x = 0; x < kFaceSize; ++x) {
        if (quantized_at(face, y, x) != quantized_at(face, y % period, x % period)) {
          tiled = false;
          break;
        }
      }
    }
    if (tiled) return true;
  }
  return false;
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::none: return "none";
    case RejectReason::low_std: return "low_std";
    case RejectReason::checkerboard: return "checkerboard";
    case RejectReason::monochrome: return "monochrome";
    case RejectReason::unreadable: return "unreadable";
  }
  return "none";
}

RejectReason reject_reason_from_string(const std::string& text) {
  for (RejectReason r : {RejectReason::none, RejectReason::low_std, RejectReason::checkerboard,
                         RejectReason::monochrome, RejectReason::unreadable}) {
    if (text == to_string(r)) return r;
  }
  throw InvalidArgument("unknown reject reason '" + text + "'");
}

RejectReason classify_face(const FaceTexture& face, const RefinementConfig& config) {
  if (is_monochromatic(face, config.mono_tolerance)) return RejectReason::monochrome;
  if (is_low_variance(face, config.std_threshold)) return RejectReason::low_std;
  if (is_checkerboard(face)) return RejectReason::checkerboard;
  return RejectReason::none;
}

RefinementReport refine_corpus(const fs::path& input_dir, const RefinementConfig& config) {
  std::error_code ec;
  if (!fs::is_directory(input_dir, ec)) throw IoError("cannot read corpus directory " + input_dir.string());

  std::vector<fs::path> files;
  fs::directory_iterator it(input_dir, ec);
  if (ec) throw IoError("cannot read corpus directory " + input_dir.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  if (config.output_dir) fs::create_directories(*config.output_dir);

  RefinementReport report;
  std::set<std::string> used_names;
  for (const fs::path& file : files) {
    RefinementDecision decision{file, RejectReason::unreadable};
    const std::optional<FaceTexture> face = read_face_crop(file);
    if (face) decision.reason = classify_face(*face, config);

    if (decision.accepted()) {
      ++report.accepted_count;
      if (config.output_dir) {
        std::string name = file.stem().string() + ".png";
        for (int k = 1; used_names.count(name); ++k) name = file.stem().string() + "_" + std::to_string(k) + ".png";
        used_names.insert(name);
        save_face(*face, *config.output_dir / name);
      }
    } else {
      ++report.rejected_count;
    }
    report.decisions.push_back(std::move(decision));
  }

  if (config.output_dir) write_report(report, *config.output_dir / kReportFileName);
  return report;
}

void write_report(const RefinementReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  for (const RefinementDecision& d : report.decisions) {
    nlohmann::json record = {{"path", d.source.string()},
                             {"outcome", d.accepted() ? "accepted" : "rejected"},
                             {"reason", to_string(d.reason)}};
    out << record.dump() << '\n';
  }
}

RefinementReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("no report at " + path.string());
  RefinementReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto record = nlohmann::json::parse(line);
    RefinementDecision d{record.at("path").get<std::string>(),
                         reject_reason_from_string(record.at("reason").get<std::string>())};
    if ((record.at("outcome").get<std::string>() == "accepted") != d.accepted()) {
      throw DecodeError("report record has inconsistent outcome and reason");
    }
    (d.accepted() ? report.accepted_count : report.rejected_count)++;
    report.decisions.push_back(std::move(d));
  }
  return report;
}

std::vector<FaceTexture> load_corpus(const fs::path& corpus_dir) {
  std::error_code ec;
  if (!fs::is_directory(corpus_dir, ec)) throw IoError("cannot read corpus directory " + corpus_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(corpus_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FaceTexture> faces;
  faces.reserve(files.size());
  for (const fs::path& f : files) faces.push_back(load_face(f));
  return faces;
}

}  // namespace skinforge
