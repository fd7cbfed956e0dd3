#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skinforge/texture.hpp"

namespace skinforge {

// Per-channel mean and population standard deviation (divisor N).
struct ChannelStats {
  std::array<double, 3> mu{};
  std::array<double, 3> sigma{};
};

// `values` is interleaved RGB; its length must be a positive multiple of 3.
ChannelStats channel_stats(std::span<const double> values);
ChannelStats channel_stats(const FaceTexture& face);
ChannelStats channel_stats(const RgbImage& image);

bool is_low_variance(const FaceTexture& face, double threshold);
bool is_monochromatic(const FaceTexture& face, double tolerance);
bool is_checkerboard(const FaceTexture& face);

enum class RejectReason { none, low_std, checkerboard, monochrome, unreadable };

const char* to_string(RejectReason reason);
RejectReason reject_reason_from_string(const std::string& text);

struct RefinementDecision {
  std::filesystem::path source;
  RejectReason reason = RejectReason::none;

  bool accepted() const noexcept { return reason == RejectReason::none; }
  bool operator==(const RefinementDecision&) const = default;
};

struct RefinementReport {
  std::vector<RefinementDecision> decisions;
  std::size_t accepted_count = 0;
  std::size_t rejected_count = 0;

  bool operator==(const RefinementReport&) const = default;
};

struct RefinementConfig {
  double std_threshold = 0.02;
  double mono_tolerance = 1.0 / 255.0;
  // When set, accepted faces land here as 8x8 PNGs next to report.jsonl.
  std::optional<std::filesystem::path> output_dir;
};

// Verdict for one face, filters applied as monochrome -> low_std -> checkerboard.
RejectReason classify_face(const FaceTexture& face, const RefinementConfig& config);

// Scans PNG/JPEG files directly inside `input_dir` in path order. Full skin
// sheets are cropped to their face; 8x8 files are used as-is. Files that fail
// to decode or have any other size are rejected as unreadable.
RefinementReport refine_corpus(const std::filesystem::path& input_dir, const RefinementConfig& config);

inline constexpr const char* kReportFileName = "report.jsonl";

void write_report(const RefinementReport& report, const std::filesystem::path& path);
RefinementReport read_report(const std::filesystem::path& path);

// Every 8x8 face in a refined corpus directory, in path order.
std::vector<FaceTexture> load_corpus(const std::filesystem::path& corpus_dir);

}  // namespace skinforge
