#include "skinforge/scorer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <mutex>

#include "skinforge/error.hpp"

namespace skinforge {

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xc0) != 0x80) ++n;
  }
  return n;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : lowercase(text)) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '#') {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::map<std::string, std::array<double, 3>>& color_table() {
  static const std::map<std::string, std::array<double, 3>> table = {
      {"black", {0.0, 0.0, 0.0}},       {"white", {1.0, 1.0, 1.0}},     {"gray", {0.5, 0.5, 0.5}},
      {"grey", {0.5, 0.5, 0.5}},        {"red", {1.0, 0.0, 0.0}},       {"green", {0.0, 0.6, 0.0}},
      {"blue", {0.0, 0.0, 1.0}},        {"yellow", {1.0, 0.9, 0.0}},    {"orange", {1.0, 0.55, 0.0}},
      {"purple", {0.5, 0.0, 0.6}},      {"pink", {1.0, 0.6, 0.75}},     {"brown", {0.45, 0.3, 0.15}},
      {"cyan", {0.0, 0.8, 0.8}},        {"gold", {0.85, 0.7, 0.2}},     {"blond", {0.9, 0.8, 0.5}},
      {"blonde", {0.9, 0.8, 0.5}},      {"silver", {0.75, 0.75, 0.75}}, {"teal", {0.0, 0.5, 0.5}},
  };
  return table;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

void require_grad_size(std::span<double> grad) {
  if (grad.size() != kFaceValues) throw ShapeMismatch("scorer gradient buffer must hold 192 values");
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ScorerFactory>& registry() {
  static std::map<std::string, ScorerFactory> r = {
      {"mean_red", [](const nlohmann::json&) { return std::make_shared<MeanRedScorer>(); }},
      {"color_target", [](const nlohmann::json&) { return std::make_shared<ColorTargetScorer>(); }},
      {"brightness_target", [](const nlohmann::json&) { return std::make_shared<BrightnessScorer>(); }},
      {"constant",
       [](const nlohmann::json& p) { return std::make_shared<ConstantScorer>(p.value("value", 0.5)); }},
  };
  return r;
}

}  // namespace

TextPrompt::TextPrompt(std::string text) : text_(std::move(text)) {
  const bool blank = std::all_of(text_.begin(), text_.end(), [](unsigned char c) { return std::isspace(c); });
  if (blank) throw InvalidArgument("prompt is empty");
  if (utf8_length(text_) > 256) throw InvalidArgument("prompt is longer than 256 characters");
}

double MeanRedScorer::score(const FaceTexture& image, const TextPrompt&) const {
  double sum = 0.0;
  for (int i = 0; i < 64; ++i) sum += image.values()[3 * i];
  return 1.0 - sum / 64.0;
}

double MeanRedScorer::score_with_gradient(const FaceTexture& image, const TextPrompt& prompt,
                                          std::span<double> grad) const {
  require_grad_size(grad);
  std::fill(grad.begin(), grad.end(), 0.0);
  for (int i = 0; i < 64; ++i) grad[3 * i] = -1.0 / 64.0;
  return score(image, prompt);
}

std::array<double, 3> ColorTargetScorer::target_color(const TextPrompt& prompt) {
  for (const std::string& word : words(prompt.text())) {
    if (word.size() == 7 && word[0] == '#') {
      std::array<double, 3> rgb{};
      bool ok = true;
      for (int c = 0; c < 3 && ok; ++c) {
        const int hi = hex_digit(word[1 + 2 * c]), lo = hex_digit(word[2 + 2 * c]);
        ok = hi >= 0 && lo >= 0;
        rgb[c] = (hi * 16 + lo) / 255.0;
      }
      if (ok) return rgb;
    }
    const auto it = color_table().find(word);
    if (it != color_table().end()) return it->second;
  }
  throw ScorerFailure("color_target: prompt '" + prompt.text() + "' names no known color");
}

double ColorTargetScorer::score(const FaceTexture& image, const TextPrompt& prompt) const {
  const auto target = target_color(prompt);
  double sum = 0.0;
  for (std::size_t i = 0; i < kFaceValues; ++i) {
    const double d = image.values()[i] - target[i % 3];
    sum += d * d;
  }
  return sum / static_cast<double>(kFaceValues);
}

double ColorTargetScorer::score_with_gradient(const FaceTexture& image, const TextPrompt& prompt,
                                              std::span<double> grad) const {
  require_grad_size(grad);
  const auto target = target_color(prompt);
  double sum = 0.0;
  for (std::size_t i = 0; i < kFaceValues; ++i) {
    const double d = image.values()[i] - target[i % 3];
    sum += d * d;
    grad[i] = 2.0 * d / static_cast<double>(kFaceValues);
  }
  return sum / static_cast<double>(kFaceValues);
}

double BrightnessScorer::target_luma(const TextPrompt& prompt) {
  for (const std::string& word : words(prompt.text())) {
    if (word == "bright" || word == "brighter" || word == "light" || word == "lighter" || word == "pale") return 1.0;
    if (word == "dark" || word == "darker" || word == "shadowy" || word == "dim") return 0.0;
  }
  throw ScorerFailure("brightness_target: prompt '" + prompt.text() + "' asks for neither bright nor dark");
}

double BrightnessScorer::score(const FaceTexture& image, const TextPrompt& prompt) const {
  const double target = target_luma(prompt);
  double luma = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) luma += kLuma[c] * image.values()[3 * i + c];
  }
  luma /= 64.0;
  return (luma - target) * (luma - target);
}

double BrightnessScorer::score_with_gradient(const FaceTexture& image, const TextPrompt& prompt,
                                             std::span<double> grad) const {
  require_grad_size(grad);
  const double target = target_luma(prompt);
  double luma = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) luma += kLuma[c] * image.values()[3 * i + c];
  }
  luma /= 64.0;
  const double d = luma - target;
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) grad[3 * i + c] = 2.0 * d * kLuma[c] / 64.0;
  }
  return d * d;
}

double ConstantScorer::score_with_gradient(const FaceTexture&, const TextPrompt&, std::span<double> grad) const {
  require_grad_size(grad);
  std::fill(grad.begin(), grad.end(), 0.0);
  return value_;
}

EmbeddingScorer::EmbeddingScorer(std::string name, ImageEncoder image_encoder, TextEncoder text_encoder,
                                 bool concurrent_safe)
    : name_(std::move(name)),
      image_encoder_(std::move(image_encoder)),
      text_encoder_(std::move(text_encoder)),
      concurrent_safe_(concurrent_safe) {
  if (image_encoder_.input_size < kFaceSize) throw InvalidArgument("encoder input size must be at least 8");
  if (!image_encoder_.embed || !image_encoder_.vjp || !text_encoder_) {
    throw InvalidArgument("embedding scorer needs image embed, image vjp and text encoder callbacks");
  }
}

RgbImage EmbeddingScorer::upsample(const FaceTexture& face) const {
  const int size = image_encoder_.input_size;
  RgbImage out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = y * kFaceSize / size;
    for (int x = 0; x < size; ++x) {
      const int sx = x * kFaceSize / size;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = face.at(sy, sx, c);
    }
  }
  return out;
}

double EmbeddingScorer::score(const FaceTexture& image, const TextPrompt& prompt) const {
  std::vector<double> unused(kFaceValues);
  return score_with_gradient(image, prompt, unused);
}

double EmbeddingScorer::score_with_gradient(const FaceTexture& image, const TextPrompt& prompt,
                                            std::span<double> grad) const {
  require_grad_size(grad);
  const RgbImage big = upsample(image);
  const std::vector<double> a = image_encoder_.embed(big);
  const std::vector<double> b = text_encoder_(prompt.text());
  if (a.empty() || a.size() != b.size()) throw ScorerFailure(name_ + ": image and text embedding sizes differ");

  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0.0 || nb == 0.0) throw ScorerFailure(name_ + ": zero-length embedding");
  const double cosine = dot / (na * nb);

  // d(1 - cos)/da = -(b / (|a||b|) - cos * a / |a|^2)
  std::vector<double> d_a(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d_a[i] = -(b[i] / (na * nb) - cosine * a[i] / (na * na));
  const std::vector<double> d_big = image_encoder_.vjp(big, d_a);
  if (d_big.size() != big.values().size()) throw ScorerFailure(name_ + ": encoder gradient has the wrong size");

  std::fill(grad.begin(), grad.end(), 0.0);
  const int size = image_encoder_.input_size;
  for (int y = 0; y < size; ++y) {
    const int sy = y * kFaceSize / size;
    for (int x = 0; x < size; ++x) {
      const int sx = x * kFaceSize / size;
      for (int c = 0; c < 3; ++c) {
        grad[(sy * kFaceSize + sx) * 3 + c] += d_big[(static_cast<std::size_t>(y) * size + x) * 3 + c];
      }
    }
  }
  return 1.0 - cosine;
}

void register_scorer(const std::string& name, ScorerFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::shared_ptr<TextImageScorer> make_scorer(const std::string& name, const nlohmann::json& params) {
  ScorerFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    const auto it = registry().find(name);
    if (it == registry().end()) throw InvalidArgument("unknown scorer '" + name + "'");
    factory = it->second;
  }
  return factory(params);
}

std::vector<std::string> scorer_names() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

}  // namespace skinforge
