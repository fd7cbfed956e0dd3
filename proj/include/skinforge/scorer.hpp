#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "skinforge/texture.hpp"

namespace skinforge {

// Non-empty (after trimming) text of at most 256 Unicode code points.
class TextPrompt {
 public:
  explicit TextPrompt(std::string text);
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

// Distance between a face and a prompt; smaller is a better match. score()
// must be deterministic and differentiable in the pixel values.
class TextImageScorer {
 public:
  virtual ~TextImageScorer() = default;

  virtual std::string name() const = 0;
  virtual double score(const FaceTexture& image, const TextPrompt& prompt) const = 0;
  // Writes dScore/dPixel (HWC, 192 values) into `grad` and returns the score.
  virtual double score_with_gradient(const FaceTexture& image, const TextPrompt& prompt,
                                     std::span<double> grad) const = 0;
  // False means callers must serialize score calls on this instance.
  virtual bool concurrent_safe() const { return true; }
};

// 1 - mean red channel. Ignores the prompt.
class MeanRedScorer final : public TextImageScorer {
 public:
  std::string name() const override { return "mean_red"; }
  double score(const FaceTexture& image, const TextPrompt& prompt) const override;
  double score_with_gradient(const FaceTexture& image, const TextPrompt& prompt, std::span<double> grad) const override;
};

// Mean squared distance of every channel value to a target color named in
// the prompt ("red", "dark green", "#33aa10", ...).
class ColorTargetScorer final : public TextImageScorer {
 public:
  std::string name() const override { return "color_target"; }
  double score(const FaceTexture& image, const TextPrompt& prompt) const override;
  double score_with_gradient(const FaceTexture& image, const TextPrompt& prompt, std::span<double> grad) const override;

  // Throws ScorerFailure when the prompt names no known color.
  static std::array<double, 3> target_color(const TextPrompt& prompt);
};

// (mean luma - target)^2 with target 1 for "bright"/"light" prompts and 0
// for "dark" ones.
class BrightnessScorer final : public TextImageScorer {
 public:
  std::string name() const override { return "brightness_target"; }
  double score(const FaceTexture& image, const TextPrompt& prompt) const override;
  double score_with_gradient(const FaceTexture& image, const TextPrompt& prompt, std::span<double> grad) const override;

  static double target_luma(const TextPrompt& prompt);
};

class ConstantScorer final : public TextImageScorer {
 public:
  explicit ConstantScorer(double value = 0.5) : value_(value) {}
  std::string name() const override { return "constant"; }
  double score(const FaceTexture&, const TextPrompt&) const override { return value_; }
  double score_with_gradient(const FaceTexture&, const TextPrompt&, std::span<double> grad) const override;

 private:
  double value_;
};

// Adapter for a pretrained vision-language embedding model. The face is
// nearest-neighbour upsampled to the encoder's input size and the score is
// 1 - cosine(image embedding, text embedding).
class EmbeddingScorer final : public TextImageScorer {
 public:
  struct ImageEncoder {
    int input_size = 224;
    std::function<std::vector<double>(const RgbImage&)> embed;
    // Vector-Jacobian product: dScalar/dImage (HWC) given dScalar/dEmbedding.
    std::function<std::vector<double>(const RgbImage&, std::span<const double>)> vjp;
  };
  using TextEncoder = std::function<std::vector<double>(const std::string&)>;

  EmbeddingScorer(std::string name, ImageEncoder image_encoder, TextEncoder text_encoder,
                  bool concurrent_safe = false);

  std::string name() const override { return name_; }
  double score(const FaceTexture& image, const TextPrompt& prompt) const override;
  double score_with_gradient(const FaceTexture& image, const TextPrompt& prompt, std::span<double> grad) const override;
  bool concurrent_safe() const override { return concurrent_safe_; }

  RgbImage upsample(const FaceTexture& face) const;

 private:
  std::string name_;
  ImageEncoder image_encoder_;
  TextEncoder text_encoder_;
  bool concurrent_safe_;
};

using ScorerFactory = std::function<std::shared_ptr<TextImageScorer>(const nlohmann::json& params)>;

// Name -> factory lookup used by the CLI and the service. The toy scorers
// are registered up front; plug-ins add themselves with register_scorer.
void register_scorer(const std::string& name, ScorerFactory factory);
std::shared_ptr<TextImageScorer> make_scorer(const std::string& name, const nlohmann::json& params = nlohmann::json::object());
std::vector<std::string> scorer_names();

}  // namespace skinforge
