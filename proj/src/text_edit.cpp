#include "skinforge/text_edit.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "skinforge/adam.hpp"
#include "skinforge/error.hpp"

namespace skinforge {

namespace {

template <typename Fn>
auto call_scorer(const TextImageScorer& scorer, Fn&& fn) {
  try {
    return fn();
  } catch (const ScorerFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw ScorerFailure("scorer '" + scorer.name() + "' failed: " + e.what());
  }
}

}  // namespace

void validate(const EditConfig& cfg) {
  if (!(cfg.lambda_l2 >= 0.0)) throw InvalidArgument("lambda_l2 must be >= 0");
  if (cfg.steps < 0) throw InvalidArgument("steps must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
}

EditTerms edit_objective(const GeneratorWeights& weights, const LatentWPlus& w_fin, const LatentWPlus& w_star,
                         const TextPrompt& prompt, const TextImageScorer& scorer, double lambda_l2) {
  const FaceTexture render = synthesize(weights, w_fin);
  EditTerms terms;
  terms.clip_term = call_scorer(scorer, [&] { return scorer.score(render, prompt); });
  terms.l2_term = l2_distance(w_fin, w_star);
  terms.total = terms.clip_term + lambda_l2 * terms.l2_term;
  return terms;
}

EditTerms edit_objective_gradient(const GeneratorWeights& weights, const LatentWPlus& w_fin, const LatentWPlus& w_star,
                                  const TextPrompt& prompt, const TextImageScorer& scorer, double lambda_l2,
                                  LatentWPlus& grad) {
  const SynthesisPass pass(weights, w_fin, NoiseMaps::zero());
  const FaceTexture render = pass.face();
  std::vector<double> d_image(kFaceValues, 0.0);
  EditTerms terms;
  terms.clip_term = call_scorer(scorer, [&] { return scorer.score_with_gradient(render, prompt, d_image); });
  grad = pass.backward(d_image);

  terms.l2_term = l2_distance(w_fin, w_star);
  terms.total = terms.clip_term + lambda_l2 * terms.l2_term;
  if (terms.l2_term > 0.0) {
    const double k = lambda_l2 / terms.l2_term;
    for (std::size_t i = 0; i < kWPlusSize; ++i) {
      grad.values()[i] += k * (w_fin.values()[i] - w_star.values()[i]);
    }
  }
  return terms;
}

EditResult edit(const GeneratorWeights& weights, const LatentWPlus& w_star, const TextPrompt& prompt,
                const TextImageScorer& scorer, const EditConfig& cfg, const ProgressFn& progress) {
  validate(cfg);
  LatentWPlus w = w_star;
  Adam adam(kWPlusSize, AdamOptions{cfg.learning_rate, 0.9, 0.999, 1e-8});

  EditResult result;
  if (cfg.record_trajectory) result.trajectory.emplace();
  bool have_best = false;
  LatentWPlus grad;

  auto consider = [&](const EditTerms& terms, int step) {
    if (!std::isfinite(terms.total)) {
      throw NonFiniteLoss("edit objective became non-finite at step " + std::to_string(step));
    }
    if (!have_best || terms.total < result.total) {
      have_best = true;
      result.latent = w;
      result.total = terms.total;
      result.clip_term = terms.clip_term;
      result.l2_term = terms.l2_term;
      result.best_step = step;
    }
  };

  for (int step = 0; step < cfg.steps; ++step) {
    const EditTerms terms = edit_objective_gradient(weights, w, w_star, prompt, scorer, cfg.lambda_l2, grad);
    consider(terms, step);
    if (result.trajectory) result.trajectory->push_back({step, terms.total, terms.clip_term, terms.l2_term});
    adam.step(w.values(), std::span<const double>(grad.values()));
    if (progress) progress(step + 1, cfg.steps);
  }
  for (double v : w.values()) {
    if (!std::isfinite(v)) throw NonFiniteLoss("latent became non-finite at step " + std::to_string(cfg.steps));
  }
  consider(edit_objective(weights, w, w_star, prompt, scorer, cfg.lambda_l2), cfg.steps);

  result.rendered = synthesize(weights, result.latent);
  return result;
}

LatentWPlus resolve_source(const GeneratorWeights& weights, const EditSource& source) {
  switch (source.kind) {
    case EditSource::Kind::average:
      return resolve_average_latent(weights);
    case EditSource::Kind::random:
      return sample_random_latent(weights, source.truncation, NoiseSeed{source.seed});
    case EditSource::Kind::latent:
      if (!source.latent) throw InvalidArgument("latent edit source carries no latent");
      return *source.latent;
  }
  throw InvalidArgument("unknown edit source");
}

EditResult edit_from_source(const GeneratorWeights& weights, const EditSource& source, const TextPrompt& prompt,
                            const TextImageScorer& scorer, const EditConfig& cfg, const ProgressFn& progress) {
  return edit(weights, resolve_source(weights, source), prompt, scorer, cfg, progress);
}

void write_trajectory(const std::vector<EditPoint>& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write trajectory " + path.string());
  for (const EditPoint& p : trajectory) {
    nlohmann::json record = {{"step", p.step}, {"total", p.total}, {"clip_term", p.clip_term}, {"l2_term", p.l2_term}};
    out << record.dump() << '\n';
  }
}

}  // namespace skinforge
