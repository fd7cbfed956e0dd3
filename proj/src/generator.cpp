#include "skinforge/generator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skinforge/error.hpp"
#include "nn_ops.hpp"

namespace skinforge {

namespace {

constexpr double kNormEpsilon = 1e-8;
constexpr double kMappingSlope = 0.2;

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " has non-finite entries");
  }
}

void fill_normal(std::span<float> out, Rng& rng, double stddev) {
  for (float& v : out) v = static_cast<float>(rng.normal() * stddev);
}

}  // namespace

LatentZ::LatentZ(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(kLatentDim)) {
    throw ShapeMismatch("z must have 512 entries, got " + std::to_string(values_.size()));
  }
  check_finite(values_, "z");
}

LatentWPlus::LatentWPlus(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() != kWPlusSize) {
    throw ShapeMismatch("W+ latent must have 2x512 entries, got " + std::to_string(values_.size()));
  }
  check_finite(values_, "W+ latent");
}

LatentWPlus LatentWPlus::broadcast(std::span<const double> w) {
  if (w.size() != static_cast<std::size_t>(kLatentDim)) {
    throw ShapeMismatch("style vector must have 512 entries, got " + std::to_string(w.size()));
  }
  std::vector<double> values(kWPlusSize);
  for (int level = 0; level < kLevelCount; ++level) std::copy(w.begin(), w.end(), values.begin() + level * kLatentDim);
  return LatentWPlus(std::move(values));
}

double l2_distance(const LatentWPlus& a, const LatentWPlus& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kWPlusSize; ++i) {
    const double d = a.values()[i] - b.values()[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

double linf_distance(const LatentWPlus& a, const LatentWPlus& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < kWPlusSize; ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

GeneratorLayout::GeneratorLayout(const GeneratorConfig& config) {
  if (config.mapping_depth < 1 || config.channels_4 < 1 || config.channels_8 < 1) {
    throw InvalidArgument("generator config needs mapping_depth and channel counts >= 1");
  }
  auto add = [this](std::string name, std::size_t size) {
    tensors.push_back({std::move(name), total, size});
    total += size;
    return tensors.back().offset;
  };
  const std::size_t dim = kLatentDim;
  for (int l = 0; l < config.mapping_depth; ++l) {
    Dense d;
    d.weight = add("mapping." + std::to_string(l) + ".weight", dim * dim);
    d.bias = add("mapping." + std::to_string(l) + ".bias", dim);
    mapping.push_back(d);
  }
  constant = add("synthesis.constant", static_cast<std::size_t>(config.channels_4) * 16);
  const int channels[kLevelCount] = {config.channels_4, config.channels_8};
  for (int l = 0; l < kLevelCount; ++l) {
    Level& lv = levels[l];
    lv.in_channels = config.channels_4;
    lv.channels = channels[l];
    lv.resolution = 4 << l;
    const std::string prefix = "synthesis." + std::to_string(lv.resolution) + ".";
    const std::size_t c = lv.channels;
    lv.conv_weight = add(prefix + "conv.weight", c * lv.in_channels * 9);
    lv.conv_bias = add(prefix + "conv.bias", c);
    lv.noise_scale = add(prefix + "noise_scale", c);
    lv.style_weight = add(prefix + "style.weight", 2 * c * dim);
    lv.style_bias = add(prefix + "style.bias", 2 * c);
    lv.rgb_weight = add(prefix + "to_rgb.weight", 3 * c);
    lv.rgb_bias = add(prefix + "to_rgb.bias", 3);
  }
}

GeneratorWeights::GeneratorWeights(const GeneratorConfig& config, std::vector<float> params)
    : config_(config), layout_(config), params_(std::move(params)) {
  if (params_.size() != layout_.total) {
    throw ShapeMismatch("generator expects " + std::to_string(layout_.total) + " parameters, got " +
                        std::to_string(params_.size()));
  }
}

GeneratorWeights GeneratorWeights::initialize(const GeneratorConfig& config, std::uint64_t seed) {
  const GeneratorLayout layout(config);
  std::vector<float> params(layout.total, 0.0f);
  Rng rng(seed);
  auto slice = [&](std::size_t offset, std::size_t size) { return std::span<float>(params.data() + offset, size); };
  const double dim = kLatentDim;

  for (std::size_t l = 0; l < layout.mapping.size(); ++l) {
    const bool last = l + 1 == layout.mapping.size();
    fill_normal(slice(layout.mapping[l].weight, kLatentDim * kLatentDim), rng, std::sqrt((last ? 1.0 : 2.0) / dim));
  }
  fill_normal(slice(layout.constant, static_cast<std::size_t>(config.channels_4) * 16), rng, 1.0);
  for (const auto& lv : layout.levels) {
    const std::size_t c = lv.channels;
    fill_normal(slice(lv.conv_weight, c * lv.in_channels * 9), rng, std::sqrt(2.0 / (lv.in_channels * 9.0)));
    fill_normal(slice(lv.style_weight, 2 * c * kLatentDim), rng, std::sqrt(1.0 / dim));
    auto style_bias = slice(lv.style_bias, 2 * c);
    std::fill(style_bias.begin(), style_bias.begin() + c, 1.0f);
    fill_normal(slice(lv.rgb_weight, 3 * c), rng, std::sqrt(1.0 / c));
  }
  return GeneratorWeights(config, std::move(params));
}

NoiseMaps NoiseMaps::from_seed(NoiseSeed seed) {
  Rng rng(seed.value);
  return sample(rng);
}

NoiseMaps NoiseMaps::sample(Rng& rng) {
  NoiseMaps maps;
  for (double& v : maps.level4) v = rng.normal();
  for (double& v : maps.level8) v = rng.normal();
  return maps;
}

LatentZ sample_z(Rng& rng) {
  std::vector<double> z(kLatentDim);
  for (double& v : z) v = rng.normal();
  return LatentZ(std::move(z));
}

MappingPass::MappingPass(const GeneratorWeights& weights, std::span<const double> z) : weights_(&weights) {
  if (z.size() != static_cast<std::size_t>(kLatentDim)) {
    throw ShapeMismatch("z must have 512 entries, got " + std::to_string(z.size()));
  }
  double mean_sq = 0.0;
  for (double v : z) mean_sq += v * v;
  mean_sq /= kLatentDim;
  const double inv = 1.0 / std::sqrt(mean_sq + kNormEpsilon);
  std::vector<double> x(kLatentDim);
  for (int i = 0; i < kLatentDim; ++i) x[i] = z[i] * inv;
  activations_.push_back(std::move(x));

  const auto& layers = weights.layout().mapping;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool last = l + 1 == layers.size();
    const auto w = weights.tensor(layers[l].weight, kLatentDim * kLatentDim);
    const auto b = weights.tensor(layers[l].bias, kLatentDim);
    const std::vector<double>& prev = activations_.back();
    std::vector<double> pre(kLatentDim), act(kLatentDim);
    for (int o = 0; o < kLatentDim; ++o) {
      const float* row = w.data() + static_cast<std::size_t>(o) * kLatentDim;
      double acc = b[o];
      for (int i = 0; i < kLatentDim; ++i) acc += row[i] * prev[i];
      pre[o] = acc;
      act[o] = last || acc >= 0.0 ? acc : kMappingSlope * acc;
    }
    pre_.push_back(std::move(pre));
    activations_.push_back(std::move(act));
  }
}

void MappingPass::backward(std::span<const double> d_w, std::span<double> param_grads) const {
  const auto& layers = weights_->layout().mapping;
  std::vector<double> grad(d_w.begin(), d_w.end());
  std::vector<double> d_prev(kLatentDim);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const bool last = l + 1 == layers.size();
    const std::vector<double>& pre = pre_[l];
    const std::vector<double>& prev = activations_[l];
    if (!last) {
      for (int o = 0; o < kLatentDim; ++o) {
        if (pre[o] < 0.0) grad[o] *= kMappingSlope;
      }
    }
    const auto w = weights_->tensor(layers[l].weight, kLatentDim * kLatentDim);
    double* dw = param_grads.data() + layers[l].weight;
    double* db = param_grads.data() + layers[l].bias;
    std::fill(d_prev.begin(), d_prev.end(), 0.0);
    for (int o = 0; o < kLatentDim; ++o) {
      const double g = grad[o];
      db[o] += g;
      if (g == 0.0) continue;
      const float* row = w.data() + static_cast<std::size_t>(o) * kLatentDim;
      double* dwrow = dw + static_cast<std::size_t>(o) * kLatentDim;
      for (int i = 0; i < kLatentDim; ++i) {
        dwrow[i] += g * prev[i];
        d_prev[i] += g * row[i];
      }
    }
    grad.swap(d_prev);
  }
}

LatentWPlus map_latent(const GeneratorWeights& weights, const LatentZ& z) {
  const MappingPass pass(weights, z.values());
  return LatentWPlus::broadcast(pass.w());
}

SynthesisPass::SynthesisPass(const GeneratorWeights& weights, const LatentWPlus& w, const NoiseMaps& noise,
                             int resolution)
    : weights_(&weights), w_(w), noise_(noise), resolution_(resolution) {
  if (resolution != 4 && resolution != 8) throw ShapeMismatch("synthesis resolution must be 4 or 8");
  if (noise.level4.size() != 16 || noise.level8.size() != 64) throw ShapeMismatch("noise maps must be 4x4 and 8x8");
  const GeneratorLayout& layout = weights.layout();
  const int top = resolution == 4 ? 0 : 1;

  for (int l = 0; l <= top; ++l) {
    const auto& lv = layout.levels[l];
    LevelState& st = levels_[l];
    const int res = lv.resolution, area = res * res, ch = lv.channels;

    if (l == 0) {
      const auto c = weights.tensor(layout.constant, static_cast<std::size_t>(lv.in_channels) * 16);
      st.input.assign(c.begin(), c.end());
    } else {
      // Nearest-neighbour 2x upsample of the previous level's styled output.
      const std::vector<double>& prev = levels_[l - 1].out;
      const int pres = res / 2;
      st.input.assign(static_cast<std::size_t>(lv.in_channels) * area, 0.0);
      for (int i = 0; i < lv.in_channels; ++i) {
        for (int y = 0; y < res; ++y) {
          for (int x = 0; x < res; ++x) {
            st.input[static_cast<std::size_t>(i) * area + y * res + x] =
                prev[static_cast<std::size_t>(i) * pres * pres + (y / 2) * pres + x / 2];
          }
        }
      }
    }

    st.pre.assign(static_cast<std::size_t>(ch) * area, 0.0);
    nn::conv3x3(st.input, lv.in_channels, res, weights.tensor(lv.conv_weight, static_cast<std::size_t>(ch) * lv.in_channels * 9),
            weights.tensor(lv.conv_bias, ch), ch, st.pre);
    const std::vector<double>& nmap = l == 0 ? noise_.level4 : noise_.level8;
    const auto nscale = weights.tensor(lv.noise_scale, ch);
    for (int o = 0; o < ch; ++o) {
      if (nscale[o] == 0.0f) continue;
      for (int p = 0; p < area; ++p) st.pre[static_cast<std::size_t>(o) * area + p] += nscale[o] * nmap[p];
    }

    st.act.resize(st.pre.size());
    for (std::size_t k = 0; k < st.pre.size(); ++k) st.act[k] = nn::silu(st.pre[k]);

    // Style affine: [scale; shift] = A * w_level + b.
    const auto sw = weights.tensor(lv.style_weight, 2 * static_cast<std::size_t>(ch) * kLatentDim);
    const auto sb = weights.tensor(lv.style_bias, 2 * static_cast<std::size_t>(ch));
    const auto wrow = w_.row(l);
    std::vector<double> style(2 * ch);
    for (int k = 0; k < 2 * ch; ++k) {
      const float* row = sw.data() + static_cast<std::size_t>(k) * kLatentDim;
      double acc = sb[k];
      for (int j = 0; j < kLatentDim; ++j) acc += row[j] * wrow[j];
      style[k] = acc;
    }
    st.scale.assign(style.begin(), style.begin() + ch);

    st.normed.resize(st.act.size());
    st.inv_std.resize(ch);
    st.out.resize(st.act.size());
    for (int o = 0; o < ch; ++o) {
      const double* a = st.act.data() + static_cast<std::size_t>(o) * area;
      double mean = 0.0;
      for (int p = 0; p < area; ++p) mean += a[p];
      mean /= area;
      double var = 0.0;
      for (int p = 0; p < area; ++p) var += (a[p] - mean) * (a[p] - mean);
      var /= area;
      const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
      st.inv_std[o] = inv;
      for (int p = 0; p < area; ++p) {
        const std::size_t k = static_cast<std::size_t>(o) * area + p;
        st.normed[k] = (a[p] - mean) * inv;
        st.out[k] = style[o] * st.normed[k] + style[ch + o];
      }
    }
  }

  const auto& lv = layout.levels[top];
  const int area = lv.resolution * lv.resolution, ch = lv.channels;
  const auto rw = weights.tensor(lv.rgb_weight, 3 * static_cast<std::size_t>(ch));
  const auto rb = weights.tensor(lv.rgb_bias, 3);
  rgb_pre_.assign(static_cast<std::size_t>(area) * 3, 0.0);
  rgb_.resize(rgb_pre_.size());
  const std::vector<double>& feat = levels_[top].out;
  for (int p = 0; p < area; ++p) {
    for (int c = 0; c < 3; ++c) {
      double acc = rb[c];
      for (int o = 0; o < ch; ++o) acc += rw[static_cast<std::size_t>(c) * ch + o] * feat[static_cast<std::size_t>(o) * area + p];
      rgb_pre_[3 * p + c] = acc;
      rgb_[3 * p + c] = 0.5 * (std::tanh(acc) + 1.0);
    }
  }
}

FaceTexture SynthesisPass::face() const {
  if (resolution_ != kFaceSize) throw ShapeMismatch("face() needs an 8x8 synthesis pass");
  FaceTexture face;
  std::copy(rgb_.begin(), rgb_.end(), face.values().begin());
  return face;
}

RgbImage SynthesisPass::image() const { return RgbImage(resolution_, resolution_, rgb_); }

LatentWPlus SynthesisPass::backward(std::span<const double> d_output, std::span<double> param_grads) const {
  if (d_output.size() != rgb_.size()) throw ShapeMismatch("output gradient has the wrong size");
  const bool want_params = !param_grads.empty();
  const GeneratorWeights& weights = *weights_;
  const GeneratorLayout& layout = weights.layout();
  if (want_params && param_grads.size() != layout.total) throw ShapeMismatch("parameter gradient has the wrong size");
  auto pg = [&](std::size_t offset, std::size_t size) {
    return want_params ? param_grads.subspan(offset, size) : std::span<double>();
  };

  const int top = resolution_ == 4 ? 0 : 1;
  LatentWPlus d_w;
  std::fill(d_w.values().begin(), d_w.values().end(), 0.0);

  // to_rgb
  const auto& tl = layout.levels[top];
  const int tarea = tl.resolution * tl.resolution, tch = tl.channels;
  const auto rw = weights.tensor(tl.rgb_weight, 3 * static_cast<std::size_t>(tch));
  std::vector<double> d_feat(static_cast<std::size_t>(tch) * tarea, 0.0);
  {
    auto g_rw = pg(tl.rgb_weight, 3 * static_cast<std::size_t>(tch));
    auto g_rb = pg(tl.rgb_bias, 3);
    const std::vector<double>& feat = levels_[top].out;
    for (int p = 0; p < tarea; ++p) {
      for (int c = 0; c < 3; ++c) {
        const double t = std::tanh(rgb_pre_[3 * p + c]);
        const double g = d_output[3 * p + c] * 0.5 * (1.0 - t * t);
        if (g == 0.0) continue;
        if (want_params) g_rb[c] += g;
        for (int o = 0; o < tch; ++o) {
          const std::size_t k = static_cast<std::size_t>(o) * tarea + p;
          d_feat[k] += rw[static_cast<std::size_t>(c) * tch + o] * g;
          if (want_params) g_rw[static_cast<std::size_t>(c) * tch + o] += g * feat[k];
        }
      }
    }
  }

  for (int l = top; l >= 0; --l) {
    const auto& lv = layout.levels[l];
    const LevelState& st = levels_[l];
    const int res = lv.resolution, area = res * res, ch = lv.channels;

    // Style: out = scale * normed + shift.
    std::vector<double> d_style(2 * ch, 0.0);
    std::vector<double> d_normed(d_feat.size());
    for (int o = 0; o < ch; ++o) {
      double ds = 0.0, dt = 0.0;
      for (int p = 0; p < area; ++p) {
        const std::size_t k = static_cast<std::size_t>(o) * area + p;
        ds += d_feat[k] * st.normed[k];
        dt += d_feat[k];
        d_normed[k] = d_feat[k] * st.scale[o];
      }
      d_style[o] = ds;
      d_style[ch + o] = dt;
    }
    const auto sw = weights.tensor(lv.style_weight, 2 * static_cast<std::size_t>(ch) * kLatentDim);
    auto d_wrow = d_w.row(l);
    const auto wrow = w_.row(l);
    auto g_sw = pg(lv.style_weight, 2 * static_cast<std::size_t>(ch) * kLatentDim);
    auto g_sb = pg(lv.style_bias, 2 * static_cast<std::size_t>(ch));
    for (int k = 0; k < 2 * ch; ++k) {
      const double g = d_style[k];
      if (want_params) g_sb[k] += g;
      if (g == 0.0) continue;
      const float* row = sw.data() + static_cast<std::size_t>(k) * kLatentDim;
      for (int j = 0; j < kLatentDim; ++j) d_wrow[j] += row[j] * g;
      if (want_params) {
        double* grow = g_sw.data() + static_cast<std::size_t>(k) * kLatentDim;
        for (int j = 0; j < kLatentDim; ++j) grow[j] += g * wrow[j];
      }
    }

    // Nothing upstream of level 0 depends on w; stop unless training.
    if (l == 0 && !want_params) break;

    // Instance norm, then activation.
    std::vector<double> d_pre(d_feat.size());
    for (int o = 0; o < ch; ++o) {
      const std::size_t base = static_cast<std::size_t>(o) * area;
      double mean_g = 0.0, mean_gn = 0.0;
      for (int p = 0; p < area; ++p) {
        mean_g += d_normed[base + p];
        mean_gn += d_normed[base + p] * st.normed[base + p];
      }
      mean_g /= area;
      mean_gn /= area;
      for (int p = 0; p < area; ++p) {
        const double d_act = st.inv_std[o] * (d_normed[base + p] - mean_g - st.normed[base + p] * mean_gn);
        d_pre[base + p] = d_act * nn::silu_grad(st.pre[base + p]);
      }
    }

    if (want_params) {
      auto g_ns = pg(lv.noise_scale, ch);
      const std::vector<double>& nmap = l == 0 ? noise_.level4 : noise_.level8;
      for (int o = 0; o < ch; ++o) {
        double acc = 0.0;
        for (int p = 0; p < area; ++p) acc += d_pre[static_cast<std::size_t>(o) * area + p] * nmap[p];
        g_ns[o] += acc;
      }
    }

    std::vector<double> d_input(st.input.size(), 0.0);
    const auto cw = weights.tensor(lv.conv_weight, static_cast<std::size_t>(ch) * lv.in_channels * 9);
    nn::conv3x3_backward(st.input, lv.in_channels, res, cw, ch, d_pre, d_input,
                     pg(lv.conv_weight, static_cast<std::size_t>(ch) * lv.in_channels * 9), pg(lv.conv_bias, ch));

    if (l == 0) {
      auto g_const = pg(layout.constant, d_input.size());
      for (std::size_t k = 0; k < d_input.size(); ++k) g_const[k] += d_input[k];
    } else {
      // Adjoint of the nearest-neighbour upsample.
      const int pres = res / 2;
      std::vector<double> d_prev(static_cast<std::size_t>(lv.in_channels) * pres * pres, 0.0);
      for (int i = 0; i < lv.in_channels; ++i) {
        for (int y = 0; y < res; ++y) {
          for (int x = 0; x < res; ++x) {
            d_prev[static_cast<std::size_t>(i) * pres * pres + (y / 2) * pres + x / 2] +=
                d_input[static_cast<std::size_t>(i) * area + y * res + x];
          }
        }
      }
      d_feat.swap(d_prev);
    }
  }
  return d_w;
}

FaceTexture synthesize(const GeneratorWeights& weights, const LatentWPlus& w, std::optional<NoiseSeed> noise) {
  const NoiseMaps maps = noise ? NoiseMaps::from_seed(*noise) : NoiseMaps::zero();
  return SynthesisPass(weights, w, maps, kFaceSize).face();
}

LatentWPlus average_latent(const GeneratorWeights& weights, int n_samples, NoiseSeed seed) {
  if (n_samples < 1) throw InvalidArgument("average_latent needs n_samples >= 1");
  Rng rng(seed.value);
  std::vector<double> sum(kLatentDim, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    const LatentZ z = sample_z(rng);
    const MappingPass pass(weights, z.values());
    const auto w = pass.w();
    for (int j = 0; j < kLatentDim; ++j) sum[j] += w[j];
  }
  for (double& v : sum) v /= n_samples;
  return LatentWPlus::broadcast(sum);
}

LatentWPlus resolve_average_latent(const GeneratorWeights& weights) {
  if (weights.cached_average()) return *weights.cached_average();
  return average_latent(weights, kAverageSamples, NoiseSeed{kAverageSeed});
}

bool ensure_average_latent(GeneratorWeights& weights) {
  if (weights.cached_average()) return false;
  weights.set_cached_average(average_latent(weights, kAverageSamples, NoiseSeed{kAverageSeed}));
  return true;
}

LatentWPlus sample_random_latent(const GeneratorWeights& weights, double truncation, NoiseSeed seed) {
  if (!(truncation >= 0.0 && truncation <= 1.0)) throw InvalidArgument("truncation must be in [0,1]");
  Rng rng(seed.value);
  const LatentWPlus mapped = map_latent(weights, sample_z(rng));
  const LatentWPlus mean = resolve_average_latent(weights);
  std::vector<double> out(kWPlusSize);
  // This form is exact at both ends: 0 gives the mean, 1 gives the mapped sample.
  for (std::size_t i = 0; i < kWPlusSize; ++i) {
    out[i] = (1.0 - truncation) * mean.values()[i] + truncation * mapped.values()[i];
  }
  return LatentWPlus(std::move(out));
}

}  // namespace skinforge
