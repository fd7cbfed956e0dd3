#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "skinforge/checkpoint.hpp"
#include "skinforge/dataset.hpp"
#include "skinforge/error.hpp"
#include "skinforge/image_io.hpp"
#include "skinforge/inversion.hpp"
#include "skinforge/text_edit.hpp"
#include "skinforge/trainer.hpp"

namespace py = pybind11;
namespace sf = skinforge;
using nlohmann::json;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

DoubleArray face_array(const sf::FaceTexture& face) {
  DoubleArray out({8, 8, 3});
  std::copy(face.values().begin(), face.values().end(), out.mutable_data());
  return out;
}

sf::FaceTexture face_from(const DoubleArray& a) {
  if (a.size() != static_cast<py::ssize_t>(sf::kFaceValues)) throw sf::ShapeMismatch("face must have 8x8x3 values");
  return sf::FaceTexture::from_values(std::span<const double>(a.data(), a.size()));
}

DoubleArray latent_array(const sf::LatentWPlus& w) {
  DoubleArray out({sf::kLevelCount, sf::kLatentDim});
  std::copy(w.values().begin(), w.values().end(), out.mutable_data());
  return out;
}

sf::LatentWPlus latent_from(const DoubleArray& a) {
  return sf::LatentWPlus(std::vector<double>(a.data(), a.data() + a.size()));
}

sf::RgbImage image_from(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw sf::ShapeMismatch("image must be an (H, W, 3) array");
  return sf::RgbImage(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray image_array(const sf::RgbImage& img) {
  DoubleArray out({img.height(), img.width(), 3});
  std::copy(img.values().begin(), img.values().end(), out.mutable_data());
  return out;
}

ByteArray skin_array(const sf::SkinTexture& skin) {
  ByteArray out({skin.height(), 64, 4});
  std::uint8_t* dst = out.mutable_data();
  for (const sf::Rgba8& p : skin.pixels()) {
    *dst++ = p.r;
    *dst++ = p.g;
    *dst++ = p.b;
    *dst++ = p.a;
  }
  return out;
}

sf::SkinTexture skin_from(const ByteArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 4) throw sf::ShapeMismatch("skin must be an (H, 64, 4) uint8 array");
  return sf::SkinTexture::from_rgba(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                                    std::span<const std::uint8_t>(a.data(), a.size()));
}

json parse_json(const std::string& text) { return text.empty() ? json::object() : json::parse(text); }

sf::InitMode init_mode(const std::string& name) {
  if (name == "average") return sf::InitMode::average;
  if (name == "random") return sf::InitMode::random;
  throw sf::InvalidArgument("init must be 'average' or 'random'");
}

}  // namespace

PYBIND11_MODULE(_skinforge, m) {
  m.doc() = "Native core of the skinforge package";

  auto base = py::register_exception<sf::Error>(m, "SkinforgeError", PyExc_RuntimeError);
  py::register_exception<sf::FileNotFound>(m, "FileNotFound", base.ptr());
  py::register_exception<sf::DecodeError>(m, "DecodeError", base.ptr());
  py::register_exception<sf::TooSmall>(m, "TooSmall", base.ptr());
  py::register_exception<sf::IoError>(m, "IoError", base.ptr());
  py::register_exception<sf::InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<sf::ShapeMismatch>(m, "ShapeMismatch", base.ptr());
  py::register_exception<sf::VersionMismatch>(m, "VersionMismatch", base.ptr());
  py::register_exception<sf::ChecksumError>(m, "ChecksumError", base.ptr());
  py::register_exception<sf::NonFiniteLoss>(m, "NonFiniteLoss", base.ptr());
  py::register_exception<sf::EmptyCorpus>(m, "EmptyCorpus", base.ptr());
  py::register_exception<sf::ScorerFailure>(m, "ScorerFailure", base.ptr());

  py::class_<sf::GeneratorWeights>(m, "GeneratorWeights")
      .def_static(
          "initialize",
          [](int mapping_depth, int channels_4, int channels_8, std::uint64_t seed) {
            return sf::GeneratorWeights::initialize({mapping_depth, channels_4, channels_8}, seed);
          },
          py::arg("mapping_depth") = 4, py::arg("channels_4") = 64, py::arg("channels_8") = 32, py::arg("seed") = 0)
      .def_static("load", &sf::load_weights, py::arg("path"))
      .def("save", [](const sf::GeneratorWeights& w, const std::filesystem::path& p) { sf::save_weights(w, p); })
      .def_property_readonly("config",
                             [](const sf::GeneratorWeights& w) {
                               const auto& c = w.config();
                               return py::dict(py::arg("mapping_depth") = c.mapping_depth,
                                               py::arg("channels_4") = c.channels_4,
                                               py::arg("channels_8") = c.channels_8);
                             })
      .def_property_readonly("parameter_count", [](const sf::GeneratorWeights& w) { return w.params().size(); })
      .def_property_readonly("has_cached_average",
                             [](const sf::GeneratorWeights& w) { return w.cached_average().has_value(); })
      .def("ensure_average_latent", [](sf::GeneratorWeights& w) { return sf::ensure_average_latent(w); })
      .def("__eq__", [](const sf::GeneratorWeights& a, const sf::GeneratorWeights& b) { return a == b; });

  m.def(
      "average_latent",
      [](const sf::GeneratorWeights& w, std::optional<int> samples, std::uint64_t seed) {
        if (!samples) return latent_array(sf::resolve_average_latent(w));
        return latent_array(sf::average_latent(w, *samples, sf::NoiseSeed{seed}));
      },
      py::arg("weights"), py::arg("samples") = py::none(), py::arg("seed") = sf::kAverageSeed);
  m.def(
      "map_latent",
      [](const sf::GeneratorWeights& w, const DoubleArray& z) {
        return latent_array(sf::map_latent(w, sf::LatentZ(std::vector<double>(z.data(), z.data() + z.size()))));
      },
      py::arg("weights"), py::arg("z"));
  m.def(
      "sample_random_latent",
      [](const sf::GeneratorWeights& w, double truncation, std::uint64_t seed) {
        return latent_array(sf::sample_random_latent(w, truncation, sf::NoiseSeed{seed}));
      },
      py::arg("weights"), py::arg("truncation") = 1.0, py::arg("seed") = 0);
  m.def(
      "synthesize",
      [](const sf::GeneratorWeights& w, const DoubleArray& latent, std::optional<std::uint64_t> noise_seed) {
        std::optional<sf::NoiseSeed> noise;
        if (noise_seed) noise = sf::NoiseSeed{*noise_seed};
        return face_array(sf::synthesize(w, latent_from(latent), noise));
      },
      py::arg("weights"), py::arg("latent"), py::arg("noise_seed") = py::none());

  m.def(
      "load_image", [](const std::filesystem::path& p) { return image_array(sf::load_image(p).image()); },
      py::arg("path"));
  m.def(
      "downsample_to_face",
      [](const DoubleArray& img) { return face_array(sf::downsample_to_face(sf::SourceImage(image_from(img)))); },
      py::arg("image"));
  m.def(
      "stat_loss",
      [](const DoubleArray& face, const DoubleArray& original) {
        return sf::stat_loss(face_from(face), sf::SourceImage(image_from(original)));
      },
      py::arg("face"), py::arg("original"));

  m.def(
      "invert",
      [](const sf::GeneratorWeights& w, const DoubleArray& image, double lambda_mse, double lambda_stat, int steps,
         double learning_rate, double lr_rampdown, const std::string& init, std::uint64_t seed) {
        sf::InversionConfig cfg;
        cfg.lambda_mse = lambda_mse;
        cfg.lambda_stat = lambda_stat;
        cfg.steps = steps;
        cfg.learning_rate = learning_rate;
        cfg.lr_rampdown = lr_rampdown;
        cfg.init = init_mode(init);
        cfg.seed = seed;
        const sf::SourceImage src(image_from(image));
        sf::InversionResult r;
        {
          py::gil_scoped_release release;
          r = sf::invert(w, src, cfg);
        }
        py::dict out;
        out["latent"] = latent_array(r.latent);
        out["rendered"] = face_array(r.rendered);
        out["final_loss"] = r.final_loss;
        out["mse_term"] = r.mse_term;
        out["stat_term"] = r.stat_term;
        out["best_step"] = r.best_step;
        return out;
      },
      py::arg("weights"), py::arg("image"), py::arg("lambda_mse") = sf::InversionConfig{}.lambda_mse,
      py::arg("lambda_stat") = sf::InversionConfig{}.lambda_stat, py::arg("steps") = sf::InversionConfig{}.steps,
      py::arg("learning_rate") = sf::InversionConfig{}.learning_rate,
      py::arg("lr_rampdown") = sf::InversionConfig{}.lr_rampdown, py::arg("init") = "average",
      py::arg("seed") = 0);

  m.def("scorer_names", &sf::scorer_names);
  m.def(
      "edit",
      [](const sf::GeneratorWeights& w, const DoubleArray& latent, const std::string& prompt, const std::string& scorer,
         const std::string& scorer_params, double lambda_l2, int steps, double learning_rate, std::uint64_t seed) {
        sf::EditConfig cfg;
        cfg.lambda_l2 = lambda_l2;
        cfg.steps = steps;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        const auto s = sf::make_scorer(scorer, parse_json(scorer_params));
        const sf::TextPrompt text(prompt);
        const sf::LatentWPlus start = latent_from(latent);
        sf::EditResult r;
        {
          py::gil_scoped_release release;
          r = sf::edit(w, start, text, *s, cfg);
        }
        py::dict out;
        out["latent"] = latent_array(r.latent);
        out["rendered"] = face_array(r.rendered);
        out["total"] = r.total;
        out["clip_term"] = r.clip_term;
        out["l2_term"] = r.l2_term;
        out["best_step"] = r.best_step;
        return out;
      },
      py::arg("weights"), py::arg("latent"), py::arg("prompt"), py::arg("scorer") = "color_target",
      py::arg("scorer_params") = "", py::arg("lambda_l2") = sf::EditConfig{}.lambda_l2,
      py::arg("steps") = sf::EditConfig{}.steps, py::arg("learning_rate") = sf::EditConfig{}.learning_rate,
      py::arg("seed") = 0);

  m.def(
      "refine_corpus",
      [](const std::filesystem::path& input_dir, std::optional<std::filesystem::path> output_dir, double std_threshold,
         double mono_tolerance) {
        sf::RefinementConfig cfg;
        cfg.std_threshold = std_threshold;
        cfg.mono_tolerance = mono_tolerance;
        cfg.output_dir = std::move(output_dir);
        const sf::RefinementReport report = sf::refine_corpus(input_dir, cfg);
        py::list decisions;
        for (const auto& d : report.decisions) {
          decisions.append(py::make_tuple(d.source.string(), sf::to_string(d.reason)));
        }
        py::dict out;
        out["accepted"] = report.accepted_count;
        out["rejected"] = report.rejected_count;
        out["decisions"] = decisions;
        return out;
      },
      py::arg("input_dir"), py::arg("output_dir") = py::none(),
      py::arg("std_threshold") = sf::RefinementConfig{}.std_threshold,
      py::arg("mono_tolerance") = sf::RefinementConfig{}.mono_tolerance);

  m.def(
      "train",
      [](const std::filesystem::path& corpus_dir, const std::string& config_json) {
        const sf::TrainConfig cfg = sf::train_config_from_json(parse_json(config_json));
        sf::TrainResult r = [&] {
          py::gil_scoped_release release;
          return sf::train(corpus_dir, cfg);
        }();
        py::list log;
        for (const auto& rec : r.log.records) log.append(py::str(sf::to_json(rec).dump()));
        return py::make_tuple(std::move(r.weights), log);
      },
      py::arg("corpus_dir"), py::arg("config_json") = "");

  m.def("default_base_skin", [] { return skin_array(sf::default_base_skin()); });
  m.def(
      "embed_face",
      [](const DoubleArray& face, std::optional<ByteArray> base) {
        return skin_array(sf::embed_face(face_from(face), base ? skin_from(*base) : sf::default_base_skin()));
      },
      py::arg("face"), py::arg("base") = py::none());
  m.def(
      "extract_face", [](const ByteArray& skin) { return face_array(sf::extract_face(skin_from(skin))); },
      py::arg("skin"));
  m.def(
      "load_skin", [](const std::filesystem::path& p) { return skin_array(sf::load_skin(p)); }, py::arg("path"));
  m.def(
      "save_skin", [](const ByteArray& skin, const std::filesystem::path& p) { sf::save_skin(skin_from(skin), p); },
      py::arg("skin"), py::arg("path"));
  m.def(
      "save_face", [](const DoubleArray& face, const std::filesystem::path& p) { sf::save_face(face_from(face), p); },
      py::arg("face"), py::arg("path"));
  m.def(
      "load_face", [](const std::filesystem::path& p) { return face_array(sf::load_face(p)); }, py::arg("path"));
  m.def(
      "save_latent",
      [](const DoubleArray& latent, const std::filesystem::path& p) { sf::save_latent(latent_from(latent), p); },
      py::arg("latent"), py::arg("path"));
  m.def(
      "load_latent", [](const std::filesystem::path& p) { return latent_array(sf::load_latent(p)); },
      py::arg("path"));
}
