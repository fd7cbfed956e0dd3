// Command-line front end: refine, train, invert, edit, generate, assemble, serve.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "skinforge/checkpoint.hpp"
#include "skinforge/dataset.hpp"
#include "skinforge/error.hpp"
#include "skinforge/generator.hpp"
#include "skinforge/image_io.hpp"
#include "skinforge/inversion.hpp"
#include "skinforge/scorer.hpp"
#include "skinforge/service.hpp"
#include "skinforge/text_edit.hpp"
#include "skinforge/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skinforge;

namespace {

// Bad flag values found after parsing; reported like a parse error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto checked(F f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

struct Output {
  bool as_json = false;

  void emit(const json& record, const std::string& human) const {
    if (as_json) {
      std::cout << record.dump() << std::endl;
    } else {
      std::cout << human << std::endl;
    }
  }
};

// Loads weights and fills the cached mean latent when it is missing, writing
// it back so later runs skip the computation.
GeneratorWeights open_weights(const fs::path& path) {
  GeneratorWeights weights = load_weights(path);
  if (ensure_average_latent(weights)) {
    try {
      save_weights(weights, path);
    } catch (const Error& e) {
      std::cerr << "warning: could not cache the average latent in " << path << ": " << e.what() << '\n';
    }
  }
  return weights;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json scorer_params_from(const std::string& text) {
  if (text.empty()) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("--scorer-params is not valid JSON: ") + e.what());
  }
}

struct RefineArgs {
  std::string in, out;
  double std_threshold = RefinementConfig{}.std_threshold;
  double mono_tol = RefinementConfig{}.mono_tolerance;
};

void run_refine(const RefineArgs& a, const Output& out) {
  if (a.std_threshold < 0.0 || a.mono_tol < 0.0) throw UsageError("thresholds must be non-negative");
  RefinementConfig cfg;
  cfg.std_threshold = a.std_threshold;
  cfg.mono_tolerance = a.mono_tol;
  cfg.output_dir = a.out;
  const RefinementReport report = refine_corpus(a.in, cfg);
  const fs::path report_path = fs::path(a.out) / kReportFileName;
  out.emit({{"command", "refine"},
            {"accepted", report.accepted_count},
            {"rejected", report.rejected_count},
            {"report", report_path.string()}},
           "accepted=" + std::to_string(report.accepted_count) + " rejected=" + std::to_string(report.rejected_count));
}

struct TrainArgs {
  std::string corpus, config, out, log, samples;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a, const Output& out) {
  TrainConfig cfg = checked([&] {
    if (a.config.empty()) return TrainConfig{};
    const Bytes bytes = read_file(a.config);
    json j;
    try {
      j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
      throw UsageError("--config is not valid JSON: " + std::string(e.what()));
    }
    return train_config_from_json(j);
  });
  if (a.seed) cfg.seed = *a.seed;
  if (!a.log.empty()) cfg.log_path = a.log;
  if (!a.samples.empty()) {
    cfg.sample_dir = a.samples;
    if (cfg.sample_interval == 0) cfg.sample_interval = 100;
  }
  checked([&] {
    validate(cfg);
    return 0;
  });
  TrainResult result = train(fs::path(a.corpus), cfg);
  ensure_average_latent(result.weights);
  save_weights(result.weights, a.out);
  json record = {{"command", "train"}, {"weights", a.out}, {"iterations", result.log.records.size()}};
  std::string human = "trained " + std::to_string(result.log.records.size()) + " iterations -> " + a.out;
  if (!result.log.records.empty()) {
    const TrainRecord& last = result.log.records.back();
    record["final_generator_loss"] = last.generator_loss;
    record["final_discriminator_loss"] = last.discriminator_loss;
    human += " (G " + fmt(last.generator_loss) + ", D " + fmt(last.discriminator_loss) + ")";
  }
  out.emit(record, human);
}

struct InvertArgs {
  std::string image, weights, out_latent, out_face, trajectory;
  double lambda_mse = InversionConfig{}.lambda_mse;
  double lambda_stat = InversionConfig{}.lambda_stat;
  double lr = InversionConfig{}.learning_rate;
  double lr_rampdown = InversionConfig{}.lr_rampdown;
  int steps = InversionConfig{}.steps;
  std::uint64_t seed = 0;
  std::string init = "average";
};

void run_invert(const InvertArgs& a, const Output& out) {
  InversionConfig cfg;
  cfg.lambda_mse = a.lambda_mse;
  cfg.lambda_stat = a.lambda_stat;
  cfg.learning_rate = a.lr;
  cfg.lr_rampdown = a.lr_rampdown;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.init = a.init == "random" ? InitMode::random : InitMode::average;
  cfg.record_trajectory = !a.trajectory.empty();
  checked([&] {
    validate(cfg);
    return 0;
  });
  const GeneratorWeights weights = open_weights(a.weights);
  const SourceImage image = load_image(a.image);
  const InversionResult r = invert(weights, image, cfg);
  save_latent(r.latent, a.out_latent);
  save_face(r.rendered, a.out_face);
  if (r.loss_trajectory) write_trajectory(*r.loss_trajectory, a.trajectory);
  const double mse_per_value = r.mse_term / kFaceValueCount;
  out.emit({{"command", "invert"},
            {"final_loss", r.final_loss},
            {"mse_term", r.mse_term},
            {"mse_per_value", mse_per_value},
            {"stat_term", r.stat_term},
            {"best_step", r.best_step},
            {"steps", cfg.steps},
            {"latent", a.out_latent},
            {"face", a.out_face}},
           "loss=" + fmt(r.final_loss) + " mse/N=" + fmt(mse_per_value) + " stat=" + fmt(r.stat_term) +
               " best_step=" + std::to_string(r.best_step));
}

struct EditArgs {
  std::string weights, latent, prompt, scorer = "color_target", scorer_params, out_latent, out_face, trajectory;
  bool average = false;
  std::optional<std::uint64_t> random_seed;
  double truncation = 1.0;
  double lambda_l2 = EditConfig{}.lambda_l2;
  double lr = EditConfig{}.learning_rate;
  int steps = EditConfig{}.steps;
  std::uint64_t seed = 0;
};

void run_edit(const EditArgs& a, const Output& out) {
  const int sources = (!a.latent.empty()) + (a.average ? 1 : 0) + (a.random_seed ? 1 : 0);
  if (sources != 1) throw UsageError("give exactly one of --latent, --average, --random-seed");
  EditConfig cfg;
  cfg.lambda_l2 = a.lambda_l2;
  cfg.learning_rate = a.lr;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.record_trajectory = !a.trajectory.empty();
  const TextPrompt prompt = checked([&] {
    validate(cfg);
    return TextPrompt(a.prompt);
  });
  const auto scorer = checked([&] { return make_scorer(a.scorer, scorer_params_from(a.scorer_params)); });

  const GeneratorWeights weights = open_weights(a.weights);
  EditSource source = EditSource::average();
  if (!a.latent.empty()) source = EditSource::from_latent(load_latent(a.latent));
  if (a.random_seed) source = EditSource::random(*a.random_seed, a.truncation);
  const EditResult r = edit_from_source(weights, source, prompt, *scorer, cfg);
  save_latent(r.latent, a.out_latent);
  save_face(r.rendered, a.out_face);
  if (r.trajectory) write_trajectory(*r.trajectory, a.trajectory);
  out.emit({{"command", "edit"},
            {"scorer", scorer->name()},
            {"total", r.total},
            {"clip_term", r.clip_term},
            {"l2_term", r.l2_term},
            {"best_step", r.best_step},
            {"latent", a.out_latent},
            {"face", a.out_face}},
           "total=" + fmt(r.total) + " score=" + fmt(r.clip_term) + " |dw|=" + fmt(r.l2_term) +
               " best_step=" + std::to_string(r.best_step));
}

struct GenerateArgs {
  std::string weights, mode = "random", out_face, out_latent;
  double truncation = 1.0;
  std::uint64_t seed = 0;
};

void run_generate(const GenerateArgs& a, const Output& out) {
  const GeneratorWeights weights = open_weights(a.weights);
  const LatentWPlus w = a.mode == "average" ? resolve_average_latent(weights)
                                            : sample_random_latent(weights, a.truncation, NoiseSeed{a.seed});
  save_face(synthesize(weights, w), a.out_face);
  if (!a.out_latent.empty()) save_latent(w, a.out_latent);
  json record = {{"command", "generate"}, {"mode", a.mode}, {"face", a.out_face}};
  if (a.mode == "random") {
    record["seed"] = a.seed;
    record["truncation"] = a.truncation;
  }
  if (!a.out_latent.empty()) record["latent"] = a.out_latent;
  out.emit(record, a.mode + " face -> " + a.out_face);
}

struct AssembleArgs {
  std::string face, base, out;
};

void run_assemble(const AssembleArgs& a, const Output& out) {
  const FaceTexture face = load_face(a.face);
  const SkinTexture base = a.base.empty() ? default_base_skin() : load_skin(a.base);
  const SkinTexture skin = embed_face(face, base);
  save_skin(skin, a.out);
  out.emit({{"command", "assemble"}, {"skin", a.out}, {"height", skin.height()}}, "skin -> " + a.out);
}

struct ServeArgs {
  std::string config, data_dir, checkpoint;
  std::optional<int> port;
};

int run_serve(const ServeArgs& a) {
  ServiceConfig cfg = checked([&] {
    return load_service_config(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config));
  });
  if (a.port) cfg.port = *a.port;
  if (!a.data_dir.empty()) cfg.data_dir = a.data_dir;
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  return run_service(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skinforge: Minecraft face textures from photos and prompts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "skinforge 0.1.0");
  Output out;

  RefineArgs refine;
  auto* c_refine = app.add_subcommand("refine", "Filter a folder of skins/faces into a training corpus");
  c_refine->add_option("--in", refine.in, "Directory of PNG/JPEG skins or 8x8 faces")->required();
  c_refine->add_option("--out", refine.out, "Output directory for accepted faces and report.jsonl")->required();
  c_refine->add_option("--std-threshold", refine.std_threshold, "Reject faces whose mean channel std is below this")
      ->capture_default_str();
  c_refine->add_option("--mono-tol", refine.mono_tol, "Per-channel tolerance of the monochrome filter")
      ->capture_default_str();

  TrainArgs train_args;
  std::uint64_t train_seed = 0;
  auto* c_train = app.add_subcommand("train", "Train a generator on a refined corpus");
  c_train->add_option("--corpus", train_args.corpus, "Refined corpus directory (8x8 faces)")->required();
  c_train->add_option("--config", train_args.config, "Training config JSON (defaults to the desk-scale preset)");
  c_train->add_option("--out", train_args.out, "Output checkpoint path")->required();
  auto* train_seed_opt = c_train->add_option("--seed", train_seed, "Override the config seed");
  c_train->add_option("--log", train_args.log, "Write per-iteration losses as JSON lines");
  c_train->add_option("--samples", train_args.samples, "Write sample contact sheets here");

  InvertArgs inv;
  auto* c_invert = app.add_subcommand("invert", "Fit a latent to a photo");
  c_invert->add_option("--image", inv.image, "Input PNG or JPEG, at least 8x8")->required()->check(CLI::ExistingFile);
  c_invert->add_option("--weights", inv.weights, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  c_invert->add_option("--out-latent", inv.out_latent, "Where to write the fitted latent")->required();
  c_invert->add_option("--out-face", inv.out_face, "Where to write the rendered 8x8 face PNG")->required();
  c_invert->add_option("--lambda-mse", inv.lambda_mse, "Weight of the pixel reconstruction term")->capture_default_str();
  c_invert->add_option("--lambda-stat", inv.lambda_stat, "Weight of the color statistics term")->capture_default_str();
  c_invert->add_option("--steps", inv.steps, "Optimizer steps")->capture_default_str();
  c_invert->add_option("--lr", inv.lr, "Adam learning rate")->capture_default_str();
  c_invert->add_option("--lr-rampdown", inv.lr_rampdown, "fraction of steps over which the learning rate decays to 0")
      ->capture_default_str();
  c_invert->add_option("--seed", inv.seed, "Seed for --init random")->capture_default_str();
  c_invert->add_option("--init", inv.init, "Starting latent")
      ->check(CLI::IsMember({"average", "random"}))
      ->capture_default_str();
  c_invert->add_option("--trajectory", inv.trajectory, "Write the per-step losses as JSON lines");

  EditArgs ed;
  std::uint64_t random_seed = 0;
  auto* c_edit = app.add_subcommand("edit", "Push a latent towards a text prompt");
  c_edit->add_option("--weights", ed.weights, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  auto* latent_opt = c_edit->add_option("--latent", ed.latent, "Start from this latent file")->check(CLI::ExistingFile);
  auto* average_opt = c_edit->add_flag("--average", ed.average, "Start from the average latent");
  auto* random_opt = c_edit->add_option("--random-seed", random_seed, "Start from a random latent with this seed");
  latent_opt->excludes(average_opt, random_opt);
  average_opt->excludes(random_opt);
  c_edit->add_option("--truncation", ed.truncation, "Truncation for --random-seed")->capture_default_str();
  c_edit->add_option("--prompt", ed.prompt, "Text prompt")->required();
  c_edit->add_option("--scorer", ed.scorer, "Scorer name: " + [] {
    std::string names;
    for (const auto& n : scorer_names()) names += (names.empty() ? "" : ", ") + n;
    return names;
  }())->capture_default_str();
  c_edit->add_option("--scorer-params", ed.scorer_params, "JSON object passed to the scorer factory");
  c_edit->add_option("--lambda-l2", ed.lambda_l2, "Weight of the distance-to-source term")->capture_default_str();
  c_edit->add_option("--steps", ed.steps, "Optimizer steps (0 returns the source)")->capture_default_str();
  c_edit->add_option("--lr", ed.lr, "Adam learning rate")->capture_default_str();
  c_edit->add_option("--seed", ed.seed, "Seed recorded with the run")->capture_default_str();
  c_edit->add_option("--out-latent", ed.out_latent, "Where to write the edited latent")->required();
  c_edit->add_option("--out-face", ed.out_face, "Where to write the edited 8x8 face PNG")->required();
  c_edit->add_option("--trajectory", ed.trajectory, "Write the per-step losses as JSON lines");

  GenerateArgs gen;
  auto* c_generate = app.add_subcommand("generate", "Render a random or the average face");
  c_generate->add_option("--weights", gen.weights, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  c_generate->add_option("--mode", gen.mode, "random or average")
      ->check(CLI::IsMember({"random", "average"}))
      ->capture_default_str();
  c_generate->add_option("--truncation", gen.truncation, "Blend towards the average latent (1 = none)")
      ->capture_default_str();
  c_generate->add_option("--seed", gen.seed, "Seed for --mode random")->capture_default_str();
  c_generate->add_option("--out-face", gen.out_face, "Where to write the 8x8 face PNG")->required();
  c_generate->add_option("--out-latent", gen.out_latent, "Also write the latent");

  AssembleArgs asm_args;
  auto* c_assemble = app.add_subcommand("assemble", "Paste a face into a skin sheet");
  c_assemble->add_option("--face", asm_args.face, "8x8 face PNG (or a skin to take the face from)")
      ->required()
      ->check(CLI::ExistingFile);
  c_assemble->add_option("--base", asm_args.base, "Base skin, 64x64 or 64x32 (default: built-in)")
      ->check(CLI::ExistingFile);
  c_assemble->add_option("--out", asm_args.out, "Output skin PNG")->required();

  ServeArgs serve;
  int serve_port = 0;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP job service");
  c_serve->add_option("--config", serve.config, "Service config JSON")->check(CLI::ExistingFile);
  auto* port_opt = c_serve->add_option("--port", serve_port, "Listen port (0 picks a free one)");
  c_serve->add_option("--data-dir", serve.data_dir, "Job and artifact store");
  c_serve->add_option("--checkpoint", serve.checkpoint, "Generator checkpoint");

  for (CLI::App* sub : {c_refine, c_train, c_invert, c_edit, c_generate, c_assemble}) {
    sub->add_flag("--json", out.as_json, "Print one JSON record instead of a summary");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_refine) run_refine(refine, out);
    if (*c_train) {
      if (*train_seed_opt) train_args.seed = train_seed;
      run_train(train_args, out);
    }
    if (*c_invert) run_invert(inv, out);
    if (*c_edit) {
      if (*random_opt) ed.random_seed = random_seed;
      run_edit(ed, out);
    }
    if (*c_generate) run_generate(gen, out);
    if (*c_assemble) run_assemble(asm_args, out);
    if (*c_serve) {
      if (*port_opt) serve.port = serve_port;
      return run_serve(serve);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for details.\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
