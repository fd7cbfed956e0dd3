#include "skinforge/service.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <pthread.h>

#include "httplib.h"

#include "skinforge/checkpoint.hpp"
#include "skinforge/dataset.hpp"
#include "skinforge/error.hpp"
#include "skinforge/inversion.hpp"
#include "skinforge/text_edit.hpp"

namespace skinforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Interrupted {};

std::optional<std::string> getenv_lookup(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

int parse_int(const std::string& name, const std::string& text) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InvalidArgument(name + " must be an integer, got '" + text + "'");
}

// Write-then-rename so readers never see a half-written file.
void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  fs::rename(tmp, path);
}

void atomic_write(const fs::path& path, const std::string& text) {
  atomic_write(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json read_json(const fs::path& path) {
  const Bytes bytes = read_file(path);
  return json::parse(bytes.begin(), bytes.end());
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

template <typename T>
T param(const json& params, const char* key, T fallback) {
  if (!params.contains(key) || params.at(key).is_null()) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const json::exception&) {
    throw ApiError(400, "bad_params", std::string("parameter '") + key + "' has the wrong type");
  }
}

InversionConfig inversion_config(const json& p) {
  InversionConfig cfg;
  cfg.steps = param(p, "steps", cfg.steps);
  cfg.lambda_mse = param(p, "lambda_mse", cfg.lambda_mse);
  cfg.lambda_stat = param(p, "lambda_stat", cfg.lambda_stat);
  cfg.learning_rate = param(p, "learning_rate", cfg.learning_rate);
  cfg.lr_rampdown = param(p, "lr_rampdown", cfg.lr_rampdown);
  cfg.seed = param<std::uint64_t>(p, "seed", cfg.seed);
  const std::string init = param<std::string>(p, "init", "average");
  if (init == "average") {
    cfg.init = InitMode::average;
  } else if (init == "random") {
    cfg.init = InitMode::random;
  } else {
    throw ApiError(400, "bad_params", "init must be 'average' or 'random'");
  }
  return cfg;
}

EditConfig edit_config(const json& p) {
  EditConfig cfg;
  cfg.steps = param(p, "steps", cfg.steps);
  cfg.lambda_l2 = param(p, "lambda_l2", cfg.lambda_l2);
  cfg.learning_rate = param(p, "learning_rate", cfg.learning_rate);
  cfg.seed = param<std::uint64_t>(p, "seed", cfg.seed);
  return cfg;
}

}  // namespace

ServiceConfig service_config_from_json(const json& j) {
  ServiceConfig cfg;
  cfg.host = j.value("host", cfg.host);
  cfg.port = j.value("port", cfg.port);
  cfg.data_dir = j.value("data_dir", cfg.data_dir.string());
  if (j.contains("checkpoint") && !j.at("checkpoint").is_null()) cfg.checkpoint = j.at("checkpoint").get<std::string>();
  cfg.workers = j.value("workers", cfg.workers);
  cfg.queue_capacity = j.value("queue_capacity", cfg.queue_capacity);
  cfg.max_image_bytes = j.value("max_image_bytes", cfg.max_image_bytes);
  cfg.scorer = j.value("scorer", cfg.scorer);
  if (j.contains("scorer_params")) cfg.scorer_params = j.at("scorer_params");
  return cfg;
}

ServiceConfig load_service_config(const std::optional<fs::path>& path, const EnvLookup& env) {
  ServiceConfig cfg;
  if (path) {
    try {
      cfg = service_config_from_json(read_json(*path));
    } catch (const json::exception& e) {
      throw InvalidArgument("bad service config " + path->string() + ": " + e.what());
    }
  }
  const EnvLookup lookup = env ? env : EnvLookup(getenv_lookup);
  if (auto v = lookup("SKINFORGE_PORT")) cfg.port = parse_int("SKINFORGE_PORT", *v);
  if (auto v = lookup("SKINFORGE_DATA_DIR")) cfg.data_dir = *v;
  if (auto v = lookup("SKINFORGE_CHECKPOINT")) cfg.checkpoint = *v;
  if (auto v = lookup("SKINFORGE_WORKERS")) cfg.workers = parse_int("SKINFORGE_WORKERS", *v);
  if (auto v = lookup("SKINFORGE_SCORER")) cfg.scorer = *v;
  if (cfg.port < 0 || cfg.port > 65535) throw InvalidArgument("port out of range");
  if (cfg.workers < 1) throw InvalidArgument("workers must be at least 1");
  if (cfg.queue_capacity < 1) throw InvalidArgument("queue_capacity must be at least 1");
  return cfg;
}

const char* to_string(JobKind kind) {
  switch (kind) {
    case JobKind::invert: return "invert";
    case JobKind::edit: return "edit";
    case JobKind::generate_random: return "generate_random";
    case JobKind::generate_average: return "generate_average";
    case JobKind::refine: return "refine";
  }
  return "invert";
}

const char* to_string(JobState state) {
  switch (state) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "queued";
}

JobKind job_kind_from_string(const std::string& text) {
  for (JobKind k : {JobKind::invert, JobKind::edit, JobKind::generate_random, JobKind::generate_average, JobKind::refine}) {
    if (text == to_string(k)) return k;
  }
  throw InvalidArgument("unknown job kind '" + text + "'");
}

JobState job_state_from_string(const std::string& text) {
  for (JobState s : {JobState::queued, JobState::running, JobState::done, JobState::failed}) {
    if (text == to_string(s)) return s;
  }
  throw InvalidArgument("unknown job state '" + text + "'");
}

json to_json(const Job& job) {
  json j = {{"id", job.id},         {"sequence", job.sequence}, {"kind", to_string(job.kind)},
            {"state", to_string(job.state)}, {"progress", job.progress}, {"params", job.params},
            {"result", job.result}};
  j["result_ref"] = job.result_ref ? json(*job.result_ref) : json(nullptr);
  j["error"] = job.error ? json(*job.error) : json(nullptr);
  return j;
}

Job job_from_json(const json& j) {
  Job job;
  job.id = j.at("id").get<std::string>();
  job.sequence = j.value("sequence", std::uint64_t{0});
  job.kind = job_kind_from_string(j.at("kind").get<std::string>());
  job.state = job_state_from_string(j.at("state").get<std::string>());
  job.progress = j.value("progress", 0.0);
  if (j.contains("params")) job.params = j.at("params");
  if (j.contains("result")) job.result = j.at("result");
  if (j.contains("result_ref") && !j.at("result_ref").is_null()) job.result_ref = j.at("result_ref").get<std::string>();
  if (j.contains("error") && !j.at("error").is_null()) job.error = j.at("error").get<std::string>();
  return job;
}

// ---------------------------------------------------------------- JobService

JobService::JobService(ServiceConfig config, GeneratorWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  ensure_average_latent(weights_);
  for (const char* sub : {"jobs", "uploads", "artifacts", "bases", "refined"}) {
    fs::create_directories(config_.data_dir / sub);
  }
  id_state_ = std::random_device{}();
  id_state_ = (id_state_ << 32) ^ static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
  restore();
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobService::~JobService() { shutdown(); }

void JobService::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
  }
  interrupt_ = true;
  changed_.notify_all();
  for (std::thread& t : workers_) {
    if (t.joinable()) t.join();
  }
  workers_.clear();
}

std::string JobService::new_id(const char* prefix) {
  std::lock_guard lock(id_mutex_);
  // splitmix64 over a randomly seeded counter
  std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::ostringstream out;
  out << prefix << '-' << std::hex;
  out.width(16);
  out.fill('0');
  out << z;
  return out.str();
}

fs::path JobService::artifact_dir(const std::string& id) const { return config_.data_dir / "artifacts" / id; }

void JobService::persist(const Job& job) const {
  std::lock_guard lock(write_mutex_);
  atomic_write(config_.data_dir / "jobs" / (job.id + ".json"), to_json(job).dump(2));
}

void JobService::update(const Job& job) {
  persist(job);
  {
    std::lock_guard lock(mutex_);
    jobs_[job.id] = job;
  }
  changed_.notify_all();
}

void JobService::restore() {
  std::vector<Job> pending;
  for (const auto& entry : fs::directory_iterator(config_.data_dir / "jobs")) {
    if (entry.path().extension() != ".json") continue;
    Job job;
    try {
      job = job_from_json(read_json(entry.path()));
    } catch (const std::exception& e) {
      std::cerr << json{{"event", "skip_job_record"}, {"path", entry.path().string()}, {"error", e.what()}}.dump()
                << '\n';
      continue;
    }
    if (job.state == JobState::running) {
      job.state = JobState::failed;
      job.error = "interrupted: the service stopped while this job was running";
      persist(job);
    }
    next_sequence_ = std::max(next_sequence_, job.sequence + 1);
    if (job.state == JobState::queued) pending.push_back(job);
    jobs_[job.id] = job;
  }
  std::sort(pending.begin(), pending.end(), [](const Job& a, const Job& b) { return a.sequence < b.sequence; });
  for (const Job& job : pending) queue_.push_back(job.id);
}

Job JobService::submit(JobKind kind, json params) {
  Job job;
  job.id = new_id("job");
  job.kind = kind;
  job.params = std::move(params);
  std::unique_lock lock(mutex_);
  if (stopping_) throw ApiError(503, "shutting_down", "the service is shutting down");
  if (queue_.size() >= static_cast<std::size_t>(config_.queue_capacity)) {
    throw ApiError(503, "queue_full", "job queue is full, retry later");
  }
  job.sequence = next_sequence_++;
  persist(job);
  jobs_[job.id] = job;
  queue_.push_back(job.id);
  lock.unlock();
  changed_.notify_all();
  return job;
}

Job JobService::submit_invert(std::span<const std::uint8_t> image, const json& params) {
  if (image.size() > config_.max_image_bytes) {
    throw ApiError(413, "too_large", "image exceeds " + std::to_string(config_.max_image_bytes) + " bytes");
  }
  try {
    to_source_image(decode_image(image));
  } catch (const TooSmall& e) {
    throw ApiError(400, "too_small", e.what());
  } catch (const Error& e) {
    throw ApiError(400, "invalid_image", e.what());
  }
  const json p = params.is_null() ? json::object() : params;
  if (!p.is_object()) throw ApiError(400, "bad_params", "params must be a JSON object");
  try {
    validate(inversion_config(p));
  } catch (const InvalidArgument& e) {
    throw ApiError(400, "bad_params", e.what());
  }
  // The upload must be on disk before the job becomes visible to a worker.
  const std::string staged = new_id("upload");
  const fs::path staged_path = config_.data_dir / "uploads" / (staged + ".img");
  atomic_write(staged_path, image);
  json stored = p;
  stored["upload"] = staged;
  try {
    return submit(JobKind::invert, stored);
  } catch (...) {
    std::error_code ec;
    fs::remove(staged_path, ec);
    throw;
  }
}

Job JobService::submit_edit(const json& params) {
  if (!params.is_object()) throw ApiError(400, "bad_params", "edit body must be a JSON object");
  if (!params.contains("prompt") || !params.at("prompt").is_string()) {
    throw ApiError(400, "bad_prompt", "edit needs a string 'prompt'");
  }
  std::optional<TextPrompt> prompt;
  try {
    prompt.emplace(params.at("prompt").get<std::string>());
    validate(edit_config(params));
  } catch (const InvalidArgument& e) {
    throw ApiError(400, "bad_params", e.what());
  }
  const std::string scorer_name = param<std::string>(params, "scorer", config_.scorer);
  const json scorer_params = params.contains("scorer_params") ? params.at("scorer_params") : config_.scorer_params;
  std::shared_ptr<TextImageScorer> scorer;
  try {
    scorer = scorer_for(scorer_name, scorer_params);
  } catch (const Error& e) {
    throw ApiError(400, "bad_scorer", e.what());
  }
  std::vector<std::string> provenance;
  const json source = params.contains("source") ? params.at("source") : json("average");
  const LatentWPlus w = resolve_edit_source(source, provenance);
  // One probe score catches prompts the scorer cannot interpret.
  try {
    const auto guard = scorer_guard(*scorer);
    scorer->score(synthesize(weights_, w), *prompt);
  } catch (const Error& e) {
    throw ApiError(400, "bad_prompt", e.what());
  }
  json stored = params;
  stored["source"] = source;
  stored["scorer"] = scorer_name;
  stored["scorer_params"] = scorer_params;
  return submit(JobKind::edit, stored);
}

Job JobService::submit_generate(const json& params) {
  if (!params.is_object()) throw ApiError(400, "bad_params", "generate body must be a JSON object");
  const std::string mode = param<std::string>(params, "mode", "random");
  json stored = params;
  stored["mode"] = mode;
  if (mode == "average") return submit(JobKind::generate_average, stored);
  if (mode != "random") throw ApiError(400, "bad_params", "mode must be 'random' or 'average'");
  const double t = param(params, "truncation", 1.0);
  if (!std::isfinite(t)) throw ApiError(400, "bad_params", "truncation must be finite");
  stored["seed"] = param<std::uint64_t>(params, "seed", 0);
  stored["truncation"] = t;
  return submit(JobKind::generate_random, stored);
}

Job JobService::submit_refine(const json& params) {
  if (!params.is_object()) throw ApiError(400, "bad_params", "refine body must be a JSON object");
  const std::string input = param<std::string>(params, "input_dir", "");
  if (input.empty() || !fs::is_directory(input)) {
    throw ApiError(400, "bad_params", "input_dir must name an existing directory");
  }
  const double std_threshold = param(params, "std_threshold", RefinementConfig{}.std_threshold);
  const double mono_tolerance = param(params, "mono_tolerance", RefinementConfig{}.mono_tolerance);
  if (!(std_threshold >= 0.0) || !(mono_tolerance >= 0.0)) {
    throw ApiError(400, "bad_params", "thresholds must be non-negative");
  }
  return submit(JobKind::refine, params);
}

std::string JobService::upload_base(std::span<const std::uint8_t> png) {
  if (png.size() > config_.max_image_bytes) throw ApiError(413, "too_large", "base skin is too large");
  SkinTexture skin(SkinLayout::modern);
  try {
    const Rgba8Image img = decode_image(png);
    skin = SkinTexture::from_rgba(img.width, img.height, img.rgba);
  } catch (const Error& e) {
    throw ApiError(400, "invalid_image", e.what());
  }
  const std::string id = new_id("base");
  std::lock_guard lock(write_mutex_);
  atomic_write(config_.data_dir / "bases" / (id + ".png"), encode_skin_png(skin));
  return id;
}

std::optional<Job> JobService::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::optional<Job> JobService::wait(const std::string& id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  changed_.wait_for(lock, timeout, [&] {
    const auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.state == JobState::done || it->second.state == JobState::failed;
  });
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::size_t JobService::queued_count() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

ArtifactMeta JobService::artifact(const std::string& id) const {
  std::string artifact_id = id;
  if (auto j = job(id)) {
    if (j->state != JobState::done) {
      throw ApiError(409, "not_ready", "job " + id + " is " + to_string(j->state));
    }
    if (j->kind == JobKind::refine || !j->result_ref) {
      throw ApiError(404, "no_artifact", "job " + id + " does not produce an artifact");
    }
    artifact_id = *j->result_ref;
  }
  if (!valid_id(artifact_id) || !fs::exists(artifact_dir(artifact_id) / "meta.json")) {
    throw ApiError(404, "not_found", "no artifact or job named '" + id + "'");
  }
  const json meta = read_json(artifact_dir(artifact_id) / "meta.json");
  ArtifactMeta out;
  out.id = artifact_id;
  out.job_id = meta.at("job_id").get<std::string>();
  out.provenance = meta.at("provenance").get<std::vector<std::string>>();
  out.source = meta.value("source", json::object());
  return out;
}

Bytes JobService::face_png(const std::string& id) const { return read_file(artifact_dir(artifact(id).id) / "face.png"); }

Bytes JobService::latent_bytes(const std::string& id) const {
  return read_file(artifact_dir(artifact(id).id) / "latent.bin");
}

Bytes JobService::skin_png(const std::string& id, const std::string& base) const {
  const FaceTexture face = load_face(artifact_dir(artifact(id).id) / "face.png");
  SkinTexture skin = default_base_skin();
  if (base != "default") {
    const fs::path path = config_.data_dir / "bases" / (base + ".png");
    if (!valid_id(base) || !fs::exists(path)) throw ApiError(404, "not_found", "no base skin named '" + base + "'");
    skin = load_skin(path);
  }
  return encode_skin_png(embed_face(face, skin));
}

LatentWPlus JobService::resolve_edit_source(const json& source, std::vector<std::string>& provenance) const {
  if (source.is_string()) {
    const std::string name = source.get<std::string>();
    if (name == "average") return resolve_source(weights_, EditSource::average());
    const ArtifactMeta meta = artifact(name);
    provenance = meta.provenance;
    return deserialize_latent(read_file(artifact_dir(meta.id) / "latent.bin"));
  }
  if (source.is_object() && source.contains("random")) {
    const auto seed = param<std::uint64_t>(source, "random", 0);
    const double t = param(source, "truncation", 1.0);
    if (!std::isfinite(t)) throw ApiError(400, "bad_params", "truncation must be finite");
    return resolve_source(weights_, EditSource::random(seed, t));
  }
  throw ApiError(400, "bad_params", "source must be 'average', an artifact id, or {\"random\": seed}");
}

std::shared_ptr<TextImageScorer> JobService::scorer_for(const std::string& name, const json& params) {
  const std::string key = name + '\n' + params.dump();
  std::lock_guard lock(scorer_mutex_);
  auto it = scorers_.find(key);
  if (it == scorers_.end()) {
    auto scorer = make_scorer(name, params);
    if (!scorer->concurrent_safe()) exclusive_.emplace(scorer.get(), std::make_unique<std::mutex>());
    it = scorers_.emplace(key, std::move(scorer)).first;
  }
  return it->second;
}

std::unique_lock<std::mutex> JobService::scorer_guard(const TextImageScorer& scorer) {
  std::mutex* m = nullptr;
  {
    std::lock_guard lock(scorer_mutex_);
    const auto it = exclusive_.find(&scorer);
    if (it != exclusive_.end()) m = it->second.get();
  }
  return m ? std::unique_lock(*m) : std::unique_lock<std::mutex>();
}

std::string JobService::store_artifact(const Job& job, const LatentWPlus& latent, std::vector<std::string> provenance,
                                       const json& source) {
  const std::string id = new_id("art");
  const fs::path final_dir = artifact_dir(id);
  fs::path tmp_dir = final_dir;
  tmp_dir += ".tmp";
  fs::create_directories(tmp_dir);
  provenance.push_back(job.id);
  const FaceTexture face = synthesize(weights_, latent);
  write_file(tmp_dir / "latent.bin", serialize_latent(latent));
  write_file(tmp_dir / "face.png", encode_face_png(face));
  const json meta = {{"id", id}, {"job_id", job.id}, {"kind", to_string(job.kind)}, {"provenance", provenance},
                     {"source", source}};
  const std::string text = meta.dump(2);
  write_file(tmp_dir / "meta.json",
             std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  fs::rename(tmp_dir, final_dir);
  return id;
}

std::string JobService::execute(const Job& job, const std::function<void(double)>& progress, json& result) {
  const json& p = job.params;
  const ProgressFn step_progress = [&](int done, int total) { progress(total > 0 ? double(done) / total : 1.0); };
  switch (job.kind) {
    case JobKind::invert: {
      const fs::path upload = config_.data_dir / "uploads" / (p.at("upload").get<std::string>() + ".img");
      const SourceImage image = to_source_image(decode_image(read_file(upload)));
      const InversionResult r = invert(weights_, image, inversion_config(p), step_progress);
      result = {{"final_loss", r.final_loss}, {"mse_term", r.mse_term}, {"stat_term", r.stat_term},
                {"best_step", r.best_step}};
      const std::string id = store_artifact(job, r.latent, {}, {{"kind", "upload"}});
      std::error_code ec;
      fs::remove(upload, ec);
      return id;
    }
    case JobKind::edit: {
      std::vector<std::string> provenance;
      const json source = p.at("source");
      LatentWPlus w_star = resolve_edit_source(source, provenance);
      auto scorer = scorer_for(p.at("scorer").get<std::string>(), p.at("scorer_params"));
      const auto guard = scorer_guard(*scorer);
      const EditResult r =
          edit(weights_, w_star, TextPrompt(p.at("prompt").get<std::string>()), *scorer, edit_config(p), step_progress);
      result = {{"total", r.total}, {"clip_term", r.clip_term}, {"l2_term", r.l2_term}, {"best_step", r.best_step}};
      return store_artifact(job, r.latent, std::move(provenance), {{"kind", "edit"}, {"from", source}});
    }
    case JobKind::generate_random: {
      const auto seed = p.at("seed").get<std::uint64_t>();
      const double t = p.at("truncation").get<double>();
      const LatentWPlus w = sample_random_latent(weights_, t, NoiseSeed{seed});
      return store_artifact(job, w, {}, {{"kind", "random"}, {"seed", seed}, {"truncation", t}});
    }
    case JobKind::generate_average:
      return store_artifact(job, resolve_average_latent(weights_), {}, {{"kind", "average"}});
    case JobKind::refine: {
      RefinementConfig cfg;
      cfg.std_threshold = param(p, "std_threshold", cfg.std_threshold);
      cfg.mono_tolerance = param(p, "mono_tolerance", cfg.mono_tolerance);
      cfg.output_dir = param<std::string>(p, "output_dir", (config_.data_dir / "refined" / job.id).string());
      const RefinementReport report = refine_corpus(p.at("input_dir").get<std::string>(), cfg);
      result = {{"accepted", report.accepted_count}, {"rejected", report.rejected_count}};
      return (*cfg.output_dir / kReportFileName).string();
    }
  }
  throw InvalidArgument("unknown job kind");
}

void JobService::run(Job job) {
  auto progress = [&](double fraction) {
    if (interrupt_) throw Interrupted{};
    std::lock_guard lock(mutex_);
    jobs_[job.id].progress = fraction;
  };
  try {
    json result = json::object();
    const std::string ref = execute(job, progress, result);
    job.result = result;
    job.result_ref = ref;
    job.progress = 1.0;
    job.state = JobState::done;
  } catch (const Interrupted&) {
    job.state = JobState::failed;
    job.error = "interrupted: the service stopped while this job was running";
  } catch (const ApiError& e) {
    job.state = JobState::failed;
    job.error = e.reason() + ": " + e.what();
  } catch (const Error& e) {
    job.state = JobState::failed;
    job.error = e.kind() + ": " + e.what();
  } catch (const std::exception& e) {
    job.state = JobState::failed;
    job.error = std::string("internal: ") + e.what();
  }
  if (job.state == JobState::failed) {
    std::lock_guard lock(mutex_);
    job.progress = jobs_[job.id].progress;
  }
  update(job);
}

void JobService::worker_loop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = jobs_.at(queue_.front());
      queue_.pop_front();
      job.state = JobState::running;
      jobs_[job.id] = job;
    }
    persist(job);
    changed_.notify_all();
    run(std::move(job));
  }
}

// ---------------------------------------------------------------- HTTP

struct HttpServer::Impl {
  explicit Impl(JobService& s) : service(s) {}

  JobService& service;
  httplib::Server server;
  bool bound = false;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
  send_json(res, status, {{"error", {{"reason", reason}, {"message", message}}}});
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ApiError(400, "bad_json", std::string("request body is not valid JSON: ") + e.what());
  }
}

// Maps every failure to a JSON error body with the right status.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ApiError& e) {
      send_error(res, e.status(), e.reason(), e.what());
    } catch (const FileNotFound& e) {
      send_error(res, 404, e.kind(), e.what());
    } catch (const Error& e) {
      send_error(res, 400, e.kind(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json job_body(const Job& job) {
  json j = to_json(job);
  j.erase("sequence");
  j["job_id"] = job.id;
  return j;
}

}  // namespace

HttpServer::HttpServer(JobService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  JobService& svc = impl_->service;
  // Multipart overhead on top of the image cap; larger bodies get 413 from httplib.
  srv.set_payload_max_length(svc.config().max_image_bytes + (64u << 10));
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::cerr << json{{"method", req.method}, {"path", req.path}, {"status", res.status},
                      {"remote", req.remote_addr}}.dump()
              << '\n';
  });
  srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/v1/health", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            const GeneratorConfig& g = svc.weights().config();
            send_json(res, 200,
                      {{"status", "ok"},
                       {"queued", svc.queued_count()},
                       {"workers", svc.config().workers},
                       {"generator",
                        {{"mapping_depth", g.mapping_depth}, {"channels_4", g.channels_4}, {"channels_8", g.channels_8}}}});
          }));
  srv.Get("/v1/scorers", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"scorers", scorer_names()}, {"default", svc.config().scorer}});
          }));

  srv.Post("/v1/invert", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             std::string image;
             json params = json::object();
             if (req.is_multipart_form_data()) {
               if (!req.has_file("image")) throw ApiError(400, "missing_image", "multipart field 'image' is required");
               image = req.get_file_value("image").content;
               if (req.has_file("params")) params = parse_body(req.get_file_value("params").content);
             } else {
               image = req.body;
             }
             if (image.empty()) throw ApiError(400, "missing_image", "no image in the request");
             const Job job = svc.submit_invert(
                 std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(image.data()), image.size()),
                 params);
             send_json(res, 202, job_body(job));
           }));
  srv.Post("/v1/edit", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 202, job_body(svc.submit_edit(parse_body(req.body))));
           }));
  srv.Post("/v1/generate", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 202, job_body(svc.submit_generate(parse_body(req.body))));
           }));
  srv.Post("/v1/refine", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 202, job_body(svc.submit_refine(parse_body(req.body))));
           }));
  srv.Post("/v1/bases", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             std::string png = req.body;
             if (req.is_multipart_form_data()) {
               if (!req.has_file("image")) throw ApiError(400, "missing_image", "multipart field 'image' is required");
               png = req.get_file_value("image").content;
             }
             const std::string id = svc.upload_base(
                 std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
             send_json(res, 201, {{"base_id", id}});
           }));

  srv.Get("/v1/jobs/:id", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const auto job = svc.job(req.path_params.at("id"));
            if (!job) throw ApiError(404, "not_found", "no job named '" + req.path_params.at("id") + "'");
            send_json(res, 200, job_body(*job));
          }));
  srv.Get("/v1/artifacts/:id", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const ArtifactMeta meta = svc.artifact(req.path_params.at("id"));
            send_json(res, 200,
                      {{"id", meta.id}, {"job_id", meta.job_id}, {"provenance", meta.provenance}, {"source", meta.source},
                       {"face", "/v1/artifacts/" + meta.id + "/face.png"},
                       {"latent", "/v1/artifacts/" + meta.id + "/latent.bin"},
                       {"skin", "/v1/artifacts/" + meta.id + "/skin.png"}});
          }));
  auto send_bytes = [](httplib::Response& res, const Bytes& bytes, const char* type) {
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), type);
  };
  srv.Get("/v1/artifacts/:id/face.png", guarded([&svc, send_bytes](const httplib::Request& req, httplib::Response& res) {
            send_bytes(res, svc.face_png(req.path_params.at("id")), "image/png");
          }));
  srv.Get("/v1/artifacts/:id/latent.bin", guarded([&svc, send_bytes](const httplib::Request& req, httplib::Response& res) {
            send_bytes(res, svc.latent_bytes(req.path_params.at("id")), "application/octet-stream");
          }));
  srv.Get("/v1/artifacts/:id/skin.png", guarded([&svc, send_bytes](const httplib::Request& req, httplib::Response& res) {
            const std::string base = req.has_param("base") ? req.get_param_value("base") : "default";
            send_bytes(res, svc.skin_png(req.path_params.at("id"), base), "image/png");
          }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound;
}

void HttpServer::listen() {
  if (!impl_->bound) throw InvalidArgument("bind() must be called before listen()");
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

int run_service(const ServiceConfig& config) {
  // Signals are taken synchronously by a dedicated thread, so block them
  // before any worker thread exists.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  GeneratorWeights weights = config.checkpoint ? load_weights(*config.checkpoint)
                                               : GeneratorWeights::initialize(GeneratorConfig{}, 0);
  if (ensure_average_latent(weights) && config.checkpoint) {
    try {
      save_weights(weights, *config.checkpoint);
    } catch (const Error& e) {
      std::cerr << json{{"event", "average_cache_not_saved"}, {"error", e.what()}}.dump() << '\n';
    }
  }
  JobService service(config, std::move(weights));
  HttpServer http(service);
  const int port = http.bind(config.host, config.port);
  std::cerr << json{{"event", "listening"}, {"host", config.host}, {"port", port},
                    {"data_dir", config.data_dir.string()}}.dump()
            << '\n';

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    http.stop();
  });
  http.listen();
  // listen() also returns on bind errors; wake the waiter either way.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  service.shutdown();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return 0;
}

}  // namespace skinforge
