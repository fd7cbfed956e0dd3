#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "skinforge/generator.hpp"
#include "skinforge/image_io.hpp"
#include "skinforge/scorer.hpp"

namespace skinforge {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "skinforge-data";
  // Without a checkpoint the service runs on freshly initialized weights.
  std::optional<std::filesystem::path> checkpoint;
  int workers = 2;
  int queue_capacity = 32;
  std::size_t max_image_bytes = 8u << 20;
  std::string scorer = "color_target";
  nlohmann::json scorer_params = nlohmann::json::object();
};

// Reads the JSON config file (when given), then applies SKINFORGE_PORT,
// SKINFORGE_DATA_DIR, SKINFORGE_CHECKPOINT, SKINFORGE_WORKERS and
// SKINFORGE_SCORER from `env` (defaults to std::getenv).
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = {});
ServiceConfig service_config_from_json(const nlohmann::json& j);

// A request the service refuses; `status` is the HTTP code to answer with
// and `reason` a short machine-readable tag.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string reason, const std::string& message)
      : std::runtime_error(message), status_(status), reason_(std::move(reason)) {}
  int status() const noexcept { return status_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  int status_;
  std::string reason_;
};

enum class JobKind { invert, edit, generate_random, generate_average, refine };
enum class JobState { queued, running, done, failed };
const char* to_string(JobKind kind);
const char* to_string(JobState state);
JobKind job_kind_from_string(const std::string& text);
JobState job_state_from_string(const std::string& text);

struct Job {
  std::string id;
  std::uint64_t sequence = 0;  // submission order, used to re-queue after a restart
  JobKind kind = JobKind::invert;
  JobState state = JobState::queued;
  double progress = 0.0;
  nlohmann::json params = nlohmann::json::object();
  std::optional<std::string> result_ref;  // artifact id, or report path for refine
  nlohmann::json result = nlohmann::json::object();
  std::optional<std::string> error;
};

nlohmann::json to_json(const Job& job);
Job job_from_json(const nlohmann::json& j);

struct ArtifactMeta {
  std::string id;
  std::string job_id;
  std::vector<std::string> provenance;  // job ids, oldest first
  nlohmann::json source;
};

// Job queue, worker pool and on-disk store, independent of the transport.
// Layout under data_dir:
//   jobs/<id>.json               job records
//   uploads/<job id>.img          images waiting for inversion
//   artifacts/<id>/latent.bin    face.png, meta.json
//   bases/<id>.png               uploaded base skins
class JobService {
 public:
  JobService(ServiceConfig config, GeneratorWeights weights);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }
  const GeneratorWeights& weights() const noexcept { return weights_; }

  // All submit calls validate synchronously and throw ApiError on bad input
  // (400), oversized images (413), unknown sources (404) or a full queue (503).
  Job submit_invert(std::span<const std::uint8_t> image, const nlohmann::json& params);
  Job submit_edit(const nlohmann::json& params);
  Job submit_generate(const nlohmann::json& params);
  Job submit_refine(const nlohmann::json& params);
  std::string upload_base(std::span<const std::uint8_t> png);

  std::optional<Job> job(const std::string& id) const;
  // Accepts an artifact id or the id of the job that produces it; throws
  // 404 when neither exists and 409 when the job has not finished.
  ArtifactMeta artifact(const std::string& id) const;
  Bytes face_png(const std::string& id) const;
  Bytes latent_bytes(const std::string& id) const;
  Bytes skin_png(const std::string& id, const std::string& base = "default") const;

  // Blocks until the job leaves queued/running or the timeout passes.
  std::optional<Job> wait(const std::string& id, std::chrono::milliseconds timeout) const;

  std::size_t queued_count() const;
  // Stops workers; running jobs are interrupted and marked failed.
  void shutdown();

 private:
  Job submit(JobKind kind, nlohmann::json params);
  void worker_loop();
  void run(Job job);
  std::string execute(const Job& job, const std::function<void(double)>& progress, nlohmann::json& result);
  std::string store_artifact(const Job& job, const LatentWPlus& latent, std::vector<std::string> provenance,
                             const nlohmann::json& source);
  LatentWPlus resolve_edit_source(const nlohmann::json& source, std::vector<std::string>& provenance) const;
  std::shared_ptr<TextImageScorer> scorer_for(const std::string& name, const nlohmann::json& params);
  // Held around score calls on scorers that are not concurrent_safe.
  std::unique_lock<std::mutex> scorer_guard(const TextImageScorer& scorer);
  void update(const Job& job);
  void persist(const Job& job) const;
  void restore();
  std::string new_id(const char* prefix);
  std::filesystem::path artifact_dir(const std::string& id) const;

  ServiceConfig config_;
  GeneratorWeights weights_;

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  std::uint64_t next_sequence_ = 1;
  bool stopping_ = false;
  std::atomic<bool> interrupt_{false};

  mutable std::mutex write_mutex_;  // serializes store writes
  std::mutex scorer_mutex_;
  std::map<std::string, std::shared_ptr<TextImageScorer>> scorers_;
  std::map<const TextImageScorer*, std::unique_ptr<std::mutex>> exclusive_;
  std::mutex id_mutex_;
  std::uint64_t id_state_ = 0;

  std::vector<std::thread> workers_;
};

// HTTP front end over a JobService.
class HttpServer {
 public:
  explicit HttpServer(JobService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loads the configured checkpoint (filling and writing back the cached
// average when missing) and serves until interrupted.
int run_service(const ServiceConfig& config);

}  // namespace skinforge
