#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "skinforge/checkpoint.hpp"
#include "skinforge/discriminator.hpp"
#include "skinforge/error.hpp"
#include "skinforge/image_io.hpp"
#include "skinforge/trainer.hpp"

using namespace skinforge;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.generator = {1, 8, 6};
  cfg.discriminator_channels = 6;
  cfg.stage4 = {6, 3};
  cfg.stage8 = {6, 3};
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("discriminator") {
  TEST_CASE("forward is deterministic, order preserving and shape checked") {
    const Discriminator d(8, 8, 1);
    std::mt19937_64 gen(1);
    const FaceTexture a = fixtures::random_face(gen), b = fixtures::random_face(gen);
    CHECK(d.forward(a) == d.forward(a));
    CHECK(std::isfinite(d.forward(a)));
    const auto scores = d.forward_batch({a.to_image(), b.to_image(), a.to_image()});
    REQUIRE(scores.size() == 3u);
    CHECK(scores[0] == d.forward(a));
    CHECK(scores[1] == d.forward(b));
    CHECK(scores[2] == scores[0]);
    CHECK_THROWS_AS(Discriminator(4, 8, 1).forward(a), ShapeMismatch);
  }

  TEST_CASE("input gradient matches central differences") {
    const Discriminator d(8, 6, 2);
    std::mt19937_64 gen(2);
    const FaceTexture face = fixtures::random_face(gen);
    const Discriminator::Pass pass(d, face.values());
    const auto analytic = pass.backward(1.0);
    auto f = [&](std::span<const double> x) { return d.forward(x); };
    CHECK(oracle::relative_error(analytic, oracle::central_difference(f, face.values(), 1e-3)) < 1e-4);
  }

  TEST_CASE("parameter gradient matches central differences") {
    Discriminator d(4, 4, 3);
    std::mt19937_64 gen(3);
    const RgbImage img = fixtures::random_image(gen, 4, 4);
    std::vector<double> grads(d.params().size(), 0.0);
    Discriminator::Pass(d, img.values()).backward(1.0, grads);
    std::vector<double> numeric;
    for (std::size_t i = 0; i < d.params().size(); ++i) {
      const float keep = d.params()[i];
      const float up = keep + 1e-2f, down = keep - 1e-2f;
      d.params()[i] = up;
      const double fu = d.forward(img);
      d.params()[i] = down;
      const double fd = d.forward(img);
      d.params()[i] = keep;
      numeric.push_back((fu - fd) / (static_cast<double>(up) - static_cast<double>(down)));
    }
    CHECK(oracle::relative_error(grads, numeric) < 1e-3);
  }
}

TEST_SUITE("trainer") {
  TEST_CASE("zero iterations returns the initial weights") {
    TrainConfig cfg = tiny_config();
    cfg.stage4.iterations = 0;
    cfg.stage8.iterations = 0;
    const TrainResult r = train({FaceTexture(0.5)}, cfg);
    CHECK(r.weights == GeneratorWeights::initialize(cfg.generator, cfg.seed));
    CHECK(r.log.records.empty());
  }

  TEST_CASE("warm start with zero iterations returns the checkpoint") {
    fixtures::TempDir dir;
    GeneratorWeights start = GeneratorWeights::initialize({1, 8, 6}, 77);
    start.set_cached_average(average_latent(start, 20, NoiseSeed{1}));
    save_weights(start, dir / "start.skfg");
    TrainConfig cfg = tiny_config();
    cfg.stage4.iterations = 0;
    cfg.stage8.iterations = 0;
    cfg.warm_start = dir / "start.skfg";
    CHECK(train({FaceTexture(0.5)}, cfg).weights == start);
  }

  TEST_CASE("training is deterministic and logs finite losses") {
    fixtures::TempDir dir;
    TrainConfig cfg = tiny_config();
    cfg.log_path = dir / "log.jsonl";
    cfg.sample_interval = 4;
    cfg.sample_dir = dir / "samples";
    std::mt19937_64 gen(4);
    const std::vector<FaceTexture> corpus = {fixtures::random_face(gen), fixtures::random_face(gen)};
    const TrainResult a = train(corpus, cfg);
    const TrainResult b = train(corpus, cfg);
    CHECK(a.weights == b.weights);
    REQUIRE(a.log.records.size() == 12u);
    CHECK_FALSE(a.log.aborted);
    for (const TrainRecord& r : a.log.records) {
      CHECK(std::isfinite(r.generator_loss));
      CHECK(std::isfinite(r.discriminator_loss));
    }
    CHECK(a.log.records.front().resolution == 4);
    CHECK(a.log.records.back().resolution == 8);
    CHECK(a.log.records.back().iteration == 11);
    CHECK_FALSE(a.weights == GeneratorWeights::initialize(cfg.generator, cfg.seed));
    CHECK_FALSE(a.weights.cached_average());

    std::ifstream log(dir / "log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == 12);
    CHECK(std::filesystem::exists(dir / "samples" / "iter_000004.png"));
  }

  TEST_CASE("stage one leaves the 8x8 head alone only through the 4x4 path") {
    TrainConfig cfg = tiny_config();
    cfg.stage8.iterations = 0;
    const GeneratorWeights init = GeneratorWeights::initialize(cfg.generator, cfg.seed);
    const TrainResult r = train({FaceTexture(0.3)}, cfg);
    const auto& lv = init.layout().levels[1];
    for (std::size_t i = lv.conv_weight; i < lv.rgb_bias + 3; ++i) REQUIRE(r.weights.params()[i] == init.params()[i]);
    CHECK_FALSE(r.weights == init);
  }

  TEST_CASE("config errors") {
    TrainConfig cfg = tiny_config();
    CHECK_THROWS_AS(train(std::vector<FaceTexture>{}, cfg), EmptyCorpus);
    cfg.stage4.batch_size = 0;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = tiny_config();
    cfg.stage8.iterations = -1;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
  }

  TEST_CASE("divergence aborts with the partial log") {
    TrainConfig cfg = tiny_config();
    cfg.lr_generator = 1e300;
    cfg.lr_discriminator = 1e300;
    cfg.stage4.iterations = 50;
    try {
      train({FaceTexture(0.6)}, cfg);
      FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
      CHECK(e.log().aborted);
      CHECK_FALSE(e.log().failure.empty());
      for (const TrainRecord& r : e.log().records) CHECK(std::isfinite(r.generator_loss));
    }
  }

  TEST_CASE("config JSON round trip and presets") {
    TrainConfig cfg = tiny_config();
    cfg.log_path = "/tmp/x.jsonl";
    const TrainConfig back = train_config_from_json(to_json(cfg));
    CHECK(back.stage4.iterations == cfg.stage4.iterations);
    CHECK(back.stage8.batch_size == cfg.stage8.batch_size);
    CHECK(back.generator == cfg.generator);
    CHECK(back.log_path == cfg.log_path);
    const TrainConfig paper = train_config_from_json({{"preset", "paper"}});
    CHECK(paper.stage4.batch_size == 1024);
    CHECK(paper.stage8.batch_size == 512);
    CHECK(paper.stage4.iterations + paper.stage8.iterations == 20000);
  }

  TEST_CASE("corpus directory entry point") {
    fixtures::TempDir dir;
    CHECK_THROWS_AS(train(dir.path(), tiny_config()), EmptyCorpus);
    save_face(FaceTexture(0.25), dir / "a.png");
    TrainConfig cfg = tiny_config();
    cfg.stage4.iterations = 2;
    cfg.stage8.iterations = 2;
    CHECK(train(dir.path(), cfg).log.records.size() == 4u);
  }
}
