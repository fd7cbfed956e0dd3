#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "skinforge/dataset.hpp"
#include "skinforge/error.hpp"
#include "skinforge/inversion.hpp"

using namespace skinforge;

namespace {

GeneratorWeights weights_with_average() {
  GeneratorWeights w = fixtures::small_weights();
  w.set_cached_average(average_latent(w, 500, NoiseSeed{0}));
  return w;
}

}  // namespace

TEST_SUITE("inversion") {
  TEST_CASE("stat_loss anchors") {
    CHECK(stat_loss(FaceTexture(0.5), SourceImage(RgbImage(8, 8, 0.0))) == 0.5);
    std::mt19937_64 gen(1);
    const FaceTexture x = fixtures::random_face(gen);
    CHECK(stat_loss(x, x.as_source()) == 0.0);
  }

  TEST_CASE("stat_loss matches the oracle on random pairs, any source size") {
    std::mt19937_64 gen(2);
    for (int i = 0; i < 100; ++i) {
      const FaceTexture g = fixtures::random_face(gen);
      const RgbImage o = fixtures::random_image(gen, 8 + static_cast<int>(gen() % 40), 8 + static_cast<int>(gen() % 40));
      REQUIRE(std::fabs(stat_loss(g, SourceImage(o)) - oracle::stat_loss(g.values(), o.values())) < 1e-9);
    }
  }

  TEST_CASE("stat_loss ignores pixel order and is non-negative") {
    std::mt19937_64 gen(3);
    const FaceTexture g = fixtures::random_face(gen);
    const RgbImage o = fixtures::random_image(gen, 12, 9);
    FaceTexture shuffled = g;
    std::vector<int> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    for (int p = 0; p < 64; ++p)
      for (int c = 0; c < 3; ++c) shuffled.values()[3 * p + c] = g.values()[3 * perm[p] + c];
    CHECK(stat_loss(shuffled, SourceImage(o)) == doctest::Approx(stat_loss(g, SourceImage(o))).epsilon(1e-12));
    CHECK(stat_loss(g, SourceImage(o)) > 0.0);
  }

  TEST_CASE("objective examples") {
    const auto& w = fixtures::small_weights();
    std::mt19937_64 gen(4);
    const LatentWPlus lat = fixtures::random_latent(gen);
    const FaceTexture rendered = synthesize(w, lat);

    const ObjectiveTerms zero = inversion_objective(w, lat, rendered, rendered.as_source(), {});
    CHECK(zero.total == 0.0);

    FaceTexture offset = rendered;
    for (double& v : offset.values()) v = v < 0.5 ? v + 0.1 : v - 0.1;
    InversionConfig cfg;
    cfg.lambda_mse = 1.7;
    cfg.lambda_stat = 0.0;
    const ObjectiveTerms t = inversion_objective(w, lat, offset, rendered.as_source(), cfg);
    CHECK(t.total == doctest::Approx(1.7 * 0.01).epsilon(1e-12));
  }

  TEST_CASE("objective matches the composed oracle on 100 instances") {
    const auto& w = fixtures::small_weights();
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> lam(0.0, 2.0);
    for (int i = 0; i < 100; ++i) {
      const LatentWPlus lat = fixtures::random_latent(gen);
      const FaceTexture target = fixtures::random_face(gen);
      const RgbImage original = fixtures::random_image(gen, 16, 24);
      InversionConfig cfg;
      cfg.lambda_mse = lam(gen);
      cfg.lambda_stat = lam(gen);
      const ObjectiveTerms t = inversion_objective(w, lat, target, SourceImage(original), cfg);
      const FaceTexture g = synthesize(w, lat);
      const double mse = oracle::sum_sq_diff(g.values(), target.values());
      const double st = oracle::stat_loss(g.values(), original.values());
      REQUIRE(std::fabs(t.mse_term - mse) < 1e-9);
      REQUIRE(std::fabs(t.stat_term - st) < 1e-9);
      REQUIRE(std::fabs(t.total - (cfg.lambda_mse * mse / 192.0 + cfg.lambda_stat * st)) < 1e-9);
    }
  }

  TEST_CASE("objective gradient matches central differences on 10 instances") {
    const auto& w = fixtures::small_weights();
    std::mt19937_64 gen(6);
    for (int i = 0; i < 10; ++i) {
      const LatentWPlus lat = fixtures::random_latent(gen);
      const FaceTexture target = fixtures::random_face(gen);
      const RgbImage original = fixtures::random_image(gen, 10, 10);
      const ChannelStats stats = channel_stats(original);
      const InversionConfig cfg;
      LatentWPlus grad;
      const ObjectiveTerms t = inversion_objective_gradient(w, lat, target, stats, cfg, grad);
      CHECK(t.total == doctest::Approx(inversion_objective(w, lat, target, SourceImage(original), cfg).total));
      auto f = [&](std::span<const double> x) {
        return inversion_objective(w, LatentWPlus(std::vector<double>(x.begin(), x.end())), target,
                                   SourceImage(original), cfg)
            .total;
      };
      const auto numeric = oracle::central_difference(f, lat.values(), 1e-3);
      REQUIRE(oracle::relative_error(grad.values(), numeric) < 1e-4);
    }
  }

  TEST_CASE("stat gradient at a tie uses the zero subgradient") {
    const FaceTexture g(0.4);
    ChannelStats same = channel_stats(g);
    std::vector<double> grad(kFaceValues, 0.0);
    CHECK(stat_loss_with_gradient(g.values(), same, 1.0, grad) == 0.0);
    for (double v : grad) CHECK(v == 0.0);
  }

  TEST_CASE("best-so-far contract and decomposition identity") {
    const GeneratorWeights w = weights_with_average();
    std::mt19937_64 gen(7);
    const RgbImage img = fixtures::random_image(gen, 20, 20);
    InversionConfig cfg;
    cfg.steps = 40;
    cfg.record_trajectory = true;
    const InversionResult r = invert(w, SourceImage(img), cfg);
    REQUIRE(r.loss_trajectory);
    CHECK(r.loss_trajectory->size() == 40u);
    const double initial = r.loss_trajectory->front().total;
    CHECK(r.final_loss <= initial);
    for (const auto& p : *r.loss_trajectory) CHECK(r.final_loss <= p.total);
    CHECK(std::fabs(r.final_loss - (cfg.lambda_mse * r.mse_term / 192.0 + cfg.lambda_stat * r.stat_term)) < 1e-9);
    CHECK(r.rendered == synthesize(w, r.latent));
    const ObjectiveTerms re = inversion_objective(w, r.latent, downsample_to_face(SourceImage(img)), SourceImage(img), cfg);
    CHECK(re.total == doctest::Approx(r.final_loss).epsilon(1e-12));
  }

  TEST_CASE("one step returns the better of the start and the single update") {
    const GeneratorWeights w = weights_with_average();
    std::mt19937_64 gen(8);
    const SourceImage img(fixtures::random_image(gen, 8, 8));
    InversionConfig cfg;
    cfg.steps = 1;
    cfg.record_trajectory = true;
    const InversionResult r = invert(w, img, cfg);
    CHECK(r.loss_trajectory->size() == 1u);
    const FaceTexture target = downsample_to_face(img);
    const LatentWPlus start = *w.cached_average();
    const double at_start = inversion_objective(w, start, target, img, cfg).total;
    CHECK(r.final_loss <= at_start);
    CHECK((r.best_step == 0 || r.best_step == 1));
    if (r.best_step == 0) CHECK(r.latent == start);
  }

  TEST_CASE("inversion is deterministic and supports random init") {
    const GeneratorWeights w = weights_with_average();
    std::mt19937_64 gen(9);
    const SourceImage img(fixtures::random_image(gen, 16, 16));
    InversionConfig cfg;
    cfg.steps = 15;
    cfg.init = InitMode::random;
    cfg.seed = 77;
    const InversionResult a = invert(w, img, cfg), b = invert(w, img, cfg);
    CHECK(a.latent == b.latent);
    CHECK(a.final_loss == b.final_loss);
    cfg.seed = 78;
    CHECK_FALSE(invert(w, img, cfg).latent == a.latent);
  }

  TEST_CASE("self-inversion recovers a rendered face") {
    const GeneratorWeights w = weights_with_average();
    const LatentWPlus w0 = sample_random_latent(w, 1.0, NoiseSeed{5});
    const FaceTexture face = synthesize(w, w0);
    const InversionResult r = invert(w, face.as_source(), {});
    CHECK(r.mse_term / 192.0 < 1e-3);
  }

  TEST_CASE("config validation") {
    InversionConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = {};
    cfg.lambda_stat = -1;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = {};
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = {};
    cfg.lr_rampdown = 1.5;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg.lr_rampdown = -0.1;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
  }

  TEST_CASE("learning rate ramp-down") {
    InversionConfig cfg;
    cfg.steps = 100;
    cfg.learning_rate = 0.05;
    cfg.lr_rampdown = 0.25;
    CHECK(scheduled_learning_rate(cfg, 0) == 0.05);
    CHECK(scheduled_learning_rate(cfg, 75) == 0.05);
    CHECK(scheduled_learning_rate(cfg, 88) == doctest::Approx(0.05 * (0.5 - 0.5 * std::cos(0.48 * M_PI))));
    CHECK(scheduled_learning_rate(cfg, 99) == doctest::Approx(0.05 * (0.5 - 0.5 * std::cos(0.04 * M_PI))));
    CHECK(scheduled_learning_rate(cfg, 99) > 0.0);
    cfg.lr_rampdown = 0.0;
    CHECK(scheduled_learning_rate(cfg, 99) == 0.05);
    // a single step still gets the full rate
    cfg.lr_rampdown = 1.0;
    cfg.steps = 1;
    CHECK(scheduled_learning_rate(cfg, 0) == 0.05);
  }

  TEST_CASE("trajectory export is one JSON record per step") {
    fixtures::TempDir dir;
    write_trajectory({{0, 1.0, 2.0, 3.0}, {1, 0.5, 1.0, 0.25}}, dir / "t.jsonl");
    std::ifstream in(dir / "t.jsonl");
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK_FALSE(std::getline(in, l3));
    CHECK(l2.find("\"stat_term\":0.25") != std::string::npos);
  }
}
