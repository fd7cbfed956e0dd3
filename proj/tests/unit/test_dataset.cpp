#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include "corpus.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "skinforge/dataset.hpp"
#include "skinforge/error.hpp"

using namespace skinforge;

namespace {

FaceTexture half_and_half() {
  FaceTexture f;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = y < 4 ? 0.0 : 1.0;
  return f;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("channel_stats anchors") {
    const ChannelStats zero = channel_stats(FaceTexture(0.0));
    for (int c = 0; c < 3; ++c) {
      CHECK(zero.mu[c] == 0.0);
      CHECK(zero.sigma[c] == 0.0);
    }
    const ChannelStats half = channel_stats(half_and_half());
    for (int c = 0; c < 3; ++c) {
      CHECK(half.mu[c] == 0.5);
      CHECK(half.sigma[c] == 0.5);
    }
  }

  TEST_CASE("channel_stats matches the two-pass oracle on 1000 faces") {
    std::mt19937_64 gen(21);
    for (int i = 0; i < 1000; ++i) {
      const FaceTexture f = fixtures::random_face(gen);
      const ChannelStats s = channel_stats(f);
      const oracle::Stats6 o = oracle::stats(f.values());
      for (int c = 0; c < 3; ++c) {
        REQUIRE(std::fabs(s.mu[c] - o.mu[c]) < 1e-9);
        REQUIRE(std::fabs(s.sigma[c] - o.sigma[c]) < 1e-9);
      }
    }
  }

  TEST_CASE("sigma is zero exactly for constant channels") {
    FaceTexture f(0.3);
    f.at(2, 2, 1) = 0.4;
    const ChannelStats s = channel_stats(f);
    CHECK(s.sigma[0] == 0.0);
    CHECK(s.sigma[1] > 0.0);
    CHECK(s.sigma[2] == 0.0);
  }

  TEST_CASE("low variance threshold is strict") {
    CHECK(is_low_variance(FaceTexture(0.7), 0.02));
    CHECK_FALSE(is_low_variance(half_and_half(), 0.02));
    // Two values 0.25 apart split evenly: sigma = 0.125 in every channel.
    FaceTexture f;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) f.at(y, x, c) = x < 4 ? 0.25 : 0.5;
    CHECK(channel_stats(f).sigma[0] == 0.125);
    CHECK_FALSE(is_low_variance(f, 0.125));
    CHECK(is_low_variance(f, 0.125000001));
  }

  TEST_CASE("monochrome examples") {
    CHECK(is_monochromatic(FaceTexture(0.3), 0.0));
    FaceTexture one_off(0.3);
    one_off.at(4, 4, 2) = 0.8;
    CHECK_FALSE(is_monochromatic(one_off, 0.01));

    std::mt19937_64 gen(2);
    for (int i = 0; i < 50; ++i) {
      const FaceTexture f = fixtures::monochrome_face(gen, true);
      REQUIRE(is_monochromatic(f, 1.0 / 255.0));
    }
  }

  TEST_CASE("monochrome agrees with a brute-force scan") {
    std::mt19937_64 gen(9);
    std::uniform_int_distribution<int> spread(0, 4);
    for (int i = 0; i < 300; ++i) {
      FaceTexture f;
      const int base = 100;
      const int s = spread(gen);
      std::uniform_int_distribution<int> d(-s, s);
      for (double& v : f.values()) v = fixtures::q(base + d(gen));
      // Oracle: some grid color has every pixel within tolerance and is the
      // most common color (the only reference used by the filter).
      const double tol = 1.0 / 255.0;
      std::map<std::array<int, 3>, int> counts;
      for (int p = 0; p < 64; ++p) {
        std::array<int, 3> key;
        for (int c = 0; c < 3; ++c) key[c] = static_cast<int>(std::lround(f.values()[3 * p + c] * 255));
        ++counts[key];
      }
      auto mode = std::max_element(counts.begin(), counts.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
      bool expect = true;
      for (int p = 0; p < 64; ++p)
        for (int c = 0; c < 3; ++c)
          if (std::fabs(f.values()[3 * p + c] - mode->first[c] / 255.0) > tol + 1e-12) expect = false;
      REQUIRE(is_monochromatic(f, tol) == expect);
    }
  }

  TEST_CASE("checkerboard examples") {
    CHECK(is_checkerboard(fixtures::classic_checkerboard()));
    CHECK_FALSE(is_checkerboard(FaceTexture(0.5)));
    std::mt19937_64 gen(4);
    for (int i = 0; i < 20; ++i) {
      REQUIRE(is_checkerboard(fixtures::checker_face(gen, 2)));
      REQUIRE(is_checkerboard(fixtures::checker_face(gen, 4)));
    }
  }

  TEST_CASE("random faces are not checkerboards (tiling oracle)") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 200; ++i) {
      const FaceTexture f = fixtures::random_face(gen);
      bool tiled = false;
      for (int p : {2, 4}) {
        bool ok = true;
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
              ok = ok && oracle::quantize(f.at(y, x, c)) == oracle::quantize(f.at(y % p, x % p, c));
        tiled = tiled || ok;
      }
      REQUIRE(is_checkerboard(f) == tiled);
    }
  }

  TEST_CASE("filter order reports the more specific reason") {
    const RefinementConfig cfg;
    CHECK(classify_face(FaceTexture(0.2), cfg) == RejectReason::monochrome);
    std::mt19937_64 gen(6);
    CHECK(classify_face(fixtures::low_std_face(gen), cfg) == RejectReason::low_std);
    CHECK(classify_face(fixtures::checker_face(gen, 2), cfg) == RejectReason::checkerboard);
    CHECK(classify_face(fixtures::natural_face(gen), cfg) == RejectReason::none);
  }

  TEST_CASE("refine_corpus on small fixture directories") {
    fixtures::TempDir in, out;
    std::mt19937_64 gen(7);
    save_skin(embed_face(FaceTexture(0.4), default_base_skin()), in / "a_constant.png");
    save_skin(embed_face(fixtures::natural_face(gen), default_base_skin()), in / "b_natural.png");
    const RefinementReport report = refine_corpus(in.path(), {0.02, 1.0 / 255.0, out.path()});
    REQUIRE(report.decisions.size() == 2);
    CHECK(report.decisions[0].reason == RejectReason::monochrome);
    CHECK(report.decisions[1].accepted());
    CHECK(report.accepted_count == 1);
    CHECK(report.rejected_count == 1);
    CHECK(std::filesystem::exists(out / "b_natural.png"));
    CHECK_FALSE(std::filesystem::exists(out / "a_constant.png"));
    CHECK(read_report(out / kReportFileName) == report);
    CHECK(load_corpus(out.path()).size() == 1);
  }

  TEST_CASE("empty and corrupt inputs") {
    fixtures::TempDir empty;
    const RefinementReport none = refine_corpus(empty.path(), {});
    CHECK(none.decisions.empty());
    CHECK(none.accepted_count + none.rejected_count == 0);

    fixtures::TempDir bad;
    std::ofstream(bad / "broken.png") << "not a png at all";
    const RefinementReport r = refine_corpus(bad.path(), {});
    REQUIRE(r.decisions.size() == 1);
    CHECK(r.decisions[0].reason == RejectReason::unreadable);

    CHECK_THROWS_AS(refine_corpus(empty / "missing", {}), IoError);
  }

  TEST_CASE("labelled corpus is classified exactly and deterministically") {
    fixtures::TempDir in;
    const auto files = fixtures::write_labelled_corpus(in.path(), 99);
    const RefinementReport a = refine_corpus(in.path(), {});
    const RefinementReport b = refine_corpus(in.path(), {});
    CHECK(a == b);
    REQUIRE(a.decisions.size() == files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
      CHECK(a.decisions[i].source.filename() == files[i].name);
      CHECK(a.decisions[i].reason == files[i].label);
    }
    CHECK(a.accepted_count == 20);
    CHECK(a.rejected_count == 30);
  }

  TEST_CASE("reason strings round trip") {
    for (auto r : {RejectReason::none, RejectReason::low_std, RejectReason::checkerboard, RejectReason::monochrome,
                   RejectReason::unreadable}) {
      CHECK(reject_reason_from_string(to_string(r)) == r);
    }
    CHECK_THROWS_AS(reject_reason_from_string("blurry"), InvalidArgument);
  }
}
