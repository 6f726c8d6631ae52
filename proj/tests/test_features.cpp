#include <doctest.h>

#include <filesystem>

#include "soz/error.hpp"
#include "soz/features.hpp"
#include "testutil.hpp"

using namespace soz;
using namespace soz::features;
namespace fs = std::filesystem;

TEST_CASE("z-scoring is per band and state over sites and bins") {
  Rng rng(1);
  SiteTensor t("p", 5, 8);
  for (int s = 0; s < 5; ++s) {
    for (int st = 0; st < 3; ++st) {
      for (int b = 0; b < 6; ++b) {
        for (int d = 0; d < 8; ++d) t.vec(s, st, b)[d] = 10.0 * b + st + (1 + b) * rng.normal();
      }
    }
  }
  const auto raw = t;
  zscore_features(t);
  for (int st = 0; st < 3; ++st) {
    for (int b = 0; b < 6; ++b) {
      double sum = 0, ss = 0;
      for (int s = 0; s < 5; ++s) {
        for (int d = 0; d < 8; ++d) sum += t.vec(s, st, b)[d];
      }
      const double mean = sum / 40.0;
      for (int s = 0; s < 5; ++s) {
        for (int d = 0; d < 8; ++d) ss += (t.vec(s, st, b)[d] - mean) * (t.vec(s, st, b)[d] - mean);
      }
      CHECK(std::abs(mean) < 1e-12);
      CHECK(std::sqrt(ss / 40.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  // Affine map within each block: ordering inside a block is preserved.
  CHECK((t.vec(0, 1, 2)[0] < t.vec(1, 1, 2)[0]) == (raw.vec(0, 1, 2)[0] < raw.vec(1, 1, 2)[0]));
}

TEST_CASE("site tensor store round-trip") {
  Rng rng(2);
  SiteTensor t("p003", 4, 6);
  for (auto& v : t.values) v = static_cast<float>(rng.normal());
  t.labels = {0, 1, 1, 0};
  t.meta["note"] = "x";
  const auto dir = fs::temp_directory_path() / "soz_test_store";
  fs::remove_all(dir);
  save_site_tensor(t, dir, "features");
  const auto back = load_site_tensor(dir, "p003", "features");
  CHECK(back.values == t.values);
  CHECK(back.labels == t.labels);
  CHECK(back.sites == 4);
  CHECK(back.dim == 6);
  CHECK(list_store(dir, "features") == std::vector<std::string>{"p003"});
  CHECK_THROWS(load_site_tensor(dir, "p003", "latents"));
  fs::remove_all(dir);
}

TEST_CASE("preprocess config json") {
  PreprocessConfig c;
  c.feat_len = 64;
  const auto back = preprocess_config_from_json(to_json(c));
  CHECK(back.feat_len == 64);
  auto j = to_json(c);
  j["notch"] = 60;
  CHECK_THROWS_AS(preprocess_config_from_json(j), ConfigError);
  j = to_json(c);
  j["feat_len"] = 63;
  CHECK_THROWS_AS(preprocess_config_from_json(j), ConfigError);
}

TEST_CASE("state features of a small recording") {
  const double rate = 10000.0;
  const std::size_t n = 100000;  // 10 s
  auto rec = testutil::recording({testutil::tone(6.0, rate, n), testutil::tone(20.0, rate, n)}, rate);
  PreprocessConfig cfg;
  cfg.feat_len = 32;
  const auto f = state_features(rec, cfg);
  REQUIRE(f.size() == 2u);
  for (const auto& v : f) CHECK(v.size() == 6u * 32u);
  const auto mean = [&](int site, int band) {
    double s = 0;
    for (int t = 0; t < 32; ++t) s += f[static_cast<std::size_t>(site)][static_cast<std::size_t>(band * 32 + t)];
    return s / 32.0;
  };
  // Site 0 carries theta, site 1 beta.
  CHECK(mean(0, 1) > 5.0 * mean(0, 3));
  CHECK(mean(1, 3) > 5.0 * mean(1, 1));
}

TEST_CASE("ccep preprocessing changes rate") {
  Rng rng(3);
  auto rec = testutil::recording({testutil::noise(rng, 20000)}, 10000.0);
  const auto out = preprocess_ccep(rec, {});
  CHECK(out.rate_hz == 5000.0);
  CHECK(out.length() == 10000);
}
