#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "soz/error.hpp"
#include "soz/morlet.hpp"
#include "testutil.hpp"

using namespace soz;
using namespace soz::dsp;
using testutil::rms;
using testutil::tone;

TEST_CASE("notch removes the mains tone and passes DC") {
  const auto x = tone(50.0, 10000.0, 20000);
  const auto y = notch_channel(x, 10000.0, 50.0);
  CHECK(rms(y) < 0.1 * rms(x));
  CHECK(rms(y) < 0.01 * rms(x));

  std::vector<double> dc(5000, 3.0);
  for (double v : notch_channel(dc, 10000.0, 50.0)) CHECK(v == doctest::Approx(3.0).epsilon(1e-6));

  CHECK_THROWS_AS(notch_channel(dc, 10000.0, 6000.0), DomainError);
}

TEST_CASE("notch on a recording keeps its shape") {
  auto rec = testutil::recording({tone(50.0, 10000.0, 4000), tone(10.0, 10000.0, 4000)}, 10000.0);
  const auto out = notch_filter(rec, 50.0);
  CHECK(out.channels() == 2);
  CHECK(out.length() == 4000);
  CHECK(out.rate_hz == 10000.0);
  CHECK_THROWS_AS(notch_filter(rec, 5000.0), DomainError);
}

TEST_CASE("lowpass passes 100 Hz and rejects 3 kHz") {
  const auto lo = tone(100.0, 10000.0, 20000);
  CHECK(rms(lowpass_channel(lo, 10000.0, 800.0)) == doctest::Approx(rms(lo)).epsilon(0.05));
  const auto hi = tone(3000.0, 10000.0, 20000);
  CHECK(rms(lowpass_channel(hi, 10000.0, 800.0)) <= 0.1 * rms(hi));
  // 20 dB at twice the cutoff.
  const auto edge = tone(1600.0, 10000.0, 20000);
  CHECK(rms(lowpass_channel(edge, 10000.0, 800.0)) <= 0.1 * rms(edge));
  CHECK_THROWS_AS(lowpass_channel(lo, 10000.0, 5000.0), DomainError);
}

TEST_CASE("downsample length, factor and tone survival") {
  const auto x = tone(10.0, 10000.0, 10000);
  const auto y = downsample_channel(x, 10000.0, 1000.0);
  CHECK(y.size() == 1000);
  CHECK(rms(y, 100) == doctest::Approx(rms(x, 1000)).epsilon(0.05));
  CHECK(decimation_factor(10000.0, 5000.0) == 2);
  CHECK_THROWS_AS(decimation_factor(10000.0, 3000.0), DomainError);
  auto rec = testutil::recording({x}, 10000.0);
  CHECK(downsample(rec, 1000.0).length() == 1000);
  CHECK(downsample(rec, 1000.0).rate_hz == 1000.0);
  CHECK_THROWS_AS(downsample(rec, 3000.0), DomainError);
}

TEST_CASE("bandpass selects its band") {
  const auto x = tone(6.0, 1000.0, 20000);
  CHECK(rms(bandpass_channel(x, 1000.0, band_def(Band::theta)), 2000) ==
        doctest::Approx(rms(x, 2000)).epsilon(0.10));
  CHECK(rms(bandpass_channel(x, 1000.0, band_def(Band::beta)), 2000) <= 0.1 * rms(x, 2000));
  std::vector<double> zero(3000, 0.0);
  for (double v : bandpass_channel(zero, 1000.0, band_def(Band::alpha))) CHECK(v == 0.0);
  CHECK_THROWS_AS(bandpass_channel(zero, 250.0, band_def(Band::high_gamma)), DomainError);
}

TEST_CASE("bandpass is zero phase") {
  const auto x = tone(10.0, 1000.0, 8000);
  const auto y = bandpass_channel(x, 1000.0, band_def(Band::alpha));
  // Cross-correlation peak at lag 0.
  double best = -1e300;
  int best_lag = 99;
  for (int lag = -20; lag <= 20; ++lag) {
    double s = 0.0;
    for (int t = 1000; t < 7000; ++t) s += x[static_cast<std::size_t>(t)] * y[static_cast<std::size_t>(t + lag)];
    if (s > best) {
      best = s;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filters are linear") {
  Rng rng(11);
  const auto a = testutil::noise(rng, 6000);
  const auto b = testutil::noise(rng, 6000);
  std::vector<double> mix(6000);
  for (std::size_t t = 0; t < mix.size(); ++t) mix[t] = 2.5 * a[t] - 0.75 * b[t];
  const auto check = [&](auto&& f) {
    const auto fa = f(a), fb = f(b), fm = f(mix);
    double scale = 0.0, err = 0.0;
    for (std::size_t t = 0; t < fm.size(); ++t) {
      scale = std::max(scale, std::abs(fm[t]));
      err = std::max(err, std::abs(fm[t] - (2.5 * fa[t] - 0.75 * fb[t])));
    }
    CHECK(err <= 1e-6 * scale);
  };
  check([](const std::vector<double>& x) { return notch_channel(x, 10000.0, 50.0); });
  check([](const std::vector<double>& x) { return lowpass_channel(x, 10000.0, 800.0); });
  check([](const std::vector<double>& x) { return bandpass_channel(x, 1000.0, band_def(Band::beta)); });
  check([](const std::vector<double>& x) { return downsample_channel(x, 10000.0, 5000.0); });
}

TEST_CASE("band table") {
  CHECK(kBands.size() == 6);
  CHECK(band_def(Band::delta).lo_hz == 1.0);
  CHECK(band_def(Band::high_gamma).hi_hz == 150.0);
  CHECK(band_from_string("low_gamma") == Band::low_gamma);
  CHECK_THROWS(band_from_string("gamma"));
}

TEST_CASE("morlet power of a delta-band tone is stationary") {
  const auto x = tone(2.5, 1000.0, 60000);
  const auto rec = testutil::recording({x}, 1000.0);
  const auto feats = morlet_power(rec, band_def(Band::delta));
  REQUIRE(feats.size() == 1);
  const auto& v = feats[0].values;
  REQUIRE(v.size() == 128);
  std::vector<double> mid(v.begin() + 8, v.end() - 8);
  const double mean = std::accumulate(mid.begin(), mid.end(), 0.0) / static_cast<double>(mid.size());
  double ss = 0.0;
  for (double m : mid) ss += (m - mean) * (m - mean);
  CHECK(std::sqrt(ss / static_cast<double>(mid.size())) / mean < 0.1);
  for (double m : v) CHECK(m >= 0.0);
}

TEST_CASE("morlet power scales with amplitude and vanishes on zero input") {
  MorletBank bank(band_def(Band::theta), 1000.0, 10000);
  const auto x = tone(6.0, 1000.0, 10000);
  const auto x2 = tone(6.0, 1000.0, 10000, 2.0);
  const auto p1 = bank.power(x);
  const auto p2 = bank.power(x2);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p2[i] == doctest::Approx(2.0 * p1[i]).epsilon(1e-6));
  std::vector<double> zero(10000, 0.0);
  for (double v : bank.power(zero)) CHECK(v == 0.0);
}

TEST_CASE("morlet rejects signals shorter than the wavelet") {
  CHECK_THROWS_AS(MorletBank(band_def(Band::delta), 1000.0, 500), DomainError);
}

TEST_CASE("out-of-band tone carries little power after band-pass") {
  const auto in_band = tone(20.0, 1000.0, 20000);
  const auto out_band = tone(3.0, 1000.0, 20000);
  MorletBank bank(band_def(Band::beta), 1000.0, 20000);
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const double pin = mean(bank.power(bandpass_channel(in_band, 1000.0, band_def(Band::beta))));
  const double pout = mean(bank.power(bandpass_channel(out_band, 1000.0, band_def(Band::beta))));
  CHECK(pout < 0.05 * pin);
}

TEST_CASE("mean pooling bins") {
  const std::vector<double> x = {1, 3, 5, 7};
  const auto y = mean_pool(x, 2);
  CHECK(y == std::vector<double>{2, 6});
  const std::vector<double> odd = {1, 2, 3, 4, 5};
  const auto z = mean_pool(odd, 2);  // bins [0,2) and [2,5)
  CHECK(z[0] == doctest::Approx(1.5));
  CHECK(z[1] == doctest::Approx(4.0));
}

TEST_CASE("fft matches a direct DFT") {
  Rng rng(3);
  for (std::size_t n : {7u, 12u, 60u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto y = x;
    fft(y, false);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> s = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        s += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
      }
      CHECK(std::abs(s - y[k]) < 1e-9);
    }
  }
  CHECK(fft_friendly_size(97) == 100);
  CHECK(fft_friendly_size(128) == 128);
}

TEST_CASE("baseline averages ten slices of the first minute") {
  const double rate = 100.0;
  const std::size_t n = 7000;  // 70 s, only the first 60 s count
  std::vector<double> c(n, 1.7);
  auto rec = testutil::recording({c}, rate);
  const auto b = build_baseline(rec);
  CHECK(b.length() == 600);
  for (Eigen::Index t = 0; t < b.length(); ++t) CHECK(b.samples(0, t) == doctest::Approx(1.7));

  std::vector<double> alt(6000);
  for (std::size_t t = 0; t < alt.size(); ++t) alt[t] = (t / 600) % 2 == 0 ? 1.0 : -1.0;
  const auto z = build_baseline(testutil::recording({alt}, rate));
  CHECK(z.samples.cwiseAbs().maxCoeff() == 0.0);

  Rng rng(5);
  const auto x = testutil::noise(rng, 6000);
  const auto y = build_baseline(testutil::recording({x}, rate));
  for (std::size_t t = 0; t < 600; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < 10; ++k) s += static_cast<float>(x[k * 600 + t]);
    CHECK(std::abs(y.samples(0, static_cast<Eigen::Index>(t)) - s / 10.0) < 1e-6);
  }
  CHECK_THROWS_AS(build_baseline(testutil::recording({std::vector<double>(5000, 0.0)}, rate)), DomainError);
}

TEST_CASE("recording validation") {
  Recording r;
  r.rate_hz = 100.0;
  CHECK_THROWS_AS(r.validate(), DomainError);
  r.samples = SampleMatrix::Zero(1, 4);
  CHECK_NOTHROW(r.validate());
  r.samples(0, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(r.validate(), DomainError);
}
