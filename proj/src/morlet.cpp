#include "soz/morlet.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "soz/error.hpp"

namespace soz::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW planning is not thread-safe; execution with new arrays is.
fftw_plan plan_for(std::size_t n, bool inverse) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, bool>, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto key = std::make_pair(n, inverse);
  auto it = plans.find(key);
  if (it != plans.end()) return it->second;
  std::vector<std::complex<double>> tmp(n);
  auto* p = reinterpret_cast<fftw_complex*>(tmp.data());
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), p, p,
                                    inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.emplace(key, plan);
  return plan;
}

}  // namespace

std::size_t fft_friendly_size(std::size_t n) {
  if (n <= 1) return 1;
  std::size_t best = SIZE_MAX;
  for (std::size_t p2 = 1; p2 < 2 * n; p2 *= 2) {
    for (std::size_t p3 = p2; p3 < 2 * n; p3 *= 3) {
      for (std::size_t p5 = p3; p5 < 2 * n; p5 *= 5) {
        if (p5 >= n && p5 < best) best = p5;
      }
    }
  }
  return best;
}

void fft(std::vector<std::complex<double>>& x, bool inverse) {
  if (x.empty()) return;
  auto* p = reinterpret_cast<fftw_complex*>(x.data());
  fftw_execute_dft(plan_for(x.size(), inverse), p, p);
}

std::vector<double> mean_pool(std::span<const double> x, int out_len) {
  const std::size_t n = x.size();
  if (out_len < 1 || n < static_cast<std::size_t>(out_len)) {
    throw DomainError("cannot pool " + std::to_string(n) + " samples into " +
                      std::to_string(out_len) + " bins");
  }
  std::vector<double> out(static_cast<std::size_t>(out_len));
  for (std::size_t b = 0; b < out.size(); ++b) {
    const std::size_t lo = b * n / out.size();
    const std::size_t hi = (b + 1) * n / out.size();
    double acc = 0.0;
    for (std::size_t t = lo; t < hi; ++t) acc += x[t];
    out[b] = acc / static_cast<double>(hi - lo);
  }
  return out;
}

MorletBank::MorletBank(const BandDef& band, double rate_hz, std::size_t length,
                       MorletOptions opts)
    : band_(band), rate_hz_(rate_hz), length_(length), opts_(opts) {
  validate_band(band, rate_hz);
  if (opts.n_cycles < 1) throw DomainError("n_cycles must be >= 1");
  if (opts.n_freqs < 1) throw DomainError("n_freqs must be >= 1");
  for (int k = 0; k < opts.n_freqs; ++k) {
    const double frac = opts.n_freqs == 1 ? 0.5 : double(k) / (opts.n_freqs - 1);
    freqs_.push_back(band.lo_hz * std::pow(band.hi_hz / band.lo_hz, frac));
  }
  std::vector<std::size_t> half;
  for (double f : freqs_) {
    const double sigma_t = opts.n_cycles / (2.0 * kPi * f);
    half.push_back(static_cast<std::size_t>(
        std::ceil(opts.support_sigmas * sigma_t * rate_hz)));
  }
  half_width_ = *std::max_element(half.begin(), half.end());
  if (length < 2 * half_width_ + 1) {
    throw DomainError("signal of " + std::to_string(length) +
                      " samples is shorter than the " +
                      std::to_string(2 * half_width_ + 1) +
                      "-sample wavelet support for band " +
                      std::string(to_string(band.band)));
  }
  if (length < static_cast<std::size_t>(opts.out_len)) {
    throw DomainError("signal shorter than feature length");
  }
  fft_size_ = fft_friendly_size(length + 2 * half_width_);

  for (std::size_t k = 0; k < freqs_.size(); ++k) {
    const double f = freqs_[k];
    const double sigma_t = opts.n_cycles / (2.0 * kPi * f);
    const auto h = static_cast<std::ptrdiff_t>(half[k]);
    std::vector<std::complex<double>> w(fft_size_);
    double energy = 0.0;
    for (std::ptrdiff_t m = -h; m <= h; ++m) {
      const double t = static_cast<double>(m) / rate_hz;
      const double env = std::exp(-t * t / (2.0 * sigma_t * sigma_t));
      const auto v = std::polar(env, 2.0 * kPi * f * t);
      energy += env * env;
      const std::size_t idx =
          m >= 0 ? static_cast<std::size_t>(m)
                 : fft_size_ - static_cast<std::size_t>(-m);
      w[idx] = v;
    }
    const double norm = 1.0 / std::sqrt(energy);
    for (auto& v : w) v *= norm;
    fft(w, false);
    spectra_.push_back(std::move(w));
  }
}

std::vector<double> MorletBank::magnitude_trace(std::span<const double> x) const {
  if (x.size() != length_) {
    throw DomainError("MorletBank built for length " + std::to_string(length_) +
                      ", got " + std::to_string(x.size()));
  }
  const std::size_t n = length_;
  const std::size_t h = half_width_;
  std::vector<std::complex<double>> padded(fft_size_);
  // Reflect padding (edge sample not repeated).
  for (std::size_t j = 0; j < h; ++j) padded[j] = x[h - j];
  for (std::size_t t = 0; t < n; ++t) padded[h + t] = x[t];
  for (std::size_t j = 0; j < h; ++j) padded[h + n + j] = x[n - 2 - j];
  fft(padded, false);

  std::vector<double> trace(n, 0.0);
  std::vector<std::complex<double>> work(fft_size_);
  const double scale = 1.0 / static_cast<double>(fft_size_);
  // Plain arithmetic: std::complex multiply and abs go through __muldc3 and
  // hypot, which dominate the cost otherwise.
  const auto* pin = reinterpret_cast<const double*>(padded.data());
  auto* pw = reinterpret_cast<double*>(work.data());
  for (const auto& spec : spectra_) {
    const auto* ps = reinterpret_cast<const double*>(spec.data());
    for (std::size_t i = 0; i < 2 * fft_size_; i += 2) {
      pw[i] = pin[i] * ps[i] - pin[i + 1] * ps[i + 1];
      pw[i + 1] = pin[i] * ps[i + 1] + pin[i + 1] * ps[i];
    }
    fft(work, true);
    for (std::size_t t = 0; t < n; ++t) {
      const double re = pw[2 * (h + t)], im = pw[2 * (h + t) + 1];
      trace[t] += std::sqrt(re * re + im * im) * scale;
    }
  }
  const double inv = 1.0 / static_cast<double>(spectra_.size());
  for (auto& v : trace) v *= inv;
  return trace;
}

std::vector<double> MorletBank::power(std::span<const double> x) const {
  return mean_pool(magnitude_trace(x), opts_.out_len);
}

std::vector<FeatureVector> morlet_power(const Recording& rec_band,
                                        const BandDef& band, int n_cycles,
                                        int out_len) {
  rec_band.validate();
  MorletOptions opts;
  opts.n_cycles = n_cycles;
  opts.out_len = out_len;
  MorletBank bank(band, rec_band.rate_hz,
                  static_cast<std::size_t>(rec_band.length()), opts);
  std::vector<FeatureVector> out;
  for (Eigen::Index c = 0; c < rec_band.channels(); ++c) {
    FeatureVector fv;
    fv.values = bank.power(rec_band.channel(c));
    fv.site_index = static_cast<int>(c);
    fv.band = band.band;
    fv.state = rec_band.state.value_or(State::wake);
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace soz::dsp
