#include "soz/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "soz/error.hpp"

namespace soz::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f, double fs) { return 2.0 * fs * std::tan(kPi * f / fs); }

// Left-half-plane Butterworth prototype poles with positive imaginary part
// (their conjugates are implied). Order must be even.
std::vector<cplx> prototype_upper_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1) / (2.0 * order);
    cplx p = std::polar(1.0, theta);
    if (p.imag() > 0) poles.push_back(p);
  }
  return poles;
}

void require_even_order(int order) {
  if (order < 2 || order % 2 != 0) {
    throw ConfigError("filter order must be even and >= 2, got " +
                      std::to_string(order));
  }
}

void require_below_nyquist(double f, double fs, const char* what) {
  if (!(fs > 0.0)) throw DomainError("sampling rate must be positive");
  if (!(f > 0.0) || f >= fs / 2.0) {
    throw DomainError(std::string(what) + " " + std::to_string(f) +
                      " Hz must lie in (0, Nyquist=" + std::to_string(fs / 2.0) +
                      " Hz)");
  }
}

Biquad section_from_pole(cplx p, double b0, double b1, double b2) {
  return Biquad{b0, b1, b2, -2.0 * p.real(), std::norm(p)};
}

cplx section_response(const Biquad& s, double w) {
  const cplx z1 = std::polar(1.0, -w);
  const cplx z2 = z1 * z1;
  return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

void normalize_sections(Sos& sos, double ref_hz, double fs) {
  const double w = 2.0 * kPi * ref_hz / fs;
  for (auto& s : sos) {
    const double g = std::abs(section_response(s, w));
    s.b0 /= g;
    s.b1 /= g;
    s.b2 /= g;
  }
}

double max_pole_radius(const Sos& sos) {
  double r = 0.0;
  for (const auto& s : sos) {
    // Roots of z^2 + a1 z + a2.
    const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    r = std::max({r, std::abs((-s.a1 + disc) / 2.0),
                  std::abs((-s.a1 - disc) / 2.0)});
  }
  return r;
}

std::size_t pad_length(const Sos& sos, std::size_t n) {
  if (n < 2) return 0;
  std::size_t pad = 3 * (2 * sos.size() + 1);
  const double r = max_pole_radius(sos);
  if (r > 0.0 && r < 1.0) {
    const double tau = -1.0 / std::log(r);
    pad = std::max(pad, static_cast<std::size_t>(std::ceil(6.0 * tau)));
  }
  return std::min(pad, n - 1);
}

// Steady-state section states for a unit step at the cascade input.
std::vector<std::array<double, 2>> step_states(const Sos& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& s = sos[k];
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * g;
    const double z1 = s.b1 - s.a1 * g + z2;
    zi[k] = {scale * z1, scale * z2};
    scale *= g;
  }
  return zi;
}

void run_sections(const Sos& sos, std::vector<double>& y,
                  std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& s = sos[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

std::vector<std::array<double, 2>> scaled(
    const std::vector<std::array<double, 2>>& zi, double x0) {
  auto out = zi;
  for (auto& z : out) {
    z[0] *= x0;
    z[1] *= x0;
  }
  return out;
}

template <typename ChannelOp>
Recording map_channels(const Recording& rec, double out_rate, ChannelOp op) {
  rec.validate();
  Recording out;
  out.rate_hz = out_rate;
  out.state = rec.state;
  for (Eigen::Index c = 0; c < rec.channels(); ++c) {
    std::vector<double> y = op(rec.channel(c));
    if (c == 0) {
      out.samples.resize(rec.channels(), static_cast<Eigen::Index>(y.size()));
    }
    out.set_channel(c, y);
  }
  if (rec.channels() == 0) out.samples.resize(0, 0);
  return out;
}

}  // namespace

std::string_view to_string(State s) {
  switch (s) {
    case State::wake: return "wake";
    case State::sleep: return "sleep";
    case State::seizure: return "seizure";
    case State::ccep: return "ccep";
    case State::interictal: return "interictal";
  }
  return "unknown";
}

State state_from_string(std::string_view name) {
  for (State s : {State::wake, State::sleep, State::seizure, State::ccep,
                  State::interictal}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown state '" + std::string(name) + "'");
}

std::vector<double> Recording::channel(Eigen::Index c) const {
  std::vector<double> v(static_cast<std::size_t>(length()));
  for (Eigen::Index t = 0; t < length(); ++t) v[t] = samples(c, t);
  return v;
}

void Recording::set_channel(Eigen::Index c, std::span<const double> values) {
  for (Eigen::Index t = 0; t < length(); ++t) {
    samples(c, t) = static_cast<float>(values[t]);
  }
}

void Recording::validate() const {
  if (length() < 1) throw DomainError("recording must contain samples");
  if (!(rate_hz > 0.0)) throw DomainError("recording rate must be positive");
  if (!samples.allFinite()) {
    throw DomainError("recording contains NaN or Inf samples");
  }
}

const BandDef& band_def(Band b) { return kBands[static_cast<std::size_t>(b)]; }

std::string_view to_string(Band b) {
  switch (b) {
    case Band::delta: return "delta";
    case Band::theta: return "theta";
    case Band::alpha: return "alpha";
    case Band::beta: return "beta";
    case Band::low_gamma: return "low_gamma";
    case Band::high_gamma: return "high_gamma";
  }
  return "unknown";
}

Band band_from_string(std::string_view name) {
  for (const auto& b : kBands) {
    if (to_string(b.band) == name) return b.band;
  }
  throw ConfigError("unknown band '" + std::string(name) + "'");
}

void validate_band(const BandDef& band, double rate_hz) {
  if (!(band.lo_hz > 0.0) || !(band.lo_hz < band.hi_hz) ||
      !(band.hi_hz < rate_hz / 2.0)) {
    throw DomainError("band " + std::string(to_string(band.band)) + " [" +
                      std::to_string(band.lo_hz) + ", " +
                      std::to_string(band.hi_hz) + "] Hz invalid at " +
                      std::to_string(rate_hz) + " Hz");
  }
}

Sos design_notch(double freq_hz, double q, double rate_hz) {
  require_below_nyquist(freq_hz, rate_hz, "notch frequency");
  if (!(q > 0.0)) throw DomainError("notch quality factor must be positive");
  const double w0 = 2.0 * kPi * freq_hz / rate_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double c = -2.0 * std::cos(w0);
  return {Biquad{1.0 / a0, c / a0, 1.0 / a0, c / a0, (1.0 - alpha) / a0}};
}

Sos butter_lowpass(int order, double cutoff_hz, double rate_hz) {
  require_even_order(order);
  require_below_nyquist(cutoff_hz, rate_hz, "lowpass cutoff");
  const double wc = prewarp(cutoff_hz, rate_hz);
  Sos sos;
  for (cplx p : prototype_upper_poles(order)) {
    sos.push_back(section_from_pole(bilinear(p * wc, rate_hz), 1.0, 2.0, 1.0));
  }
  normalize_sections(sos, 0.0, rate_hz);
  return sos;
}

Sos butter_highpass(int order, double cutoff_hz, double rate_hz) {
  require_even_order(order);
  require_below_nyquist(cutoff_hz, rate_hz, "highpass cutoff");
  const double wc = prewarp(cutoff_hz, rate_hz);
  Sos sos;
  for (cplx p : prototype_upper_poles(order)) {
    // 1/p of an upper pole lands in the lower half plane; use its conjugate.
    sos.push_back(
        section_from_pole(bilinear(std::conj(wc / p), rate_hz), 1.0, -2.0, 1.0));
  }
  normalize_sections(sos, rate_hz / 2.0, rate_hz);
  return sos;
}

Sos butter_bandpass(int order, double lo_hz, double hi_hz, double rate_hz) {
  require_even_order(order);
  require_below_nyquist(lo_hz, rate_hz, "band-pass low edge");
  require_below_nyquist(hi_hz, rate_hz, "band-pass high edge");
  if (!(lo_hz < hi_hz)) throw DomainError("band-pass edges must satisfy lo < hi");
  const double wl = prewarp(lo_hz, rate_hz);
  const double wh = prewarp(hi_hz, rate_hz);
  const double w0 = std::sqrt(wl * wh);
  const double bw = wh - wl;
  Sos sos;
  for (cplx p : prototype_upper_poles(order)) {
    // Low-pass to band-pass: each prototype pole splits in two.
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0 * w0);
    for (cplx q : {half + root, half - root}) {
      if (q.imag() < 0) q = std::conj(q);
      sos.push_back(section_from_pole(bilinear(q, rate_hz), 1.0, 0.0, -1.0));
    }
  }
  const double center_hz = rate_hz / kPi * std::atan(w0 / (2.0 * rate_hz));
  normalize_sections(sos, center_hz, rate_hz);
  return sos;
}

double sos_gain(const Sos& sos, double freq_hz, double rate_hz) {
  const double w = 2.0 * kPi * freq_hz / rate_hz;
  cplx h = 1.0;
  for (const auto& s : sos) h *= section_response(s, w);
  return std::abs(h);
}

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_sections(sos, y, std::vector<std::array<double, 2>>(sos.size(), {0, 0}));
  return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = pad_length(sos, n);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) {
    ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
  }
  const auto zi = step_states(sos);
  run_sections(sos, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(sos, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> notch_channel(std::span<const double> x, double rate_hz,
                                  double freq_hz, double q) {
  return sosfiltfilt(design_notch(freq_hz, q, rate_hz), x);
}

std::vector<double> lowpass_channel(std::span<const double> x, double rate_hz,
                                    double cutoff_hz) {
  return sosfiltfilt(butter_lowpass(kFilterOrder, cutoff_hz, rate_hz), x);
}

int decimation_factor(double rate_hz, double target_rate_hz) {
  if (!(target_rate_hz > 0.0) || target_rate_hz > rate_hz) {
    throw DomainError("target rate " + std::to_string(target_rate_hz) +
                      " Hz must be positive and not exceed " +
                      std::to_string(rate_hz) + " Hz");
  }
  const double ratio = rate_hz / target_rate_hz;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw DomainError("target rate " + std::to_string(target_rate_hz) +
                      " Hz does not divide " + std::to_string(rate_hz) + " Hz");
  }
  return static_cast<int>(rounded);
}

std::vector<double> downsample_channel(std::span<const double> x,
                                       double rate_hz, double target_rate_hz) {
  const int factor = decimation_factor(rate_hz, target_rate_hz);
  const auto filtered = lowpass_channel(x, rate_hz, 0.4 * target_rate_hz);
  std::vector<double> out(x.size() / static_cast<std::size_t>(factor));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = filtered[i * static_cast<std::size_t>(factor)];
  }
  return out;
}

std::vector<double> bandpass_channel(std::span<const double> x, double rate_hz,
                                     const BandDef& band) {
  validate_band(band, rate_hz);
  return sosfiltfilt(butter_bandpass(2, band.lo_hz, band.hi_hz, rate_hz), x);
}

Recording notch_filter(const Recording& rec, double freq_hz, double q) {
  const Sos sos = design_notch(freq_hz, q, rec.rate_hz);
  return map_channels(rec, rec.rate_hz,
                      [&](const std::vector<double>& x) { return sosfiltfilt(sos, x); });
}

Recording lowpass_filter(const Recording& rec, double cutoff_hz) {
  const Sos sos = butter_lowpass(kFilterOrder, cutoff_hz, rec.rate_hz);
  return map_channels(rec, rec.rate_hz,
                      [&](const std::vector<double>& x) { return sosfiltfilt(sos, x); });
}

Recording downsample(const Recording& rec, double target_rate_hz) {
  decimation_factor(rec.rate_hz, target_rate_hz);
  return map_channels(rec, target_rate_hz, [&](const std::vector<double>& x) {
    return downsample_channel(x, rec.rate_hz, target_rate_hz);
  });
}

Recording bandpass(const Recording& rec, const BandDef& band) {
  validate_band(band, rec.rate_hz);
  const Sos sos = butter_bandpass(2, band.lo_hz, band.hi_hz, rec.rate_hz);
  return map_channels(rec, rec.rate_hz,
                      [&](const std::vector<double>& x) { return sosfiltfilt(sos, x); });
}

Recording build_baseline(const Recording& interictal) {
  interictal.validate();
  const auto window = static_cast<Eigen::Index>(
      std::llround(kBaselineWindowS * interictal.rate_hz));
  if (interictal.length() < window) {
    throw DomainError("interictal recording is " +
                      std::to_string(interictal.duration_s()) +
                      " s; baseline needs 60 s");
  }
  const Eigen::Index seg = window / kBaselineSubsegments;
  if (seg < 1) throw DomainError("baseline subsegments would be empty");
  Recording out;
  out.rate_hz = interictal.rate_hz;
  out.state = State::interictal;
  out.samples.resize(interictal.channels(), seg);
  for (Eigen::Index c = 0; c < interictal.channels(); ++c) {
    for (Eigen::Index t = 0; t < seg; ++t) {
      double acc = 0.0;
      for (int k = 0; k < kBaselineSubsegments; ++k) {
        acc += interictal.samples(c, k * seg + t);
      }
      out.samples(c, t) = static_cast<float>(acc / kBaselineSubsegments);
    }
  }
  return out;
}

bool operator==(const Recording& a, const Recording& b) {
  return a.rate_hz == b.rate_hz && a.state == b.state &&
         a.samples.rows() == b.samples.rows() &&
         a.samples.cols() == b.samples.cols() && a.samples == b.samples;
}

}  // namespace soz::dsp
