#pragma once

// Signal preprocessing: IIR filtering, decimation, band decomposition and
// interictal baseline construction.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace soz::dsp {

enum class State { wake, sleep, seizure, ccep, interictal };

std::string_view to_string(State s);
State state_from_string(std::string_view name);

// The three behavioral states, in feature-assembly order.
inline constexpr std::array<State, 3> kBehavioralStates = {
    State::wake, State::sleep, State::seizure};

using SampleMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Multichannel recording; one row per contact site.
struct Recording {
  SampleMatrix samples;
  double rate_hz = 0.0;
  std::optional<State> state;

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index length() const { return samples.cols(); }
  double duration_s() const { return static_cast<double>(length()) / rate_hz; }

  std::vector<double> channel(Eigen::Index c) const;
  void set_channel(Eigen::Index c, std::span<const double> values);

  // Throws DomainError unless T >= 1, rate > 0 and all samples finite.
  void validate() const;
};

bool operator==(const Recording& a, const Recording& b);

enum class Band { delta, theta, alpha, beta, low_gamma, high_gamma };

struct BandDef {
  Band band;
  double lo_hz;
  double hi_hz;
};

inline constexpr std::array<BandDef, 6> kBands = {{
    {Band::delta, 1.0, 4.0},
    {Band::theta, 4.0, 8.0},
    {Band::alpha, 8.0, 14.0},
    {Band::beta, 14.0, 30.0},
    {Band::low_gamma, 30.0, 80.0},
    {Band::high_gamma, 80.0, 150.0},
}};

const BandDef& band_def(Band b);
std::string_view to_string(Band b);
Band band_from_string(std::string_view name);
void validate_band(const BandDef& band, double rate_hz);

// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};
using Sos = std::vector<Biquad>;

Sos design_notch(double freq_hz, double q, double rate_hz);
Sos butter_lowpass(int order, double cutoff_hz, double rate_hz);
Sos butter_highpass(int order, double cutoff_hz, double rate_hz);
// 2*order poles; order = 2 gives a 4th-order band-pass.
Sos butter_bandpass(int order, double lo_hz, double hi_hz, double rate_hz);

// Complex frequency response magnitude of the cascade at freq_hz.
double sos_gain(const Sos& sos, double freq_hz, double rate_hz);

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x);
// Zero-phase forward-backward filtering with odd extension at both ends and
// steady-state initial conditions.
std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x);

inline constexpr int kFilterOrder = 4;
inline constexpr double kNotchQ = 30.0;

// Per-channel primitives (double precision).
std::vector<double> notch_channel(std::span<const double> x, double rate_hz,
                                  double freq_hz, double q = kNotchQ);
std::vector<double> lowpass_channel(std::span<const double> x, double rate_hz,
                                    double cutoff_hz);
std::vector<double> downsample_channel(std::span<const double> x,
                                       double rate_hz, double target_rate_hz);
std::vector<double> bandpass_channel(std::span<const double> x, double rate_hz,
                                     const BandDef& band);

// Integer decimation factor; DomainError if target does not divide rate.
int decimation_factor(double rate_hz, double target_rate_hz);

Recording notch_filter(const Recording& rec, double freq_hz,
                       double q = kNotchQ);
Recording lowpass_filter(const Recording& rec, double cutoff_hz);
Recording downsample(const Recording& rec, double target_rate_hz);
Recording bandpass(const Recording& rec, const BandDef& band);

// Average of the ten contiguous subsegments of the first 60 s.
Recording build_baseline(const Recording& interictal);

inline constexpr double kBaselineWindowS = 60.0;
inline constexpr int kBaselineSubsegments = 10;

}  // namespace soz::dsp
