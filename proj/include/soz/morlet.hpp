#pragma once

// Complex Morlet wavelet band power.

#include <complex>
#include <span>
#include <vector>

#include "soz/dsp.hpp"

namespace soz::dsp {

struct FeatureVector {
  std::vector<double> values;
  int site_index = 0;
  Band band = Band::delta;
  State state = State::wake;
};

struct MorletOptions {
  int n_cycles = 6;
  int n_freqs = 8;      // log-spaced center frequencies per band
  int out_len = 128;    // feature length I
  double support_sigmas = 4.0;
};

// Precomputed wavelet spectra for one band at one rate and signal length.
// Immutable after construction; power() may be called concurrently.
class MorletBank {
 public:
  MorletBank(const BandDef& band, double rate_hz, std::size_t length,
             MorletOptions opts = {});

  // Band-power feature of length opts.out_len for a single channel.
  std::vector<double> power(std::span<const double> x) const;

  // Frequency-averaged magnitude trace before time pooling.
  std::vector<double> magnitude_trace(std::span<const double> x) const;

  const std::vector<double>& center_freqs() const { return freqs_; }
  std::size_t half_width() const { return half_width_; }
  std::size_t fft_size() const { return fft_size_; }

 private:
  BandDef band_;
  double rate_hz_;
  std::size_t length_;
  MorletOptions opts_;
  std::vector<double> freqs_;
  std::size_t half_width_ = 0;
  std::size_t fft_size_ = 0;
  std::vector<std::vector<std::complex<double>>> spectra_;
};

// Smallest 2^a 3^b 5^c >= n.
std::size_t fft_friendly_size(std::size_t n);

// In-place DFT of length x.size(); inverse is unnormalized.
void fft(std::vector<std::complex<double>>& x, bool inverse);

std::vector<FeatureVector> morlet_power(const Recording& rec_band,
                                        const BandDef& band, int n_cycles = 6,
                                        int out_len = 128);

// Mean over out_len contiguous bins; bin b spans [floor(bT/n), floor((b+1)T/n)).
std::vector<double> mean_pool(std::span<const double> x, int out_len);

}  // namespace soz::dsp
