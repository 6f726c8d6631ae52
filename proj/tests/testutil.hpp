#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "soz/dsp.hpp"
#include "soz/rng.hpp"

namespace testutil {

inline std::vector<double> tone(double freq, double rate, std::size_t n, double amp = 1.0,
                                double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    x[t] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / rate + phase);
  }
  return x;
}

inline double rms(const std::vector<double>& x, std::size_t skip = 0) {
  double s = 0.0;
  for (std::size_t t = skip; t + skip < x.size(); ++t) s += x[t] * x[t];
  return std::sqrt(s / static_cast<double>(x.size() - 2 * skip));
}

inline soz::dsp::Recording recording(const std::vector<std::vector<double>>& rows, double rate) {
  soz::dsp::Recording r;
  r.rate_hz = rate;
  r.samples.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) r.set_channel(static_cast<Eigen::Index>(i), rows[i]);
  return r;
}

inline Eigen::MatrixXd random_matrix(soz::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
  }
  return m;
}

inline std::vector<double> noise(soz::Rng& rng, std::size_t n, double sigma = 1.0) {
  std::vector<double> x(n);
  for (auto& v : x) v = sigma * rng.normal();
  return x;
}

// Random symmetric adjacency with zero diagonal and the given edge density.
inline Eigen::MatrixXd random_adjacency(soz::Rng& rng, int c, double density, bool signed_weights) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(c, c);
  for (int i = 0; i < c; ++i) {
    for (int j = i + 1; j < c; ++j) {
      if (rng.uniform() < density) {
        const double w = signed_weights ? rng.uniform(-1.0, 1.0) : rng.uniform(0.1, 1.0);
        a(i, j) = a(j, i) = w;
      }
    }
  }
  return a;
}

inline Eigen::MatrixXd permutation(const std::vector<int>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

}  // namespace testutil
