#pragma once

// Reference implementations written directly from the definitions, kept
// deliberately naive so they share no code with the library.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Two-sided Student-t tail probability. Closed forms for 1..4 degrees of
// freedom; Simpson integration of the density otherwise.
inline double t_two_sided(double t, int df) {
  const double a = std::abs(t);
  const double pi = std::numbers::pi;
  switch (df) {
    case 1: return 1.0 - 2.0 / pi * std::atan(a);
    case 2: return 1.0 - a / std::sqrt(2.0 + a * a);
    case 3: return 1.0 - 2.0 / pi * (std::atan(a / std::sqrt(3.0)) + std::sqrt(3.0) * a / (3.0 + a * a));
    case 4: return 1.0 - a * (6.0 + a * a) / std::pow(4.0 + a * a, 1.5);
    default: break;
  }
  const double nu = df;
  const double logc = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * pi);
  const auto f = [&](double x) { return std::exp(logc - (nu + 1) / 2 * std::log1p(x * x / nu)); };
  const int n = 200000;
  const double h = a / n;
  double s = f(0.0) + f(a);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

// Textbook paired statistic: mean difference over its standard error.
inline double paired_t(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] - y[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (x[i] - y[i] - mean) * (x[i] - y[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return mean / (sd / std::sqrt(static_cast<double>(n)));
}

// BH step-up: reject H_(1..k*) with k* the largest k such that p_(k) m / k < alpha.
inline std::vector<int> bh_reject(std::span<const double> p, double alpha) {
  const std::size_t m = p.size();
  std::vector<double> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t kstar = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    if (sorted[k - 1] * static_cast<double>(m) / static_cast<double>(k) < alpha) kstar = k;
  }
  std::vector<int> out(m, 0);
  if (kstar == 0) return out;
  const double cut = sorted[kstar - 1];
  for (std::size_t i = 0; i < m; ++i) out[i] = p[i] <= cut ? 1 : 0;
  return out;
}

// Adjusted value: min over ranks k at or above p_i of p_(k) m / k, capped at 1.
inline std::vector<double> bh_adjusted(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<double> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t k = 1; k <= m; ++k) {
      if (sorted[k - 1] >= p[i]) best = std::min(best, sorted[k - 1] * static_cast<double>(m) / static_cast<double>(k));
    }
    out[i] = best;
  }
  return out;
}

// Chebyshev polynomial T_f(L) built from explicit matrix powers and the
// closed-form coefficients of T_f.
inline Eigen::MatrixXd cheb_poly(const Eigen::MatrixXd& l, int f) {
  // Coefficients by the recurrence on coefficient vectors (not matrices).
  std::vector<std::vector<double>> c = {{1.0}, {0.0, 1.0}};
  for (int k = 2; k <= f; ++k) {
    std::vector<double> next(static_cast<std::size_t>(k) + 1, 0.0);
    for (std::size_t i = 0; i < c[k - 1].size(); ++i) next[i + 1] += 2.0 * c[k - 1][i];
    for (std::size_t i = 0; i < c[k - 2].size(); ++i) next[i] -= c[k - 2][i];
    c.push_back(next);
  }
  const auto n = l.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t i = 0; i < c[static_cast<std::size_t>(f)].size(); ++i) {
    out += c[static_cast<std::size_t>(f)][i] * power;
    power = power * l;
  }
  return out;
}

// Scaled Laplacian from its definition with a dense eigensolver for lambda_max.
inline Eigen::MatrixXd scaled_laplacian(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = a.row(i).cwiseAbs().sum() + 1e-8;
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) l(i, j) -= a(i, j) / std::sqrt(d(i) * d(j));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  return 2.0 * l / lmax - Eigen::MatrixXd::Identity(n, n);
}

// k nearest other rows by full sort on (distance, index).
inline std::vector<std::vector<int>> knn(const Eigen::MatrixXd& h, int k) {
  const auto n = static_cast<int>(h.rows());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> all;
    for (int j = 0; j < n; ++j) {
      if (j != i) all.emplace_back((h.row(i) - h.row(j)).squaredNorm(), j);
    }
    std::sort(all.begin(), all.end());
    for (int m = 0; m < std::min(k, n - 1); ++m) out[static_cast<std::size_t>(i)].push_back(all[static_cast<std::size_t>(m)].second);
  }
  return out;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

// Kolmogorov-Smirnov distance of a sample from Uniform(0,1).
inline double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const auto n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, std::max((static_cast<double>(i) + 1) / n - p[i], p[i] - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace oracle
