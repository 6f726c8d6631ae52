#include "soz/logistic.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "soz/error.hpp"

namespace soz::logistic {

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Eigen::VectorXd LogisticModel::probability(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / scale.array();
  Eigen::VectorXd out = z * w;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = sigmoid(out(i) + bias);
  return out;
}

std::vector<int> LogisticModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::VectorXd p = probability(x);
  std::vector<int> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p(i) > 0.5 ? 1 : 0;
  return out;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> labels,
                           std::span<const int> rows, const LogisticOptions& opts) {
  if (rows.empty()) throw ConfigError("logistic fit needs at least one training row");
  if (!(opts.l2 > 0.0)) throw ConfigError("logistic l2 penalty must be positive");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = x.cols();

  LogisticModel m;
  Eigen::MatrixXd xt(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    xt.row(r) = x.row(rows[static_cast<std::size_t>(r)]);
    y(r) = labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])] == 1 ? 1.0 : 0.0;
  }
  m.mean = xt.colwise().mean();
  m.scale = ((xt.rowwise() - m.mean).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(m.scale(j) > 0.0)) m.scale(j) = 1.0;
  }
  // Augmented design: standardised features plus a constant column.
  Eigen::MatrixXd a(n, d + 1);
  a.leftCols(d) = (xt.rowwise() - m.mean).array().rowwise() / m.scale.array();
  a.col(d).setOnes();

  Eigen::VectorXd s = Eigen::VectorXd::Ones(n);
  if (opts.balanced) {
    const double pos = y.sum();
    const double neg = static_cast<double>(n) - pos;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double cnt = y(r) > 0.5 ? pos : neg;
      s(r) = static_cast<double>(n) / (2.0 * cnt);
    }
  }
  s /= s.sum();

  const double lambda = opts.l2;
  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd z = a * beta;
    double f = 0.5 * lambda * beta.squaredNorm();
    for (Eigen::Index r = 0; r < n; ++r) f += s(r) * (softplus(z(r)) - y(r) * z(r));
    return f;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  double f = objective(beta);
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::VectorXd z = a * beta;
    Eigen::VectorXd resid(n), curv(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double p = sigmoid(z(r));
      resid(r) = s(r) * (p - y(r));
      curv(r) = s(r) * p * (1.0 - p);
    }
    const Eigen::VectorXd g = a.transpose() * resid + lambda * beta;
    m.iterations = it;
    if (g.norm() < opts.tol) break;
    // (A^T R A + lambda I)^-1 g through the n x n Woodbury system.
    const Eigen::VectorXd rs = curv.cwiseSqrt();
    const Eigen::MatrixXd b = rs.asDiagonal() * a;
    Eigen::MatrixXd inner = b * b.transpose() / lambda;
    inner.diagonal().array() += 1.0;
    const Eigen::VectorXd bg = b * g / lambda;
    const Eigen::VectorXd step = g / lambda - b.transpose() * inner.ldlt().solve(bg) / lambda;
    double t = 1.0;
    Eigen::VectorXd next = beta - step;
    double fn = objective(next);
    while (fn > f - 1e-4 * t * g.dot(step) && t > 1e-8) {
      t *= 0.5;
      next = beta - t * step;
      fn = objective(next);
    }
    beta = next;
    f = fn;
  }
  m.w = beta.head(d);
  m.bias = beta(d);
  return m;
}

}  // namespace soz::logistic
