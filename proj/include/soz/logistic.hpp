#pragma once

// L2-regularised binary logistic regression, used as the reference
// classifier on node features.

#include <span>
#include <vector>

#include <Eigen/Core>

namespace soz::logistic {

struct LogisticOptions {
  double l2 = 1.0;
  bool balanced = true;     // inverse class-frequency sample weights
  int max_iter = 50;
  double tol = 1e-10;
};

struct LogisticModel {
  Eigen::VectorXd w;
  double bias = 0.0;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  int iterations = 0;

  Eigen::VectorXd probability(const Eigen::MatrixXd& x) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

// Damped Newton on the rows listed in `rows`; the intercept is penalised
// like the weights. Features are standardised with training-row statistics.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> labels,
                           std::span<const int> rows, const LogisticOptions& opts = {});

}  // namespace soz::logistic
