#pragma once

// Dense-layer primitives with hand-written backward passes, Adam and a
// finite-difference gradient checker.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "soz/rng.hpp"

namespace soz::nn {

using Mat = Eigen::MatrixXd;

struct Param {
  std::string name;
  std::string role;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string name, std::string role, Eigen::Index rows, Eigen::Index cols);
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Mat& w, Rng& rng);

// y = x W + b, b a 1 x out row broadcast over rows.
Mat dense_forward(const Mat& x, const Mat& w, const Mat& b);
struct DenseGrads {
  Mat dx;
  Mat dw;
  Mat db;
};
DenseGrads dense_backward(const Mat& x, const Mat& w, const Mat& dy);

Mat tanh_fwd(const Mat& x);
// Takes the forward output y = tanh(x).
Mat tanh_bwd(const Mat& y, const Mat& dy);
Mat relu_fwd(const Mat& x);
// Subgradient 0 at x = 0.
Mat relu_bwd(const Mat& x, const Mat& dy);

// Row-wise pooling along columns with window 2, stride 2.
Mat avgpool(const Mat& x);
Mat avgpool_bwd(const Mat& dy);
// Nearest-neighbour repeat x2 along columns.
Mat unpool(const Mat& x);
Mat unpool_bwd(const Mat& dy);

Mat hadamard(const Mat& a, const Mat& b);
struct HadamardGrads {
  Mat da;
  Mat db;
};
HadamardGrads hadamard_bwd(const Mat& a, const Mat& b, const Mat& dy);

Mat softmax_rows(const Mat& x);

struct Loss {
  double value = 0.0;
  Mat grad;
};

// Mean cross-entropy over the listed rows. With class weights the mean is
// weighted: sum_i w[y_i] * -log p_i / sum_i w[y_i]. The gradient is taken
// with respect to the logits that produced `probs`.
Loss cross_entropy(const Mat& probs, std::span<const int> labels,
                   std::span<const int> rows,
                   std::span<const double> class_weights = {});

// Mean squared error over all elements; gradient with respect to x.
Loss mse(const Mat& x, const Mat& y);

struct AdamState {
  Mat m;
  Mat v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Mat& param, const Mat& grad, AdamState& state);

class Adam {
 public:
  Adam(std::vector<Param>& params, double lr);
  void step();

 private:
  std::vector<Param>* params_;
  std::vector<AdamState> states_;
};

// Max over coordinates of |numeric - analytic| / max(1, |analytic|) with
// central differences of step h.
double grad_check(const std::function<double(const Mat&)>& f, const Mat& x,
                  const Mat& analytic, double h = 1e-5);

// Binary file of named little-endian f64 tensors plus a JSON manifest at
// <path>.json carrying name, shape and role of each tensor and `meta`.
void save_checkpoint(const std::filesystem::path& path, const std::vector<Param>& params,
                     const nlohmann::json& meta);
// Restores values into params by name; shapes must match.
nlohmann::json load_checkpoint(const std::filesystem::path& path, std::vector<Param>& params);
// Manifest meta without touching parameters.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

bool all_finite(const std::vector<Param>& params);

}  // namespace soz::nn
