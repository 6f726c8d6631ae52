#pragma once

// Hierarchical fusion graph network: Chebyshev static branch, EdgeConv
// dynamic branch on per-layer k-NN graphs, node-norm weighting across
// layers and a linear classifier.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "soz/nncore.hpp"

namespace soz::hfgcn {

using nn::Mat;

enum class FusionMode { full, fusion_s1, fusion_s2, static_only, dynamic_only };
enum class Weighting { cascade, raw_layer };

std::string_view to_string(FusionMode m);
FusionMode fusion_mode_from_string(std::string_view s);
std::string_view to_string(Weighting w);
Weighting weighting_from_string(std::string_view s);

struct HfgcnConfig {
  int layers = 3;
  int cheb_order = 3;
  int knn = 10;
  int hidden = 64;
  FusionMode fusion_mode = FusionMode::full;
  Weighting weighting = Weighting::cascade;
  double lr = 0.005;
  int epochs = 150;
  // Empty: unweighted; "auto": inverse class frequency over train nodes.
  std::optional<std::pair<double, double>> class_weights;
  bool auto_class_weights = false;
  bool clamp_negative_edges = false;

  void validate() const;
  // Also checks 1 <= K < C.
  void validate(int nodes) const;
};

nlohmann::json to_json(const HfgcnConfig& c);
HfgcnConfig hfgcn_config_from_json(const nlohmann::json& j);

struct ScaledLaplacian {
  Mat l_tilde;
  double lambda_max = 2.0;
  bool converged = true;
};

ScaledLaplacian scaled_laplacian(const Mat& a, bool clamp_negative = false);

// Largest eigenvalue of a symmetric matrix by power iteration, converged
// when the residual |Mv - lambda v| drops below tol; fallback otherwise.
// With psd set the iteration runs on a shifted matrix to converge faster.
double power_iteration(const Mat& m, double tol, int max_iter, double fallback,
                       bool* converged = nullptr, bool psd = false);

struct ChebCache {
  std::vector<Mat> t;  // T^f(L) h
  Mat out;
};

// T^0(L) h .. T^{order-1}(L) h by the Chebyshev recurrence.
std::vector<Mat> cheb_basis(const Mat& h, const Mat& l_tilde, int order);

// tanh(sum_f basis_f W_f).
Mat cheb_conv_from_basis(const std::vector<Mat>& basis, const std::vector<const Mat*>& w,
                         ChebCache* cache);

// tanh(sum_f T^f(L) h W_f).
Mat cheb_conv_forward(const Mat& h, const Mat& l_tilde, const std::vector<const Mat*>& w,
                      ChebCache* cache);
// Adds dW_f into dw; returns dL/dh unless skip_input_grad.
Mat cheb_conv_backward(const ChebCache& cache, const Mat& l_tilde,
                       const std::vector<const Mat*>& w, const Mat& dout,
                       const std::vector<Mat*>& dw, bool skip_input_grad = false);

// K nearest nodes j != i by squared Euclidean distance, ties to the lower
// index; row-major C x K.
std::vector<int> knn_pairs(const Mat& h, int k);

struct EdgeCache {
  std::vector<int> nbr;  // C x K
  int k = 0;
  Mat pre1;              // (C*K) x Dh
  Mat pre2;              // (C*K) x Dout
  std::vector<int> arg;  // C x Dout edge slot of the maximum
  Mat out;
};

// max_k relu(relu([h_i, h_k] W1) W2).
Mat edge_conv_forward(const Mat& h, int k, const Mat& w1, const Mat& w2, EdgeCache* cache);
Mat edge_conv_backward(const Mat& h, const EdgeCache& cache, const Mat& w1, const Mat& w2,
                       const Mat& dout, Mat& dw1, Mat& dw2);

// Per-node weighting coefficient: L2 norm of each row.
Eigen::VectorXd node_weights(const Mat& s);

struct PatientGraph {
  Mat x;
  Mat a;
  std::vector<int> labels;
  std::vector<int> train, val, test;  // node indices
};

class HfgcnModel {
 public:
  HfgcnModel(const HfgcnConfig& cfg, int input_dim);

  void init(std::uint64_t seed);

  struct Forward {
    std::vector<Mat> h_static;   // h_static[0] = X, then each layer
    std::vector<ChebCache> cheb;
    std::vector<std::optional<EdgeCache>> edge;  // per layer, when used
    std::vector<Mat> s;          // per layer sum (or branch output in use)
    std::vector<Mat> z;          // weighted streams
    std::vector<Eigen::VectorXd> w;
    Mat h_out;
    Mat logits;
  };

  // x_basis, when given, is cheb_basis(x, l_tilde, F) for the first layer.
  Mat logits(const Mat& x, const Mat& l_tilde, Forward* fwd = nullptr,
             const std::vector<Mat>* x_basis = nullptr) const;
  // Accumulates parameter gradients from dL/dlogits.
  void backward(const Forward& fwd, const Mat& l_tilde, const Mat& dlogits);

  std::vector<nn::Param>& params() { return params_; }
  const std::vector<nn::Param>& params() const { return params_; }
  const HfgcnConfig& config() const { return cfg_; }
  int input_dim() const { return input_dim_; }
  void zero_grad();

  // Dynamic branch output at layer l (1-based) is needed by this mode.
  bool uses_edge(int l) const;

 private:
  const Mat& cheb_w(int l, int f) const;
  nn::Param& cheb_p(int l, int f);
  std::size_t edge_index(int l) const;

  HfgcnConfig cfg_;
  int input_dim_;
  std::vector<nn::Param> params_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_f1 = 0.0;
};

struct TrainOutput {
  std::vector<nn::Param> best;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
};

// Full-graph Adam on train nodes; parameters of the evaluation with the
// highest validation F1 (first on ties) are returned.
TrainOutput train_hfgcn(HfgcnModel& model, const PatientGraph& g, std::uint64_t seed);

Mat predict(const HfgcnModel& model, const PatientGraph& g);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& h);

}  // namespace soz::hfgcn
