#include "soz/hfgcn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "soz/error.hpp"
#include "soz/metrics.hpp"

namespace soz::hfgcn {

using nlohmann::json;

std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::full: return "full";
    case FusionMode::fusion_s1: return "fusion_s1";
    case FusionMode::fusion_s2: return "fusion_s2";
    case FusionMode::static_only: return "static_only";
    case FusionMode::dynamic_only: return "dynamic_only";
  }
  return "?";
}

FusionMode fusion_mode_from_string(std::string_view s) {
  for (auto m : {FusionMode::full, FusionMode::fusion_s1, FusionMode::fusion_s2,
                 FusionMode::static_only, FusionMode::dynamic_only}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown fusion mode '" + std::string(s) + "'");
}

std::string_view to_string(Weighting w) {
  return w == Weighting::cascade ? "cascade" : "raw-layer";
}

Weighting weighting_from_string(std::string_view s) {
  if (s == "cascade") return Weighting::cascade;
  if (s == "raw-layer" || s == "raw_layer") return Weighting::raw_layer;
  throw ConfigError("unknown weighting '" + std::string(s) + "'");
}

void HfgcnConfig::validate() const {
  const bool weighted = fusion_mode == FusionMode::full || fusion_mode == FusionMode::fusion_s1 ||
                        fusion_mode == FusionMode::fusion_s2;
  if (layers < (weighted ? 2 : 1)) {
    throw ConfigError("layers must be >= 2 for weighted fusion modes, >= 1 otherwise");
  }
  if (cheb_order < 1) throw ConfigError("cheb_order F must be >= 1");
  if (knn < 1) throw ConfigError("knn K must be >= 1");
  if (hidden < 1) throw ConfigError("hidden width must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (class_weights && !(class_weights->first > 0.0 && class_weights->second > 0.0)) {
    throw ConfigError("class weights must be positive");
  }
}

void HfgcnConfig::validate(int nodes) const {
  validate();
  if (knn >= nodes) {
    throw ConfigError("knn K=" + std::to_string(knn) + " must be below the node count " +
                      std::to_string(nodes));
  }
}

json to_json(const HfgcnConfig& c) {
  json j{{"layers", c.layers},
         {"cheb_order", c.cheb_order},
         {"knn", c.knn},
         {"hidden", c.hidden},
         {"fusion_mode", to_string(c.fusion_mode)},
         {"weighting", to_string(c.weighting)},
         {"lr", c.lr},
         {"epochs", c.epochs},
         {"clamp_negative_edges", c.clamp_negative_edges}};
  if (c.auto_class_weights) j["class_weights"] = "auto";
  else if (c.class_weights) j["class_weights"] = {c.class_weights->first, c.class_weights->second};
  else j["class_weights"] = nullptr;
  return j;
}

HfgcnConfig hfgcn_config_from_json(const json& j) {
  HfgcnConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "layers") c.layers = v.get<int>();
      else if (k == "cheb_order") c.cheb_order = v.get<int>();
      else if (k == "knn") c.knn = v.get<int>();
      else if (k == "hidden") c.hidden = v.get<int>();
      else if (k == "fusion_mode") c.fusion_mode = fusion_mode_from_string(v.get<std::string>());
      else if (k == "weighting") c.weighting = weighting_from_string(v.get<std::string>());
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "clamp_negative_edges") c.clamp_negative_edges = v.get<bool>();
      else if (k == "class_weights") {
        c.auto_class_weights = false;
        c.class_weights.reset();
        if (v.is_string()) {
          if (v.get<std::string>() != "auto") throw ConfigError("class_weights must be \"auto\", a pair or null");
          c.auto_class_weights = true;
        } else if (v.is_array()) {
          const auto p = v.get<std::vector<double>>();
          if (p.size() != 2) throw ConfigError("class_weights pair must have two entries");
          c.class_weights = std::make_pair(p[0], p[1]);
        } else if (!v.is_null()) {
          throw ConfigError("class_weights must be \"auto\", a pair or null");
        }
      } else {
        throw ConfigError("unknown hfgcn key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("hfgcn config: ") + e.what());
  }
  c.validate();
  return c;
}

double power_iteration(const Mat& m, double tol, int max_iter, double fallback, bool* converged,
                       bool psd) {
  const Eigen::Index n = m.rows();
  if (converged) *converged = false;
  if (n == 0) return fallback;
  // Start from the absolute row sums so that relabelling the nodes relabels
  // the iterates; fall back to an index ramp if that start is an eigenvector.
  Eigen::VectorXd v = (m.cwiseAbs().rowwise().sum().array() + 1.0).matrix();
  v.normalize();
  {
    const Eigen::VectorXd w = m * v;
    if ((w - v.dot(w) * v).norm() < tol) {
      for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + static_cast<double>(i + 1) / static_cast<double>(n);
      v.normalize();
    }
  }
  double shift = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd w = m * v;
    const double lambda = v.dot(w);
    if ((w - lambda * v).norm() < tol) {
      if (converged) *converged = true;
      return lambda;
    }
    // For a PSD matrix any shift below lambda_max / 2 keeps the top
    // eigenvalue dominant and shrinks the ratio to the runner-up.
    if (psd) shift = 0.49 * std::max(lambda, 0.0);
    const Eigen::VectorXd next = w - shift * v;
    const double norm = next.norm();
    if (norm == 0.0) return fallback;
    v = next / norm;
  }
  return fallback;
}

ScaledLaplacian scaled_laplacian(const Mat& a_in, bool clamp_negative) {
  if (a_in.rows() != a_in.cols()) throw DomainError("adjacency must be square");
  if (a_in.size() > 0 && (a_in - a_in.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw DomainError("adjacency must be symmetric");
  }
  const Mat a = clamp_negative ? Mat(a_in.cwiseMax(0.0)) : a_in;
  const Eigen::Index c = a.rows();
  const Eigen::VectorXd d = a.cwiseAbs().rowwise().sum().array() + 1e-8;
  const Eigen::VectorXd inv_sqrt = d.array().rsqrt();
  Mat lap = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  ScaledLaplacian out;
  out.lambda_max = power_iteration(lap, 1e-6, 500, 2.0, &out.converged, true);
  if (!out.converged) spdlog::debug("power iteration did not converge; lambda_max = 2");
  out.l_tilde = (2.0 / out.lambda_max) * lap - Mat::Identity(c, c);
  return out;
}

std::vector<Mat> cheb_basis(const Mat& h, const Mat& l_tilde, int order) {
  if (order < 1) throw ConfigError("Chebyshev order F must be >= 1");
  if (l_tilde.rows() != h.rows()) throw DomainError("cheb_conv: Laplacian and features disagree");
  std::vector<Mat> t(static_cast<std::size_t>(order));
  t[0] = h;
  if (order > 1) t[1] = l_tilde * h;
  for (std::size_t f = 2; f < t.size(); ++f) t[f] = 2.0 * (l_tilde * t[f - 1]) - t[f - 2];
  return t;
}

Mat cheb_conv_from_basis(const std::vector<Mat>& basis, const std::vector<const Mat*>& w,
                         ChebCache* cache) {
  if (w.empty()) throw ConfigError("Chebyshev order F must be >= 1");
  if (basis.size() != w.size()) throw DomainError("cheb_conv: basis and weight counts differ");
  for (const auto* wf : w) {
    if (wf->rows() != basis[0].cols() || wf->cols() != w[0]->cols()) {
      throw DomainError("cheb_conv: weight shape mismatch");
    }
  }
  Mat pre = basis[0] * *w[0];
  for (std::size_t f = 1; f < w.size(); ++f) pre.noalias() += basis[f] * *w[f];
  if (!cache) return nn::tanh_fwd(pre);
  cache->t = basis;
  cache->out = nn::tanh_fwd(pre);
  return cache->out;
}

Mat cheb_conv_forward(const Mat& h, const Mat& l_tilde, const std::vector<const Mat*>& w,
                      ChebCache* cache) {
  if (w.empty()) throw ConfigError("Chebyshev order F must be >= 1");
  return cheb_conv_from_basis(cheb_basis(h, l_tilde, static_cast<int>(w.size())), w, cache);
}

Mat cheb_conv_backward(const ChebCache& c, const Mat& l_tilde, const std::vector<const Mat*>& w,
                       const Mat& dout, const std::vector<Mat*>& dw, bool skip_input_grad) {
  const Mat dpre = nn::tanh_bwd(c.out, dout);
  const std::size_t f_order = w.size();
  for (std::size_t f = 0; f < f_order; ++f) dw[f]->noalias() += c.t[f].transpose() * dpre;
  if (skip_input_grad) return {};
  std::vector<Mat> g(f_order);
  for (std::size_t f = 0; f < f_order; ++f) g[f] = dpre * w[f]->transpose();
  for (std::size_t f = f_order - 1; f >= 2; --f) {
    g[f - 1].noalias() += 2.0 * (l_tilde.transpose() * g[f]);
    g[f - 2] -= g[f];
  }
  if (f_order > 1) g[0].noalias() += l_tilde.transpose() * g[1];
  return g[0];
}

std::vector<int> knn_pairs(const Mat& h, int k) {
  const auto c = static_cast<int>(h.rows());
  if (k < 1 || k >= c) {
    throw ConfigError("knn K=" + std::to_string(k) + " must satisfy 1 <= K < C=" + std::to_string(c));
  }
  std::vector<int> out(static_cast<std::size_t>(c) * static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(c - 1));
  for (int i = 0; i < c; ++i) {
    std::size_t n = 0;
    for (int j = 0; j < c; ++j) {
      if (j == i) continue;
      cand[n++] = {(h.row(i) - h.row(j)).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int q = 0; q < k; ++q) {
      out[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(q)] =
          cand[static_cast<std::size_t>(q)].second;
    }
  }
  return out;
}

Mat edge_conv_forward(const Mat& h, int k, const Mat& w1, const Mat& w2, EdgeCache* cache) {
  const Eigen::Index din = h.cols();
  if (w1.rows() != 2 * din || w2.rows() != w1.cols()) {
    throw DomainError("edge_conv: weight shape mismatch");
  }
  EdgeCache local;
  EdgeCache& c = cache ? *cache : local;
  c.k = k;
  c.nbr = knn_pairs(h, k);
  const Eigen::Index nodes = h.rows();
  const Mat p = h * w1.topRows(din);
  const Mat q = h * w1.bottomRows(din);
  c.pre1.resize(nodes * k, w1.cols());
  for (Eigen::Index i = 0; i < nodes; ++i) {
    for (int j = 0; j < k; ++j) {
      const Eigen::Index r = i * k + j;
      c.pre1.row(r) = p.row(i) + q.row(c.nbr[static_cast<std::size_t>(r)]);
    }
  }
  c.pre2.noalias() = nn::relu_fwd(c.pre1) * w2;
  const Eigen::Index dout = w2.cols();
  c.out.resize(nodes, dout);
  c.arg.assign(static_cast<std::size_t>(nodes * dout), 0);
  for (Eigen::Index i = 0; i < nodes; ++i) {
    for (Eigen::Index col = 0; col < dout; ++col) {
      double best = std::max(c.pre2(i * k, col), 0.0);
      int arg = 0;
      for (int j = 1; j < k; ++j) {
        const double e = std::max(c.pre2(i * k + j, col), 0.0);
        if (e > best) {
          best = e;
          arg = j;
        }
      }
      c.out(i, col) = best;
      c.arg[static_cast<std::size_t>(i * dout + col)] = arg;
    }
  }
  return c.out;
}

Mat edge_conv_backward(const Mat& h, const EdgeCache& c, const Mat& w1, const Mat& w2,
                       const Mat& dout, Mat& dw1, Mat& dw2) {
  const Eigen::Index nodes = h.rows();
  const Eigen::Index din = h.cols();
  const Eigen::Index width = w2.cols();
  const int k = c.k;
  // Only the argmax edge of each output column receives gradient, so the
  // second layer is handled column by column instead of with dense products.
  Mat dpre1 = Mat::Zero(c.pre1.rows(), c.pre1.cols());
  for (Eigen::Index i = 0; i < nodes; ++i) {
    for (Eigen::Index col = 0; col < width; ++col) {
      const Eigen::Index r = i * k + c.arg[static_cast<std::size_t>(i * width + col)];
      if (!(c.pre2(r, col) > 0.0)) continue;
      const double g = dout(i, col);
      if (g == 0.0) continue;
      dw2.col(col) += g * c.pre1.row(r).transpose().cwiseMax(0.0);
      dpre1.row(r) += g * w2.col(col).transpose();
    }
  }
  dpre1 = nn::relu_bwd(c.pre1, dpre1);
  Mat dp = Mat::Zero(nodes, w1.cols());
  Mat dq = Mat::Zero(nodes, w1.cols());
  for (Eigen::Index i = 0; i < nodes; ++i) {
    for (int j = 0; j < k; ++j) {
      const Eigen::Index r = i * k + j;
      dp.row(i) += dpre1.row(r);
      dq.row(c.nbr[static_cast<std::size_t>(r)]) += dpre1.row(r);
    }
  }
  dw1.topRows(din).noalias() += h.transpose() * dp;
  dw1.bottomRows(din).noalias() += h.transpose() * dq;
  Mat dh = dp * w1.topRows(din).transpose();
  dh.noalias() += dq * w1.bottomRows(din).transpose();
  return dh;
}

HfgcnModel::HfgcnModel(const HfgcnConfig& cfg, int input_dim) : cfg_(cfg), input_dim_(input_dim) {
  cfg_.validate();
  if (input_dim < 1) throw ConfigError("node feature width must be positive");
  const int d = cfg_.hidden;
  for (int l = 0; l < cfg_.layers; ++l) {
    const int din = l == 0 ? input_dim : d;
    for (int f = 0; f < cfg_.cheb_order; ++f) {
      params_.emplace_back("cheb" + std::to_string(l + 1) + ".W" + std::to_string(f), "cheb", din, d);
    }
  }
  for (int l = 0; l < cfg_.layers; ++l) {
    params_.emplace_back("edge" + std::to_string(l + 1) + ".W1", "edge", 2 * d, d);
    params_.emplace_back("edge" + std::to_string(l + 1) + ".W2", "edge", d, d);
  }
  params_.emplace_back("cls.W", "classifier", d, 2);
  params_.emplace_back("cls.b", "classifier_bias", 1, 2);
}

void HfgcnModel::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_) {
    if (p.role == "classifier_bias") p.value.setZero();
    else nn::glorot_init(p.value, rng);
  }
}

void HfgcnModel::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

const Mat& HfgcnModel::cheb_w(int l, int f) const {
  return params_[static_cast<std::size_t>(l * cfg_.cheb_order + f)].value;
}

nn::Param& HfgcnModel::cheb_p(int l, int f) {
  return params_[static_cast<std::size_t>(l * cfg_.cheb_order + f)];
}

std::size_t HfgcnModel::edge_index(int l) const {
  return static_cast<std::size_t>(cfg_.layers * cfg_.cheb_order + 2 * l);
}

bool HfgcnModel::uses_edge(int l) const {
  switch (cfg_.fusion_mode) {
    case FusionMode::full:
      return cfg_.weighting == Weighting::cascade || l >= cfg_.layers - 1;
    case FusionMode::fusion_s2: return true;
    case FusionMode::dynamic_only: return l == cfg_.layers;
    case FusionMode::fusion_s1:
    case FusionMode::static_only: return false;
  }
  return false;
}

Eigen::VectorXd node_weights(const Mat& s) { return s.rowwise().norm(); }

namespace {

// dL/dm from dL/dw where w = row norms of m.
Mat row_norm_bwd(const Mat& m, const Eigen::VectorXd& w, const Eigen::VectorXd& dw) {
  Mat out = Mat::Zero(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (w(i) > 0.0) out.row(i) = (dw(i) / w(i)) * m.row(i);
  }
  return out;
}

}  // namespace

Mat HfgcnModel::logits(const Mat& x, const Mat& l_tilde, Forward* fwd,
                        const std::vector<Mat>* x_basis) const {
  if (x.cols() != input_dim_) {
    throw DomainError("node features have width " + std::to_string(x.cols()) + ", model expects " +
                      std::to_string(input_dim_));
  }
  if (l_tilde.rows() != x.rows() || l_tilde.cols() != x.rows()) {
    throw DomainError("Laplacian shape does not match node count");
  }
  Forward local;
  Forward& f = fwd ? *fwd : local;
  const int L = cfg_.layers;
  f.h_static.assign(static_cast<std::size_t>(L + 1), Mat());
  f.cheb.assign(static_cast<std::size_t>(L), ChebCache());
  f.edge.assign(static_cast<std::size_t>(L), std::nullopt);
  f.s.assign(static_cast<std::size_t>(L + 1), Mat());
  f.h_static[0] = x;
  for (int l = 1; l <= L; ++l) {
    std::vector<const Mat*> w;
    for (int q = 0; q < cfg_.cheb_order; ++q) w.push_back(&cheb_w(l - 1, q));
    auto* cache = &f.cheb[static_cast<std::size_t>(l - 1)];
    f.h_static[static_cast<std::size_t>(l)] =
        l == 1 && x_basis ? cheb_conv_from_basis(*x_basis, w, cache)
                          : cheb_conv_forward(f.h_static[static_cast<std::size_t>(l - 1)], l_tilde, w, cache);
    const Mat& hs = f.h_static[static_cast<std::size_t>(l)];
    if (uses_edge(l)) {
      auto& ec = f.edge[static_cast<std::size_t>(l - 1)].emplace();
      const auto e = edge_index(l - 1);
      edge_conv_forward(hs, cfg_.knn, params_[e].value, params_[e + 1].value, &ec);
      f.s[static_cast<std::size_t>(l)] = hs + ec.out;
    } else {
      f.s[static_cast<std::size_t>(l)] = hs;
    }
  }
  f.z.clear();
  f.w.clear();
  switch (cfg_.fusion_mode) {
    case FusionMode::full:
      if (cfg_.weighting == Weighting::cascade) {
        f.z.push_back(f.s[1]);
        for (int l = 1; l < L; ++l) {
          f.w.push_back(node_weights(f.z.back()));
          f.z.push_back(f.w.back().asDiagonal() * f.s[static_cast<std::size_t>(l + 1)]);
        }
      } else {
        f.w.push_back(node_weights(f.s[static_cast<std::size_t>(L - 1)]));
        f.z.push_back(f.w.back().asDiagonal() * f.s[static_cast<std::size_t>(L)]);
      }
      f.h_out = f.z.back();
      break;
    case FusionMode::fusion_s1:
    case FusionMode::fusion_s2: {
      Eigen::VectorXd prod = Eigen::VectorXd::Ones(x.rows());
      for (int l = 1; l < L; ++l) {
        f.w.push_back(node_weights(f.s[static_cast<std::size_t>(l)]));
        prod = prod.cwiseProduct(f.w.back());
      }
      f.h_out = prod.asDiagonal() * f.s[static_cast<std::size_t>(L)];
      break;
    }
    case FusionMode::static_only:
      f.h_out = f.h_static[static_cast<std::size_t>(L)];
      break;
    case FusionMode::dynamic_only:
      f.h_out = f.edge[static_cast<std::size_t>(L - 1)]->out;
      break;
  }
  f.logits = nn::dense_forward(f.h_out, params_[params_.size() - 2].value, params_.back().value);
  return f.logits;
}

void HfgcnModel::backward(const Forward& f, const Mat& l_tilde, const Mat& dlogits) {
  const int L = cfg_.layers;
  auto& wc = params_[params_.size() - 2];
  auto& bc = params_.back();
  auto gc = nn::dense_backward(f.h_out, wc.value, dlogits);
  wc.grad += gc.dw;
  bc.grad += gc.db;
  const Mat& dh = gc.dx;
  const Eigen::Index nodes = dh.rows();
  const Eigen::Index d = dh.cols();

  std::vector<Mat> ds(static_cast<std::size_t>(L + 1), Mat::Zero(nodes, d));
  std::vector<Mat> d_edge(static_cast<std::size_t>(L + 1), Mat::Zero(nodes, d));
  const auto sL = static_cast<std::size_t>(L);

  switch (cfg_.fusion_mode) {
    case FusionMode::full:
      if (cfg_.weighting == Weighting::cascade) {
        Mat dz = dh;
        for (int l = L - 1; l >= 1; --l) {
          const auto ul = static_cast<std::size_t>(l);
          const Eigen::VectorXd& w = f.w[ul - 1];
          const Mat& next = f.s[ul + 1];
          ds[ul + 1] += w.asDiagonal() * dz;
          const Eigen::VectorXd dw = dz.cwiseProduct(next).rowwise().sum();
          dz = row_norm_bwd(f.z[ul - 1], w, dw);
        }
        ds[1] += dz;
      } else {
        const Eigen::VectorXd& w = f.w[0];
        ds[sL] += w.asDiagonal() * dh;
        const Eigen::VectorXd dw = dh.cwiseProduct(f.s[sL]).rowwise().sum();
        ds[sL - 1] += row_norm_bwd(f.s[sL - 1], w, dw);
      }
      break;
    case FusionMode::fusion_s1:
    case FusionMode::fusion_s2: {
      Eigen::VectorXd prod = Eigen::VectorXd::Ones(nodes);
      for (const auto& w : f.w) prod = prod.cwiseProduct(w);
      ds[sL] += prod.asDiagonal() * dh;
      const Eigen::VectorXd dprod = dh.cwiseProduct(f.s[sL]).rowwise().sum();
      for (std::size_t l = 1; l < sL; ++l) {
        Eigen::VectorXd others = Eigen::VectorXd::Ones(nodes);
        for (std::size_t m = 1; m < sL; ++m) {
          if (m != l) others = others.cwiseProduct(f.w[m - 1]);
        }
        ds[l] += row_norm_bwd(f.s[l], f.w[l - 1], dprod.cwiseProduct(others));
      }
      break;
    }
    case FusionMode::static_only:
      ds[sL] += dh;
      break;
    case FusionMode::dynamic_only:
      d_edge[sL] += dh;
      break;
  }

  Mat carry = Mat::Zero(nodes, d);  // dL/dh_static[l] from layer l+1
  for (int l = L; l >= 1; --l) {
    const auto ul = static_cast<std::size_t>(l);
    Mat dstatic = carry + ds[ul];
    if (uses_edge(l)) {
      const auto e = edge_index(l - 1);
      if (cfg_.fusion_mode != FusionMode::dynamic_only) d_edge[ul] += ds[ul];
      dstatic += edge_conv_backward(f.h_static[ul], *f.edge[ul - 1], params_[e].value,
                                    params_[e + 1].value, d_edge[ul], params_[e].grad,
                                    params_[e + 1].grad);
    }
    std::vector<const Mat*> w;
    std::vector<Mat*> dw;
    for (int q = 0; q < cfg_.cheb_order; ++q) {
      w.push_back(&cheb_w(l - 1, q));
      dw.push_back(&cheb_p(l - 1, q).grad);
    }
    carry = cheb_conv_backward(f.cheb[ul - 1], l_tilde, w, dstatic, dw, l == 1);
  }
}

namespace {

std::vector<int> argmax_rows(const Mat& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = logits(i, 1) > logits(i, 0) ? 1 : 0;
  return out;
}

}  // namespace

TrainOutput train_hfgcn(HfgcnModel& model, const PatientGraph& g, std::uint64_t seed) {
  const auto& cfg = model.config();
  const auto nodes = static_cast<int>(g.x.rows());
  cfg.validate(nodes);
  if (g.train.empty()) throw ConfigError("train mask is empty");
  if (static_cast<int>(g.labels.size()) != nodes || g.a.rows() != nodes) {
    throw DomainError("graph features, adjacency and labels disagree on node count");
  }
  const auto lap = scaled_laplacian(g.a, cfg.clamp_negative_edges);

  std::vector<double> class_w;
  if (cfg.auto_class_weights) {
    double n1 = 0.0;
    for (int r : g.train) n1 += g.labels[static_cast<std::size_t>(r)] == 1 ? 1.0 : 0.0;
    const double n = static_cast<double>(g.train.size());
    const double n0 = n - n1;
    class_w = {n0 > 0 ? n / (2.0 * n0) : 1.0, n1 > 0 ? n / (2.0 * n1) : 1.0};
  } else if (cfg.class_weights) {
    class_w = {cfg.class_weights->first, cfg.class_weights->second};
  }

  model.init(seed);
  nn::Adam adam(model.params(), cfg.lr);
  TrainOutput out;
  double best_f1 = -1.0;
  HfgcnModel::Forward fwd;
  const auto x_basis = cheb_basis(g.x, lap.l_tilde, cfg.cheb_order);
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const Mat logits = model.logits(g.x, lap.l_tilde, &fwd, &x_basis);
    const Mat probs = nn::softmax_rows(logits);
    auto loss = nn::cross_entropy(probs, g.labels, g.train, class_w);
    if (!std::isfinite(loss.value)) {
      throw NumericalError("HFGCN loss became non-finite at epoch " + std::to_string(epoch));
    }
    const auto pred = argmax_rows(logits);
    const auto val = compute_metrics(pred, g.labels, g.val);
    out.history.push_back({epoch, loss.value, val.acc, val.f1});
    if (val.f1 > best_f1) {
      best_f1 = val.f1;
      out.best = model.params();
      out.best_epoch = epoch;
    }
    if (epoch == cfg.epochs) break;
    model.zero_grad();
    model.backward(fwd, lap.l_tilde, loss.grad);
    adam.step();
  }
  return out;
}

Mat predict(const HfgcnModel& model, const PatientGraph& g) {
  const auto lap = scaled_laplacian(g.a, model.config().clamp_negative_edges);
  return nn::softmax_rows(model.logits(g.x, lap.l_tilde));
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& h) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_acc,val_f1\n";
  char buf[128];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_acc, r.val_f1);
    out << buf;
  }
}

}  // namespace soz::hfgcn
