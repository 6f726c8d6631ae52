#include "soz/nncore.hpp"

#include <cmath>
#include <map>

#include "soz/error.hpp"
#include "soz/tensor_io.hpp"

namespace soz::nn {

using nlohmann::json;

namespace {

constexpr char kCkptMagic[8] = {'S', 'O', 'Z', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Param::Param(std::string name_, std::string role_, Eigen::Index rows, Eigen::Index cols)
    : name(std::move(name_)), role(std::move(role_)),
      value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

void glorot_init(Mat& w, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-r, r);
  }
}

Mat dense_forward(const Mat& x, const Mat& w, const Mat& b) {
  require(x.cols() == w.rows(), "dense: input " + shape_str(x) + " vs weight " + shape_str(w));
  require(b.rows() == 1 && b.cols() == w.cols(), "dense: bias shape " + shape_str(b));
  Mat y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

DenseGrads dense_backward(const Mat& x, const Mat& w, const Mat& dy) {
  require(x.cols() == w.rows() && dy.cols() == w.cols() && dy.rows() == x.rows(),
          "dense_backward: shape mismatch");
  return {dy * w.transpose(), x.transpose() * dy, dy.colwise().sum()};
}

Mat tanh_fwd(const Mat& x) { return x.array().tanh().matrix(); }

Mat tanh_bwd(const Mat& y, const Mat& dy) {
  return (dy.array() * (1.0 - y.array().square())).matrix();
}

Mat relu_fwd(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_bwd(const Mat& x, const Mat& dy) {
  return (x.array() > 0.0).select(dy, 0.0);
}

Mat avgpool(const Mat& x) {
  require(x.cols() % 2 == 0, "avgpool: width " + std::to_string(x.cols()) + " is odd");
  Mat y(x.rows(), x.cols() / 2);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    y.col(j) = 0.5 * (x.col(2 * j) + x.col(2 * j + 1));
  }
  return y;
}

Mat avgpool_bwd(const Mat& dy) {
  Mat dx(dy.rows(), dy.cols() * 2);
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    dx.col(2 * j) = 0.5 * dy.col(j);
    dx.col(2 * j + 1) = 0.5 * dy.col(j);
  }
  return dx;
}

Mat unpool(const Mat& x) {
  Mat y(x.rows(), x.cols() * 2);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    y.col(2 * j) = x.col(j);
    y.col(2 * j + 1) = x.col(j);
  }
  return y;
}

Mat unpool_bwd(const Mat& dy) {
  require(dy.cols() % 2 == 0, "unpool_bwd: width is odd");
  Mat dx(dy.rows(), dy.cols() / 2);
  for (Eigen::Index j = 0; j < dx.cols(); ++j) dx.col(j) = dy.col(2 * j) + dy.col(2 * j + 1);
  return dx;
}

Mat hadamard(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "hadamard: " + shape_str(a) + " vs " + shape_str(b));
  return a.cwiseProduct(b);
}

HadamardGrads hadamard_bwd(const Mat& a, const Mat& b, const Mat& dy) {
  return {dy.cwiseProduct(b), dy.cwiseProduct(a)};
}

Mat softmax_rows(const Mat& x) {
  Mat p(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    p.row(i) = (x.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Loss cross_entropy(const Mat& probs, std::span<const int> labels,
                   std::span<const int> rows, std::span<const double> class_weights) {
  require(static_cast<Eigen::Index>(labels.size()) == probs.rows(),
          "cross_entropy: label count differs from rows");
  require(class_weights.empty() ||
              static_cast<Eigen::Index>(class_weights.size()) == probs.cols(),
          "cross_entropy: one weight per class required");
  Loss out;
  out.grad = Mat::Zero(probs.rows(), probs.cols());
  if (rows.empty()) return out;
  double total_w = 0.0;
  for (int r : rows) {
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < probs.cols(), "cross_entropy: label out of range");
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
    total_w += w;
    out.value -= w * std::log(std::max(probs(r, y), 1e-300));
    out.grad.row(r) = w * probs.row(r);
    out.grad(r, y) -= w;
  }
  require(total_w > 0.0, "cross_entropy: zero total weight");
  out.value /= total_w;
  out.grad /= total_w;
  return out;
}

Loss mse(const Mat& x, const Mat& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), "mse: shape mismatch");
  const double n = static_cast<double>(x.size());
  const Mat d = x - y;
  return {d.squaredNorm() / n, (2.0 / n) * d};
}

void adam_step(Mat& param, const Mat& grad, AdamState& s) {
  if (s.m.size() == 0) {
    s.m = Mat::Zero(param.rows(), param.cols());
    s.v = Mat::Zero(param.rows(), param.cols());
  }
  ++s.t;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  param.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

Adam::Adam(std::vector<Param>& params, double lr) : params_(&params) {
  states_.resize(params.size());
  for (auto& s : states_) s.lr = lr;
}

void Adam::step() {
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto& p = (*params_)[i];
    adam_step(p.value, p.grad, states_[i]);
  }
}

double grad_check(const std::function<double(const Mat&)>& f, const Mat& x,
                  const Mat& analytic, double h) {
  require(x.rows() == analytic.rows() && x.cols() == analytic.cols(),
          "grad_check: gradient shape mismatch");
  Mat probe = x;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic(i, j);
      worst = std::max(worst, std::abs(numeric - a) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<Param>& params,
                     const json& meta) {
  std::string bytes(kCkptMagic, sizeof kCkptMagic);
  io::append_u32(bytes, kCkptVersion);
  io::append_u32(bytes, static_cast<std::uint32_t>(params.size()));
  json manifest = json::array();
  std::vector<double> row_major;
  for (const auto& p : params) {
    io::append_u32(bytes, static_cast<std::uint32_t>(p.name.size()));
    bytes += p.name;
    io::append_u64(bytes, static_cast<std::uint64_t>(p.value.rows()));
    io::append_u64(bytes, static_cast<std::uint64_t>(p.value.cols()));
    row_major.resize(static_cast<std::size_t>(p.value.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        row_major.data(), p.value.rows(), p.value.cols()) = p.value;
    io::append_le(bytes, std::span<const double>(row_major));
    manifest.push_back({{"name", p.name},
                        {"shape", {p.value.rows(), p.value.cols()}},
                        {"role", p.role}});
  }
  io::write_file(path, bytes);
  io::write_json(path.string() + ".json",
                 json{{"format", "SOZCKPT"}, {"version", kCkptVersion},
                      {"tensors", manifest}, {"meta", meta}});
}

json read_checkpoint_meta(const std::filesystem::path& path) {
  const std::filesystem::path manifest = path.string() + ".json";
  if (!std::filesystem::exists(manifest)) {
    throw DependencyError("missing checkpoint manifest " + manifest.string());
  }
  return io::read_json(manifest).value("meta", json::object());
}

json load_checkpoint(const std::filesystem::path& path, std::vector<Param>& params) {
  if (!std::filesystem::exists(path)) throw DependencyError("missing checkpoint " + path.string());
  io::ByteReader in(io::read_file(path), path.string());
  char magic[8];
  in.raw(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kCkptMagic)) {
    throw ParseError(path.string() + ": bad checkpoint magic", 0);
  }
  const std::uint32_t version = in.u32();
  if (version != kCkptVersion) {
    throw VersionError(path.string() + ": checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  std::map<std::string, Param*> by_name;
  for (auto& p : params) by_name[p.name] = &p;
  if (count != params.size()) {
    throw ParseError(path.string() + ": holds " + std::to_string(count) +
                         " tensors, model expects " + std::to_string(params.size()),
                     in.offset());
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = in.u32();
    std::string name(len, '\0');
    in.raw(name.data(), len);
    const auto rows = static_cast<Eigen::Index>(in.u64());
    const auto cols = static_cast<Eigen::Index>(in.u64());
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ParseError(path.string() + ": unknown tensor '" + name + "'", in.offset());
    }
    Param& p = *it->second;
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw ParseError(path.string() + ": tensor '" + name + "' has shape " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           ", expected " + shape_str(p.value),
                       in.offset());
    }
    std::vector<double> buf(static_cast<std::size_t>(rows * cols));
    in.read_f64(buf);
    p.value = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        buf.data(), rows, cols);
  }
  return read_checkpoint_meta(path);
}

bool all_finite(const std::vector<Param>& params) {
  for (const auto& p : params) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

}  // namespace soz::nn
