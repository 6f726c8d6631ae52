#include "soz/connstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <spdlog/spdlog.h>

#include "soz/error.hpp"
#include "soz/parallel.hpp"
#include "soz/tensor_io.hpp"

namespace soz::conn {

using nlohmann::json;

TTest paired_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("paired_t_test: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("paired_t_test: need at least two pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] - y[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    if (mean == 0.0) {
      spdlog::debug("paired_t_test: identical pairs, p = 1 by convention");
      return {0.0, 1.0};
    }
    spdlog::debug("paired_t_test: constant nonzero difference, p = 0 by convention");
    return {mean > 0 ? HUGE_VAL : -HUGE_VAL, 0.0};
  }
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, std::min(1.0, p)};
}

Fdr fdr_bh(std::span<const double> p, double alpha) {
  const std::size_t c = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("fdr_bh: p-values must lie in [0, 1]");
  }
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  Fdr out;
  out.p_adjusted.assign(c, 1.0);
  out.mask.assign(c, 0);
  double running = 1.0;
  for (std::size_t r = c; r-- > 0;) {
    const double scaled = p[order[r]] * static_cast<double>(c) / static_cast<double>(r + 1);
    running = std::min(running, scaled);
    out.p_adjusted[order[r]] = std::min(1.0, running);
  }
  for (std::size_t i = 0; i < c; ++i) out.mask[i] = out.p_adjusted[i] < alpha ? 1 : 0;
  return out;
}

dsp::Recording mask_ccep(const dsp::Recording& ccep, const std::vector<int>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != ccep.channels()) {
    throw DomainError("mask_ccep: mask length differs from channel count");
  }
  dsp::Recording out = ccep;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) out.samples.row(static_cast<Eigen::Index>(i)).setZero();
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("pearson: length mismatch");
  if (a.size() < 2) throw DomainError("pearson: need at least two samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

json to_json(const AdjacencyOptions& o) {
  return json{{"rho_tau", o.rho_tau},
              {"alpha", o.alpha},
              {"eq8_literal", o.eq8_literal},
              {"pair_block_s", o.pair_block_s}};
}

AdjacencyOptions adjacency_options_from_json(const json& j) {
  AdjacencyOptions o;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "rho_tau") o.rho_tau = v.get<double>();
      else if (k == "alpha") o.alpha = v.get<double>();
      else if (k == "eq8_literal") o.eq8_literal = v.get<bool>();
      else if (k == "pair_block_s") o.pair_block_s = v.get<double>();
      else throw ConfigError("unknown graph key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("graph config: ") + e.what());
  }
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(o.rho_tau >= 0.0 && o.rho_tau <= 1.0)) throw ConfigError("rho_tau must lie in [0, 1]");
  if (o.pair_block_s < 0.0) throw ConfigError("pair_block_s must be >= 0");
  return o;
}

namespace {

std::vector<double> block_means(std::span<const double> x, std::size_t block) {
  if (block <= 1) return {x.begin(), x.end()};
  std::vector<double> out(x.size() / block);
  for (std::size_t b = 0; b < out.size(); ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < block; ++k) s += x[b * block + k];
    out[b] = s / static_cast<double>(block);
  }
  return out;
}

void check_shapes(const dsp::Recording& ccep, const dsp::Recording& baseline) {
  if (ccep.channels() != baseline.channels()) {
    throw DomainError("CCEP has " + std::to_string(ccep.channels()) +
                      " channels but baseline has " + std::to_string(baseline.channels()));
  }
  if (ccep.rate_hz != baseline.rate_hz) {
    throw DomainError("CCEP and baseline sampling rates differ");
  }
}

}  // namespace

SignificanceMask site_significance(const dsp::Recording& ccep,
                                   const dsp::Recording& baseline,
                                   const AdjacencyOptions& opts) {
  check_shapes(ccep, baseline);
  const auto c = static_cast<std::size_t>(ccep.channels());
  const auto len = static_cast<std::size_t>(std::min(ccep.length(), baseline.length()));
  const auto block = static_cast<std::size_t>(std::max(1.0, std::round(opts.pair_block_s * ccep.rate_hz)));
  SignificanceMask sig;
  sig.alpha = opts.alpha;
  sig.p_raw.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    auto x = ccep.channel(static_cast<Eigen::Index>(i));
    auto y = baseline.channel(static_cast<Eigen::Index>(i));
    x.resize(len);
    y.resize(len);
    sig.p_raw[i] = paired_t_test(block_means(x, block), block_means(y, block)).p;
  }
  auto fdr = fdr_bh(sig.p_raw, opts.alpha);
  sig.p_adjusted = std::move(fdr.p_adjusted);
  sig.mask = std::move(fdr.mask);
  return sig;
}

AdjacencyMatrix adjacency_from_ccep(const dsp::Recording& ccep,
                                    const dsp::Recording& baseline,
                                    const AdjacencyOptions& opts) {
  const auto sig = site_significance(ccep, baseline, opts);
  const auto masked = mask_ccep(ccep, sig.mask);
  const Eigen::Index c = masked.channels();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(c));
  for (Eigen::Index i = 0; i < c; ++i) rows[static_cast<std::size_t>(i)] = masked.channel(i);

  AdjacencyMatrix out;
  out.threshold = opts.rho_tau;
  out.a = Eigen::MatrixXd::Zero(c, c);
  parallel_for(static_cast<std::size_t>(c), opts.workers, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < static_cast<std::size_t>(c); ++j) {
      const double rho = pearson(rows[i], rows[j]);
      const bool keep = opts.eq8_literal ? rho < opts.rho_tau : std::abs(rho) >= opts.rho_tau;
      if (keep) {
        out.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rho;
      }
    }
  });
  out.a.triangularView<Eigen::StrictlyLower>() = out.a.transpose();
  return out;
}

AdjacencyMatrix average_adjacency(const std::vector<AdjacencyMatrix>& as) {
  if (as.empty()) throw DomainError("average_adjacency: no matrices");
  AdjacencyMatrix out;
  out.a = Eigen::MatrixXd::Zero(as[0].a.rows(), as[0].a.cols());
  out.threshold = as[0].threshold;
  out.segments = static_cast<int>(as.size());
  for (const auto& m : as) {
    if (m.a.rows() != out.a.rows() || m.a.cols() != out.a.cols()) {
      throw DomainError("average_adjacency: shape mismatch");
    }
    out.a += m.a;
  }
  out.a /= static_cast<double>(as.size());
  return out;
}

void save_adjacency(const AdjacencyMatrix& a, const std::filesystem::path& dir,
                    const std::string& id, const AdjacencyOptions& opts) {
  std::filesystem::create_directories(dir);
  const std::uint64_t shape[2] = {static_cast<std::uint64_t>(a.a.rows()),
                                  static_cast<std::uint64_t>(a.a.cols())};
  std::vector<double> data(static_cast<std::size_t>(a.a.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), a.a.rows(), a.a.cols()) = a.a;
  io::write_tensor(dir / (id + ".f64"), shape, data);
  json side{{"magic", "SOZ-ADJACENCY"},
            {"version", 1},
            {"sites", a.a.rows()},
            {"rho_tau", a.threshold},
            {"segments", a.segments},
            {"options", to_json(opts)}};
  io::write_json(dir / (id + ".json"), side);
}

AdjacencyMatrix load_adjacency(const std::filesystem::path& dir, const std::string& id) {
  const auto side_path = dir / (id + ".json");
  if (!std::filesystem::exists(side_path)) {
    throw DependencyError("missing adjacency " + side_path.string() + "; run build-graph");
  }
  const json side = io::read_json(side_path);
  if (side.value("magic", "") != "SOZ-ADJACENCY") {
    throw ParseError("bad magic in " + side_path.string(), 0);
  }
  if (side.value("version", -1) != 1) throw VersionError(side_path.string() + " has unsupported version");
  const auto t = io::read_tensor_f64(dir / (id + ".f64"));
  if (t.shape.size() != 2 || t.shape[0] != t.shape[1]) {
    throw ParseError("adjacency " + id + " is not square", 0);
  }
  const auto c = static_cast<Eigen::Index>(t.shape[0]);
  AdjacencyMatrix out;
  out.a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data.data(), c, c);
  out.threshold = side.value("rho_tau", 0.0);
  out.segments = side.value("segments", 1);
  return out;
}

}  // namespace soz::conn
