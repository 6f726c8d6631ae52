#pragma once

// CCEP-driven connectivity: per-site significance against the interictal
// baseline, BH-FDR masking and thresholded Pearson adjacency.

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "soz/dsp.hpp"

namespace soz::conn {

struct TTest {
  double t = 0.0;
  double p = 1.0;
};

// Two-sided paired t-test with T-1 degrees of freedom. Zero-variance
// differences give p = 1 for zero mean and p = 0 otherwise.
TTest paired_t_test(std::span<const double> x, std::span<const double> y);

struct SignificanceMask {
  std::vector<double> p_raw;
  std::vector<double> p_adjusted;
  std::vector<int> mask;
  double alpha = 0.05;
};

struct Fdr {
  std::vector<double> p_adjusted;
  std::vector<int> mask;
};

// Benjamini-Hochberg step-up; mask[i] = p_adjusted[i] < alpha.
Fdr fdr_bh(std::span<const double> p, double alpha);

dsp::Recording mask_ccep(const dsp::Recording& ccep, const std::vector<int>& mask);

// 0 when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct AdjacencyOptions {
  double rho_tau = 0.3;
  double alpha = 0.05;
  // Keep entries with rho < rho_tau instead of |rho| >= rho_tau.
  bool eq8_literal = false;
  // Samples are averaged over non-overlapping blocks of this length before
  // pairing; 0 pairs raw samples.
  double pair_block_s = 0.005;
  int workers = 1;
};

nlohmann::json to_json(const AdjacencyOptions& o);
AdjacencyOptions adjacency_options_from_json(const nlohmann::json& j);

struct AdjacencyMatrix {
  Eigen::MatrixXd a;
  double threshold = 0.0;
  int segments = 1;
};

SignificanceMask site_significance(const dsp::Recording& ccep,
                                   const dsp::Recording& baseline,
                                   const AdjacencyOptions& opts);

AdjacencyMatrix adjacency_from_ccep(const dsp::Recording& ccep,
                                    const dsp::Recording& baseline,
                                    const AdjacencyOptions& opts = {});

// Element-wise mean; not re-thresholded.
AdjacencyMatrix average_adjacency(const std::vector<AdjacencyMatrix>& as);

// <dir>/<id>.f64 holds C x C little-endian doubles; <dir>/<id>.json the
// sidecar (sites, rho_tau, segments, flags).
void save_adjacency(const AdjacencyMatrix& a, const std::filesystem::path& dir,
                    const std::string& id, const AdjacencyOptions& opts);
AdjacencyMatrix load_adjacency(const std::filesystem::path& dir, const std::string& id);

}  // namespace soz::conn
