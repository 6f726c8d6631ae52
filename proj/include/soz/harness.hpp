#pragma once

// Experiment orchestration: node splits, feature assembly, per-patient
// training jobs, aggregation and run-directory artifacts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "soz/connstats.hpp"
#include "soz/dsp.hpp"
#include "soz/features.hpp"
#include "soz/hfgcn.hpp"
#include "soz/metrics.hpp"
#include "soz/satae.hpp"
#include "soz/synthcohort.hpp"

namespace soz::harness {

struct SplitFractions {
  double train = 0.10;
  double val = 0.20;
  double test = 0.70;
};

struct NodeSplit {
  std::vector<int> train, val, test;  // ascending node indices
};

// Stratified by label with largest-remainder allocation; each class keeps at
// least one train and one validation node when its count allows.
NodeSplit split_nodes(std::span<const int> labels, const SplitFractions& f, std::uint64_t seed);

// States outer, bands inner, each block latent_dim wide.
Eigen::MatrixXd assemble_node_features(const features::SiteTensor& latents,
                                       const std::vector<dsp::Band>& bands,
                                       const std::vector<dsp::State>& states);

// One patient's inputs to the graph stage. Adjacency per CCEP segment; the
// graph averages the selected subset.
struct PatientInput {
  std::string id;
  features::SiteTensor latents;
  std::vector<Eigen::MatrixXd> segment_adjacency;
};

struct Variant {
  std::string label;
  hfgcn::HfgcnConfig hfgcn;
  std::vector<dsp::Band> bands;
  std::vector<dsp::State> states;
};

struct ExperimentConfig {
  std::filesystem::path latents_dir = "latents";
  std::filesystem::path graphs_dir = "graphs";
  std::filesystem::path runs_dir = "runs";
  std::vector<dsp::Band> bands;    // empty: all six
  std::vector<dsp::State> states;  // empty: all three
  hfgcn::HfgcnConfig hfgcn;
  std::optional<satae::Placement> attention_placement;
  // One of "", "F", "K", "fusion_mode", "bands", "states".
  std::string sweep_param;
  nlohmann::json sweep_values = nlohmann::json::array();
  SplitFractions fractions;
  std::vector<int> ccep_subset;  // empty: every segment
  std::uint64_t seed = 0;
  int repeats = 5;
  int workers = 1;
  bool logistic_baseline = true;
  double logistic_l2 = 1.0;
  bool save_checkpoints = true;

  void validate() const;
  std::vector<Variant> variants() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// FNV-1a of the canonical JSON of every result-affecting setting.
std::string config_fingerprint(const ExperimentConfig& c);

struct JobResult {
  std::string variant;
  std::string model;  // "hfgcn" or "logistic"
  std::string patient;
  int repeat = 0;
  Metrics metrics;
  int best_epoch = -1;
};

struct AggregateRow {
  std::string variant;
  std::string model;
  std::string fusion_mode;
  int cheb_order = 0;
  int knn = 0;
  std::string bands;
  std::string states;
  int n_prime = 0;
  int patients = 0;
  int repeats = 0;
  std::array<double, 4> mean{};  // acc, recall, precision, f1
  std::array<double, 4> stdev{};
  int zero_denominator_events = 0;
};

struct PatientRow {
  std::string variant;
  std::string model;
  std::string patient;
  std::array<double, 4> values{};  // repeat-averaged acc, recall, precision, f1
};

struct MetricsReport {
  std::vector<AggregateRow> rows;
  std::vector<PatientRow> per_patient;
  std::vector<JobResult> jobs;
  std::string fingerprint;
  double wall_seconds = 0.0;
};

struct ArtifactSink {
  std::filesystem::path run_dir;  // empty: nothing written
  bool checkpoints = false;
};

MetricsReport run_experiment(const ExperimentConfig& cfg, const std::vector<PatientInput>& inputs,
                             const ArtifactSink& sink = {});

// Per-patient repeat means reduced to mean and sample std (divisor n-1).
std::vector<AggregateRow> aggregate(const std::vector<Variant>& variants,
                                    const std::vector<JobResult>& jobs, int latent_dim,
                                    std::vector<PatientRow>* per_patient = nullptr);

std::string metrics_csv(const MetricsReport& r);
std::string per_patient_csv(const MetricsReport& r);

// Loads latents and graphs from disk, runs, and writes
// <runs_dir>/<timestamp>-<fingerprint>/. Returns the run directory.
std::filesystem::path run_from_disk(const ExperimentConfig& cfg, MetricsReport* out = nullptr);

std::vector<PatientInput> load_inputs(const ExperimentConfig& cfg);

// Ablation ordering: full >= static_only and full >= dynamic_only in mean F1.
struct TrendCheck {
  bool available = false;
  bool full_ge_static = false;
  bool full_ge_dynamic = false;
};
TrendCheck ablation_trend(const std::vector<AggregateRow>& rows);

struct ReportRow {
  std::string run;
  std::string fingerprint;
  std::string variant;
  std::string model;
  std::array<double, 4> mean{};
  std::array<double, 4> stdev{};
  std::string error;
};

// One row per (run, variant, model), ordered by mean accuracy descending;
// unreadable runs become error rows at the end.
std::vector<ReportRow> collect_report(const std::vector<std::filesystem::path>& run_dirs);
std::string report_csv(const std::vector<ReportRow>& rows);
nlohmann::json report_json(const std::vector<ReportRow>& rows);

// Graph stage for one patient: adjacency per CCEP segment against the
// averaged interictal baseline.
std::vector<conn::AdjacencyMatrix> patient_graphs(const synth::SyntheticPatient& p,
                                                  const features::PreprocessConfig& pcfg,
                                                  const conn::AdjacencyOptions& gopts);

void save_patient_graphs(const std::vector<conn::AdjacencyMatrix>& segs,
                         const std::filesystem::path& dir, const std::string& id,
                         const conn::AdjacencyOptions& gopts);
std::vector<Eigen::MatrixXd> load_patient_graphs(const std::filesystem::path& dir,
                                                 const std::string& id);

// Synthetic cohort to latents and graphs without touching disk; patients are
// generated and reduced one at a time.
struct PreparedCohort {
  std::vector<PatientInput> inputs;
  std::vector<features::SiteTensor> features;
  satae::TrainResult sae_history;
};
PreparedCohort prepare_in_memory(const synth::CohortSpec& spec,
                                 const features::PreprocessConfig& pcfg,
                                 const satae::SataeConfig& scfg,
                                 const conn::AdjacencyOptions& gopts);

std::string join_bands(const std::vector<dsp::Band>& bands);
std::string join_states(const std::vector<dsp::State>& states);

}  // namespace soz::harness
