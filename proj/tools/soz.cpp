#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "soz/connstats.hpp"
#include "soz/error.hpp"
#include "soz/features.hpp"
#include "soz/harness.hpp"
#include "soz/hfgcn.hpp"
#include "soz/satae.hpp"
#include "soz/synthcohort.hpp"
#include "soz/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace soz;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string config;
  bool verbose = false;
};

json load_config(const Globals& g) {
  if (g.config.empty()) return json::object();
  if (!fs::exists(g.config)) throw ConfigError("config file " + g.config + " not found");
  try {
    return io::read_json(g.config);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

json section(const json& cfg, const char* name) {
  if (cfg.contains(name)) return cfg.at(name);
  return json::object();
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_synth(const Globals& g, const std::string& spec_file, const fs::path& out,
              const std::optional<int>& patients, const std::optional<std::string>& sites,
              const std::optional<double>& coupling) {
  json spec_j = section(load_config(g), "cohort");
  if (!spec_file.empty()) {
    if (!fs::exists(spec_file)) throw ConfigError("spec file " + spec_file + " not found");
    spec_j = io::read_json(spec_file);
  }
  if (patients) spec_j["num_patients"] = *patients;
  if (sites) {
    const auto comma = sites->find(',');
    if (comma == std::string::npos) spec_j["sites_per_patient"] = std::stoi(*sites);
    else spec_j["sites_per_patient"] = {std::stoi(sites->substr(0, comma)), std::stoi(sites->substr(comma + 1))};
  }
  if (coupling) spec_j["coupling_strength"] = *coupling;
  if (g.seed) spec_j["seed"] = *g.seed;
  const auto spec = synth::cohort_spec_from_json(spec_j);
  std::vector<synth::SyntheticPatient> headers;
  for (int i = 0; i < spec.num_patients; ++i) {
    auto p = synth::generate_patient(spec, i);
    synth::save_patient(p, out);
    synth::SyntheticPatient h;
    h.id = p.id;
    h.sites = p.sites;
    h.soz_labels = p.soz_labels;
    h.community = p.community;
    h.ccep_stim_sites = p.ccep_stim_sites;
    headers.push_back(std::move(h));
    spdlog::info("wrote {}", p.id);
  }
  synth::write_cohort_index(spec, headers, out);
  print_json({{"cohort", out.string()}, {"patients", spec.num_patients}});
  return 0;
}

int cmd_preprocess(const Globals& g, const fs::path& cohort, const fs::path& out,
                   const std::optional<int>& feat_len) {
  json pj = section(load_config(g), "preprocess");
  if (feat_len) pj["feat_len"] = *feat_len;
  auto pcfg = features::preprocess_config_from_json(pj);
  pcfg.workers = g.workers;
  const auto idx = synth::load_cohort_index(cohort);
  for (std::size_t i = 0; i < idx.headers.size(); ++i) {
    const auto p = synth::load_patient(cohort, static_cast<int>(i));
    features::save_site_tensor(features::featurize_patient(p, pcfg), out, "feature");
    spdlog::info("featurized {}", p.id);
  }
  print_json({{"features", out.string()}, {"patients", idx.headers.size()}});
  return 0;
}

std::vector<features::SiteTensor> load_features(const fs::path& dir) {
  const auto ids = features::list_store(dir, "feature");
  if (ids.empty()) throw DependencyError("no features under " + dir.string() + "; run `preprocess` first");
  std::vector<features::SiteTensor> out;
  for (const auto& id : ids) out.push_back(features::load_site_tensor(dir, id, "feature"));
  return out;
}

int cmd_train_sae(const Globals& g, const fs::path& feats_dir, const fs::path& out) {
  auto scfg_j = section(load_config(g), "sae");
  if (g.seed) scfg_j["seed"] = *g.seed;
  const auto scfg = satae::satae_config_from_json(scfg_j);
  const auto feats = load_features(feats_dir);
  satae::SataeModel model(scfg);
  const auto hist = satae::train_shared(model, satae::pooled_dataset(feats));
  satae::save_model(model, out, &hist);
  print_json({{"model", out.string()}, {"epoch_mse", hist.epoch_mse}});
  return 0;
}

int cmd_encode(const fs::path& model_path, const fs::path& feats_dir, const fs::path& out) {
  const auto model = satae::load_model(model_path);
  const auto feats = load_features(feats_dir);
  for (const auto& f : feats) features::save_site_tensor(satae::encode_patient(model, f), out, "latent");
  print_json({{"latents", out.string()}, {"patients", feats.size()}});
  return 0;
}

int cmd_build_graph(const Globals& g, const fs::path& cohort, const fs::path& out,
                    const std::optional<double>& rho_tau, const std::optional<double>& alpha,
                    bool eq8_literal) {
  const json cfg = load_config(g);
  auto pcfg = features::preprocess_config_from_json(section(cfg, "preprocess"));
  json gj = section(cfg, "graph");
  if (rho_tau) gj["rho_tau"] = *rho_tau;
  if (alpha) gj["alpha"] = *alpha;
  if (eq8_literal) gj["eq8_literal"] = true;
  auto gopts = conn::adjacency_options_from_json(gj);
  gopts.workers = g.workers;
  pcfg.workers = g.workers;
  const auto idx = synth::load_cohort_index(cohort);
  json summary = json::array();
  for (std::size_t i = 0; i < idx.headers.size(); ++i) {
    const auto p = synth::load_patient(cohort, static_cast<int>(i));
    const auto segs = harness::patient_graphs(p, pcfg, gopts);
    harness::save_patient_graphs(segs, out, p.id, gopts);
    const auto avg = conn::average_adjacency(segs);
    const double c = static_cast<double>(avg.a.rows());
    summary.push_back({{"patient", p.id},
                       {"segments", segs.size()},
                       {"edge_density", static_cast<double>((avg.a.array() != 0.0).count()) / (c * (c - 1.0))}});
  }
  print_json({{"graphs", out.string()}, {"patients", summary}});
  return 0;
}

harness::ExperimentConfig experiment_config(const Globals& g) {
  const json cfg = load_config(g);
  auto ec = harness::experiment_config_from_json(cfg.contains("experiment") ? cfg.at("experiment") : cfg);
  if (g.seed) ec.seed = *g.seed;
  ec.workers = g.workers;
  return ec;
}

int cmd_train_hfgcn(const Globals& g, const fs::path& graphs, const fs::path& latents, const fs::path& out) {
  auto ec = experiment_config(g);
  ec.graphs_dir = graphs;
  ec.latents_dir = latents;
  ec.repeats = 1;
  ec.sweep_param.clear();
  const auto inputs = harness::load_inputs(ec);
  fs::create_directories(out);
  auto report = harness::run_experiment(ec, inputs, {out, true});
  io::write_file(out / "metrics.csv", harness::metrics_csv(report));
  io::write_file(out / "per_patient.csv", harness::per_patient_csv(report));
  print_json({{"run", out.string()}, {"fingerprint", report.fingerprint}});
  return 0;
}

int cmd_run(const Globals& g, const std::optional<std::string>& runs_dir) {
  auto ec = experiment_config(g);
  if (runs_dir) ec.runs_dir = *runs_dir;
  harness::MetricsReport report;
  const auto dir = harness::run_from_disk(ec, &report);
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"variant", r.variant}, {"model", r.model}, {"acc", r.mean[0]}, {"f1", r.mean[3]}});
  }
  print_json({{"run", dir.string()}, {"fingerprint", report.fingerprint}, {"rows", rows}});
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const auto rows = harness::collect_report(paths);
  const auto csv = harness::report_csv(rows);
  const auto js = harness::report_json(rows);
  if (!out.empty()) {
    io::write_file(out + ".csv", csv);
    io::write_json(out + ".json", js);
  }
  std::cout << csv;
  for (const auto& r : rows) {
    if (!r.error.empty()) return static_cast<int>(ExitCode::failure);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SOZ localisation pipeline: synthetic cohorts, features, sATAE, HFGCN"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed overriding the config");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "JSON config file");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  std::string synth_out, synth_spec;
  std::optional<int> patients;
  std::optional<std::string> sites;
  std::optional<double> coupling;
  synth->add_option("--spec", synth_spec, "Cohort spec JSON");
  synth->add_option("--out", synth_out, "Cohort directory")->required();
  synth->add_option("--patients", patients, "Number of patients");
  synth->add_option("--sites", sites, "Sites per patient, N or MIN,MAX");
  synth->add_option("--coupling", coupling, "CCEP coupling strength");

  auto* pre = app.add_subcommand("preprocess", "Band-power features per patient");
  std::string pre_cohort, pre_out;
  pre->add_option("--cohort", pre_cohort)->required();
  pre->add_option("--out", pre_out)->required();
  std::optional<int> feat_len;
  pre->add_option("--feat-len", feat_len, "Feature length I");

  auto* tsae = app.add_subcommand("train-sae", "Train the shared autoencoder");
  std::string tsae_feats, tsae_out;
  tsae->add_option("--features", tsae_feats)->required();
  tsae->add_option("--out", tsae_out)->required();

  auto* enc = app.add_subcommand("encode", "Encode features into latents");
  std::string enc_model, enc_feats, enc_out;
  enc->add_option("--model", enc_model)->required();
  enc->add_option("--features", enc_feats)->required();
  enc->add_option("--out", enc_out)->required();

  auto* bg = app.add_subcommand("build-graph", "CCEP adjacency per patient");
  std::string bg_feats, bg_cohort, bg_out;
  std::optional<double> rho_tau, alpha;
  bool eq8 = false;
  bg->add_option("--features", bg_feats, "Feature store (unused, accepted for symmetry)");
  bg->add_option("--cohort", bg_cohort)->required();
  bg->add_option("--out", bg_out)->required();
  bg->add_option("--rho-tau", rho_tau);
  bg->add_option("--alpha", alpha);
  bg->add_flag("--eq8-literal", eq8, "Keep correlations below the threshold");

  auto* thf = app.add_subcommand("train-hfgcn", "Train one HFGCN per patient");
  std::string thf_graph, thf_latents = "latents", thf_out;
  thf->add_option("--graph", thf_graph)->required();
  thf->add_option("--latents", thf_latents);
  thf->add_option("--out", thf_out)->required();

  auto* run = app.add_subcommand("run", "Run an experiment into a new run directory");
  std::optional<std::string> runs_dir;
  run->add_option("--out", runs_dir, "Parent directory for run directories");

  auto* rep = app.add_subcommand("report", "Compare run directories");
  std::vector<std::string> rep_dirs;
  std::string rep_out;
  rep->add_option("runs", rep_dirs)->required();
  rep->add_option("--out", rep_out, "Output prefix for .csv and .json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }
  spdlog::set_default_logger(spdlog::default_logger());
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (synth->parsed()) return cmd_synth(g, synth_spec, synth_out, patients, sites, coupling);
    if (pre->parsed()) return cmd_preprocess(g, pre_cohort, pre_out, feat_len);
    if (tsae->parsed()) return cmd_train_sae(g, tsae_feats, tsae_out);
    if (enc->parsed()) return cmd_encode(enc_model, enc_feats, enc_out);
    if (bg->parsed()) return cmd_build_graph(g, bg_cohort, bg_out, rho_tau, alpha, eq8);
    if (thf->parsed()) return cmd_train_hfgcn(g, thf_graph, thf_latents, thf_out);
    if (run->parsed()) return cmd_run(g, runs_dir);
    if (rep->parsed()) return cmd_report(rep_dirs, rep_out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ExitCode::failure);
  }
  return static_cast<int>(ExitCode::failure);
}
