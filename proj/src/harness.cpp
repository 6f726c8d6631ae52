#include "soz/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "soz/error.hpp"
#include "soz/logistic.hpp"
#include "soz/parallel.hpp"
#include "soz/rng.hpp"
#include "soz/tensor_io.hpp"

namespace soz::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<dsp::Band> all_bands() {
  std::vector<dsp::Band> out;
  for (const auto& b : dsp::kBands) out.push_back(b.band);
  return out;
}

std::vector<dsp::State> all_states() {
  return {dsp::kBehavioralStates.begin(), dsp::kBehavioralStates.end()};
}

int state_slot(dsp::State s) {
  for (std::size_t i = 0; i < dsp::kBehavioralStates.size(); ++i) {
    if (dsp::kBehavioralStates[i] == s) return static_cast<int>(i);
  }
  throw ConfigError("state '" + std::string(dsp::to_string(s)) + "' is not a behavioral state");
}

std::vector<dsp::Band> bands_from_json(const json& v) {
  std::vector<dsp::Band> out;
  if (v.is_string()) {
    out.push_back(dsp::band_from_string(v.get<std::string>()));
  } else {
    for (const auto& s : v) out.push_back(dsp::band_from_string(s.get<std::string>()));
  }
  if (out.empty()) throw ConfigError("band subset must not be empty");
  return out;
}

std::vector<dsp::State> states_from_json(const json& v) {
  std::vector<dsp::State> out;
  if (v.is_string()) {
    out.push_back(dsp::state_from_string(v.get<std::string>()));
  } else {
    for (const auto& s : v) out.push_back(dsp::state_from_string(s.get<std::string>()));
  }
  if (out.empty()) throw ConfigError("state subset must not be empty");
  for (auto s : out) state_slot(s);
  return out;
}

json bands_to_json(const std::vector<dsp::Band>& bands) {
  json j = json::array();
  for (auto b : bands) j.push_back(dsp::to_string(b));
  return j;
}

json states_to_json(const std::vector<dsp::State>& states) {
  json j = json::array();
  for (auto s : states) j.push_back(dsp::to_string(s));
  return j;
}

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const std::array<const char*, 4> kMetricNames = {"acc", "recall", "precision", "f1"};

std::array<double, 4> metric_values(const Metrics& m) { return {m.acc, m.recall, m.precision, m.f1}; }

}  // namespace

std::string join_bands(const std::vector<dsp::Band>& bands) {
  std::string s;
  for (auto b : bands) s += (s.empty() ? "" : "+") + std::string(dsp::to_string(b));
  return s;
}

std::string join_states(const std::vector<dsp::State>& states) {
  std::string s;
  for (auto st : states) s += (s.empty() ? "" : "+") + std::string(dsp::to_string(st));
  return s;
}

NodeSplit split_nodes(std::span<const int> labels, const SplitFractions& f, std::uint64_t seed) {
  const int c = static_cast<int>(labels.size());
  std::array<std::vector<int>, 2> members;
  for (int i = 0; i < c; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw DomainError("labels must be 0 or 1");
    members[static_cast<std::size_t>(y)].push_back(i);
  }
  if (members[0].empty() || members[1].empty()) {
    throw ConfigError("cannot stratify a split: all " + std::to_string(c) +
                      " nodes share one label");
  }
  const std::array<int, 2> count = {static_cast<int>(members[0].size()),
                                    static_cast<int>(members[1].size())};
  const int minority = count[1] < count[0] ? 1 : 0;

  const auto allocate = [&](int total) {
    std::array<int, 2> alloc{};
    std::array<double, 2> rem{};
    int used = 0;
    for (int k = 0; k < 2; ++k) {
      const double q = static_cast<double>(total) * count[static_cast<std::size_t>(k)] / c;
      alloc[static_cast<std::size_t>(k)] = static_cast<int>(std::floor(q));
      rem[static_cast<std::size_t>(k)] = q - std::floor(q);
      used += alloc[static_cast<std::size_t>(k)];
    }
    for (; used < total; ++used) {
      int pick = minority;
      if (rem[static_cast<std::size_t>(1 - minority)] > rem[static_cast<std::size_t>(minority)]) {
        pick = 1 - minority;
      }
      ++alloc[static_cast<std::size_t>(pick)];
      rem[static_cast<std::size_t>(pick)] = -1.0;
    }
    return alloc;
  };

  const int n_train = static_cast<int>(std::lround(f.train * c));
  const int n_val = static_cast<int>(std::lround(f.val * c));
  auto train = allocate(n_train);
  auto val = allocate(n_val);
  for (auto* split : {&train, &val}) {
    for (int k = 0; k < 2; ++k) {
      auto& mine = (*split)[static_cast<std::size_t>(k)];
      auto& other = (*split)[static_cast<std::size_t>(1 - k)];
      if (mine == 0 && other > 1 && count[static_cast<std::size_t>(k)] >= 2) {
        ++mine;
        --other;
      }
    }
  }
  for (int k = 0; k < 2; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    while (train[uk] + val[uk] > count[uk]) {
      if (val[uk] > 0) --val[uk];
      else --train[uk];
    }
  }

  Rng rng(seed);
  NodeSplit out;
  for (int k = 0; k < 2; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    auto idx = members[uk];
    rng.shuffle(idx);
    for (int m = 0; m < count[uk]; ++m) {
      const int node = idx[static_cast<std::size_t>(m)];
      if (m < train[uk]) out.train.push_back(node);
      else if (m < train[uk] + val[uk]) out.val.push_back(node);
      else out.test.push_back(node);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Eigen::MatrixXd assemble_node_features(const features::SiteTensor& latents,
                                       const std::vector<dsp::Band>& bands,
                                       const std::vector<dsp::State>& states) {
  if (bands.empty() || states.empty()) throw ConfigError("band and state subsets must be non-empty");
  const int n = latents.dim;
  Eigen::MatrixXd x(latents.sites, static_cast<Eigen::Index>(bands.size() * states.size()) * n);
  for (int i = 0; i < latents.sites; ++i) {
    Eigen::Index col = 0;
    for (auto s : states) {
      const int si = state_slot(s);
      for (auto b : bands) {
        const double* v = latents.vec(i, si, static_cast<int>(b));
        for (int d = 0; d < n; ++d) x(i, col++) = v[d];
      }
    }
  }
  return x;
}

void ExperimentConfig::validate() const {
  const double sum = fractions.train + fractions.val + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (!(fractions.train > 0.0) || fractions.val < 0.0 || fractions.test < 0.0) {
    throw ConfigError("split fractions must be non-negative with a positive train share");
  }
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (!(logistic_l2 > 0.0)) throw ConfigError("logistic_l2 must be positive");
  hfgcn.validate();
  for (int q : ccep_subset) {
    if (q < 0) throw ConfigError("ccep_subset indices must be >= 0");
  }
  variants();
}

std::vector<Variant> ExperimentConfig::variants() const {
  Variant base;
  base.hfgcn = hfgcn;
  base.bands = bands.empty() ? all_bands() : bands;
  base.states = states.empty() ? all_states() : states;
  base.label = "default";
  if (sweep_param.empty()) return {base};
  if (!sweep_values.is_array() || sweep_values.empty()) {
    throw ConfigError("sweep values must be a non-empty array");
  }
  std::vector<Variant> out;
  try {
    for (const auto& v : sweep_values) {
      Variant var = base;
      if (sweep_param == "F") {
        var.hfgcn.cheb_order = v.get<int>();
        var.label = "F=" + std::to_string(var.hfgcn.cheb_order);
      } else if (sweep_param == "K") {
        var.hfgcn.knn = v.get<int>();
        var.label = "K=" + std::to_string(var.hfgcn.knn);
      } else if (sweep_param == "fusion_mode") {
        var.hfgcn.fusion_mode = hfgcn::fusion_mode_from_string(v.get<std::string>());
        var.label = std::string(hfgcn::to_string(var.hfgcn.fusion_mode));
      } else if (sweep_param == "bands") {
        var.bands = bands_from_json(v);
        var.label = join_bands(var.bands);
      } else if (sweep_param == "states") {
        var.states = states_from_json(v);
        var.label = join_states(var.states);
      } else {
        throw ConfigError("unknown sweep parameter '" + sweep_param +
                          "' (expected F, K, fusion_mode, bands or states)");
      }
      var.hfgcn.validate();
      out.push_back(std::move(var));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep values: ") + e.what());
  }
  return out;
}

json to_json(const ExperimentConfig& c) {
  json j{{"latents_dir", c.latents_dir.string()},
         {"graphs_dir", c.graphs_dir.string()},
         {"runs_dir", c.runs_dir.string()},
         {"bands", bands_to_json(c.bands.empty() ? all_bands() : c.bands)},
         {"states", states_to_json(c.states.empty() ? all_states() : c.states)},
         {"hfgcn", hfgcn::to_json(c.hfgcn)},
         {"split_fractions", {c.fractions.train, c.fractions.val, c.fractions.test}},
         {"ccep_subset", c.ccep_subset},
         {"seed", c.seed},
         {"repeats", c.repeats},
         {"workers", c.workers},
         {"logistic_baseline", c.logistic_baseline},
         {"logistic_l2", c.logistic_l2},
         {"save_checkpoints", c.save_checkpoints}};
  j["attention_placement"] =
      c.attention_placement ? json(satae::to_string(*c.attention_placement)) : json(nullptr);
  if (!c.sweep_param.empty()) j["sweep"] = {{"param", c.sweep_param}, {"values", c.sweep_values}};
  else j["sweep"] = nullptr;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "latents_dir") c.latents_dir = v.get<std::string>();
      else if (k == "graphs_dir") c.graphs_dir = v.get<std::string>();
      else if (k == "runs_dir") c.runs_dir = v.get<std::string>();
      else if (k == "bands") c.bands = bands_from_json(v);
      else if (k == "states") c.states = states_from_json(v);
      else if (k == "hfgcn") c.hfgcn = hfgcn::hfgcn_config_from_json(v);
      else if (k == "attention_placement") {
        if (v.is_null()) c.attention_placement.reset();
        else c.attention_placement = satae::placement_from_string(v.get<std::string>());
      } else if (k == "sweep") {
        if (v.is_null()) {
          c.sweep_param.clear();
        } else {
          c.sweep_param = v.at("param").get<std::string>();
          c.sweep_values = v.at("values");
        }
      } else if (k == "split_fractions") {
        const auto f = v.get<std::vector<double>>();
        if (f.size() != 3) throw ConfigError("split_fractions needs three entries");
        c.fractions = {f[0], f[1], f[2]};
      } else if (k == "ccep_subset") c.ccep_subset = v.get<std::vector<int>>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "repeats") c.repeats = v.get<int>();
      else if (k == "workers") c.workers = v.get<int>();
      else if (k == "logistic_baseline") c.logistic_baseline = v.get<bool>();
      else if (k == "logistic_l2") c.logistic_l2 = v.get<double>();
      else if (k == "save_checkpoints") c.save_checkpoints = v.get<bool>();
      else if (k == "fingerprint") continue;
      else throw ConfigError("unknown experiment key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_fingerprint(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("workers");
  j.erase("runs_dir");
  j.erase("save_checkpoints");
  const std::string canon = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

Eigen::MatrixXd graph_for(const PatientInput& in, const std::vector<int>& subset) {
  if (in.segment_adjacency.empty()) throw DependencyError(in.id + " has no CCEP adjacency");
  std::vector<conn::AdjacencyMatrix> chosen;
  if (subset.empty()) {
    for (const auto& a : in.segment_adjacency) chosen.push_back({a, 0.0, 1});
  } else {
    for (int q : subset) {
      if (q >= static_cast<int>(in.segment_adjacency.size())) {
        throw ConfigError("ccep_subset index " + std::to_string(q) + " exceeds the " +
                          std::to_string(in.segment_adjacency.size()) + " segments of " + in.id);
      }
      chosen.push_back({in.segment_adjacency[static_cast<std::size_t>(q)], 0.0, 1});
    }
  }
  return conn::average_adjacency(chosen).a;
}

std::string job_stem(std::size_t v, const std::string& patient, int repeat) {
  return "v" + std::to_string(v) + "_" + patient + "_r" + std::to_string(repeat);
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<Variant>& variants,
                                    const std::vector<JobResult>& jobs, int latent_dim,
                                    std::vector<PatientRow>* per_patient) {
  std::vector<AggregateRow> rows;
  for (const auto& var : variants) {
    for (const char* model : {"hfgcn", "logistic"}) {
      std::vector<std::string> patients;
      std::map<std::string, std::pair<std::array<double, 4>, int>> sums;
      int zero_den = 0;
      int repeats = 0;
      for (const auto& j : jobs) {
        if (j.variant != var.label || j.model != model) continue;
        auto [it, fresh] = sums.try_emplace(j.patient, std::array<double, 4>{}, 0);
        if (fresh) patients.push_back(j.patient);
        const auto vals = metric_values(j.metrics);
        for (int m = 0; m < 4; ++m) it->second.first[static_cast<std::size_t>(m)] += vals[static_cast<std::size_t>(m)];
        ++it->second.second;
        repeats = std::max(repeats, it->second.second);
        zero_den += j.metrics.zero_denominator ? 1 : 0;
      }
      if (patients.empty()) continue;
      AggregateRow row;
      row.variant = var.label;
      row.model = model;
      row.fusion_mode = std::string(hfgcn::to_string(var.hfgcn.fusion_mode));
      row.cheb_order = var.hfgcn.cheb_order;
      row.knn = var.hfgcn.knn;
      row.bands = join_bands(var.bands);
      row.states = join_states(var.states);
      row.n_prime = static_cast<int>(var.bands.size() * var.states.size()) * latent_dim;
      row.patients = static_cast<int>(patients.size());
      row.repeats = repeats;
      row.zero_denominator_events = zero_den;
      std::vector<std::array<double, 4>> means;
      for (const auto& p : patients) {
        const auto& [sum, n] = sums[p];
        std::array<double, 4> m{};
        for (int k = 0; k < 4; ++k) m[static_cast<std::size_t>(k)] = sum[static_cast<std::size_t>(k)] / n;
        means.push_back(m);
        if (per_patient) per_patient->push_back({var.label, model, p, m});
      }
      const double np = static_cast<double>(means.size());
      for (int k = 0; k < 4; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        double s = 0.0;
        for (const auto& m : means) s += m[uk];
        const double mean = s / np;
        double ss = 0.0;
        for (const auto& m : means) ss += (m[uk] - mean) * (m[uk] - mean);
        row.mean[uk] = mean;
        row.stdev[uk] = means.size() > 1 ? std::sqrt(ss / (np - 1.0)) : 0.0;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

MetricsReport run_experiment(const ExperimentConfig& cfg, const std::vector<PatientInput>& inputs,
                             const ArtifactSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (inputs.empty()) throw DependencyError("no patients to run; run `encode` and `build-graph` first");
  const auto variants = cfg.variants();
  const int latent_dim = inputs[0].latents.dim;

  std::vector<Eigen::MatrixXd> graphs;
  for (const auto& in : inputs) {
    if (in.latents.dim != latent_dim) throw ConfigError("latent width differs between patients");
    graphs.push_back(graph_for(in, cfg.ccep_subset));
    if (graphs.back().rows() != in.latents.sites) {
      throw DependencyError(in.id + ": graph has " + std::to_string(graphs.back().rows()) +
                            " nodes but latents have " + std::to_string(in.latents.sites) + " sites");
    }
    for (const auto& var : variants) var.hfgcn.validate(in.latents.sites);
  }

  struct Job {
    std::size_t v, p;
    int r;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      for (int r = 0; r < cfg.repeats; ++r) jobs.push_back({v, p, r});
    }
  }
  const int models = cfg.logistic_baseline ? 2 : 1;
  std::vector<JobResult> results(jobs.size() * static_cast<std::size_t>(models));

  if (!sink.run_dir.empty()) {
    fs::create_directories(sink.run_dir / "history");
    if (sink.checkpoints) fs::create_directories(sink.run_dir / "checkpoints");
  }

  parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& var = variants[job.v];
    const auto& in = inputs[job.p];
    const std::uint64_t rep_seed = cfg.seed + static_cast<std::uint64_t>(job.r);
    const std::uint64_t pseed = derive_seed(rep_seed, job.p);

    hfgcn::PatientGraph g;
    g.x = assemble_node_features(in.latents, var.bands, var.states);
    g.a = graphs[job.p];
    g.labels = in.latents.labels;
    const auto split = split_nodes(g.labels, cfg.fractions, pseed);
    g.train = split.train;
    g.val = split.val;
    g.test = split.test;

    hfgcn::HfgcnModel model(var.hfgcn, static_cast<int>(g.x.cols()));
    auto trained = hfgcn::train_hfgcn(model, g, derive_seed(pseed, 1));
    model.params() = trained.best;
    const auto probs = hfgcn::predict(model, g);
    std::vector<int> pred(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) pred[static_cast<std::size_t>(i)] = probs(i, 1) > probs(i, 0) ? 1 : 0;
    auto& hr = results[j * static_cast<std::size_t>(models)];
    hr = {var.label, "hfgcn", in.id, job.r, compute_metrics(pred, g.labels, g.test), trained.best_epoch};

    if (!sink.run_dir.empty()) {
      const auto stem = job_stem(job.v, in.id, job.r);
      hfgcn::write_history_csv(sink.run_dir / "history" / (stem + ".csv"), trained.history);
      if (sink.checkpoints) {
        nn::save_checkpoint(sink.run_dir / "checkpoints" / (stem + ".ckpt"), model.params(),
                            json{{"model", "hfgcn"},
                                 {"variant", var.label},
                                 {"patient", in.id},
                                 {"repeat", job.r},
                                 {"best_epoch", trained.best_epoch},
                                 {"input_dim", g.x.cols()},
                                 {"config", hfgcn::to_json(var.hfgcn)}});
      }
    }

    if (cfg.logistic_baseline) {
      logistic::LogisticOptions lo;
      lo.l2 = cfg.logistic_l2;
      const auto lm = logistic::fit_logistic(g.x, g.labels, g.train, lo);
      results[j * 2 + 1] = {var.label, "logistic", in.id, job.r,
                            compute_metrics(lm.predict(g.x), g.labels, g.test), -1};
    }
  });

  MetricsReport report;
  report.jobs = std::move(results);
  report.rows = aggregate(variants, report.jobs, latent_dim, &report.per_patient);
  report.fingerprint = config_fingerprint(cfg);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string metrics_csv(const MetricsReport& r) {
  std::string out =
      "variant,model,fusion_mode,cheb_order,knn,bands,states,n_prime,patients,repeats";
  for (const char* m : kMetricNames) out += std::string(",") + m + "_mean," + m + "_std";
  out += ",zero_denominator_events\n";
  for (const auto& row : r.rows) {
    out += row.variant + "," + row.model + "," + row.fusion_mode + "," +
           std::to_string(row.cheb_order) + "," + std::to_string(row.knn) + "," + row.bands + "," +
           row.states + "," + std::to_string(row.n_prime) + "," + std::to_string(row.patients) +
           "," + std::to_string(row.repeats);
    for (std::size_t k = 0; k < 4; ++k) out += "," + fmt(row.mean[k]) + "," + fmt(row.stdev[k]);
    out += "," + std::to_string(row.zero_denominator_events) + "\n";
  }
  return out;
}

std::string per_patient_csv(const MetricsReport& r) {
  std::string out = "variant,model,patient,acc,recall,precision,f1\n";
  for (const auto& row : r.per_patient) {
    out += row.variant + "," + row.model + "," + row.patient;
    for (double v : row.values) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

namespace {

std::string repeats_csv(const MetricsReport& r) {
  std::string out = "variant,model,patient,repeat,acc,recall,precision,f1,tp,fp,tn,fn,zero_denominator,best_epoch\n";
  for (const auto& j : r.jobs) {
    out += j.variant + "," + j.model + "," + j.patient + "," + std::to_string(j.repeat);
    for (double v : metric_values(j.metrics)) out += "," + fmt(v);
    out += "," + std::to_string(j.metrics.tp) + "," + std::to_string(j.metrics.fp) + "," +
           std::to_string(j.metrics.tn) + "," + std::to_string(j.metrics.fn) + "," +
           (j.metrics.zero_denominator ? "1" : "0") + "," + std::to_string(j.best_epoch) + "\n";
  }
  return out;
}

}  // namespace

TrendCheck ablation_trend(const std::vector<AggregateRow>& rows) {
  const AggregateRow *full = nullptr, *st = nullptr, *dy = nullptr;
  for (const auto& r : rows) {
    if (r.model != "hfgcn") continue;
    if (r.fusion_mode == "full" && !full) full = &r;
    if (r.fusion_mode == "static_only" && !st) st = &r;
    if (r.fusion_mode == "dynamic_only" && !dy) dy = &r;
  }
  TrendCheck t;
  if (!full || !st || !dy) return t;
  t.available = true;
  t.full_ge_static = full->mean[3] >= st->mean[3];
  t.full_ge_dynamic = full->mean[3] >= dy->mean[3];
  return t;
}

std::vector<conn::AdjacencyMatrix> patient_graphs(const synth::SyntheticPatient& p,
                                                  const features::PreprocessConfig& pcfg,
                                                  const conn::AdjacencyOptions& gopts) {
  const auto baseline = features::preprocess_baseline(p.baseline_interictal, pcfg);
  std::vector<conn::AdjacencyMatrix> out;
  for (const auto& seg : p.ccep) {
    out.push_back(conn::adjacency_from_ccep(features::preprocess_ccep(seg, pcfg), baseline, gopts));
  }
  return out;
}

void save_patient_graphs(const std::vector<conn::AdjacencyMatrix>& segs, const fs::path& dir,
                         const std::string& id, const conn::AdjacencyOptions& gopts) {
  if (segs.empty()) throw DomainError(id + ": no CCEP segments to save");
  const auto c = static_cast<std::uint64_t>(segs[0].a.rows());
  const std::uint64_t shape[3] = {segs.size(), c, c};
  std::vector<double> data;
  data.reserve(segs.size() * c * c);
  for (const auto& s : segs) {
    for (Eigen::Index i = 0; i < s.a.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.a.cols(); ++j) data.push_back(s.a(i, j));
    }
  }
  fs::create_directories(dir);
  io::write_tensor(dir / (id + ".segments.f64"), shape, data);
  conn::save_adjacency(conn::average_adjacency(segs), dir, id, gopts);
}

std::vector<Eigen::MatrixXd> load_patient_graphs(const fs::path& dir, const std::string& id) {
  const auto path = dir / (id + ".segments.f64");
  if (!fs::exists(path)) {
    throw DependencyError("missing graph " + path.string() + "; run build-graph first");
  }
  const auto t = io::read_tensor_f64(path);
  if (t.shape.size() != 3 || t.shape[1] != t.shape[2]) {
    throw ParseError(path.string() + ": expected Q x C x C", 0);
  }
  const auto c = static_cast<Eigen::Index>(t.shape[1]);
  std::vector<Eigen::MatrixXd> out;
  for (std::uint64_t q = 0; q < t.shape[0]; ++q) {
    out.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data() + q * t.shape[1] * t.shape[2], c, c));
  }
  return out;
}

std::vector<PatientInput> load_inputs(const ExperimentConfig& cfg) {
  const auto ids = features::list_store(cfg.latents_dir, "latent");
  if (ids.empty()) {
    throw DependencyError("no latents under " + cfg.latents_dir.string() + "; run `encode` first");
  }
  std::vector<PatientInput> out;
  for (const auto& id : ids) {
    PatientInput in;
    in.id = id;
    in.latents = features::load_site_tensor(cfg.latents_dir, id, "latent");
    if (cfg.attention_placement) {
      const auto have = in.latents.meta.value("attention_placement", "");
      if (have != satae::to_string(*cfg.attention_placement)) {
        throw ConfigError(id + ": latents were encoded with placement '" + have + "', config asks for '" +
                          std::string(satae::to_string(*cfg.attention_placement)) + "'");
      }
    }
    in.segment_adjacency = load_patient_graphs(cfg.graphs_dir, id);
    out.push_back(std::move(in));
  }
  return out;
}

fs::path run_from_disk(const ExperimentConfig& cfg, MetricsReport* out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto inputs = load_inputs(cfg);
  const auto fp = config_fingerprint(cfg);
  fs::path dir = cfg.runs_dir / (utc_stamp() + "-" + fp);
  for (int n = 1; fs::exists(dir); ++n) {
    dir = cfg.runs_dir / (utc_stamp() + "-" + fp + "-" + std::to_string(n));
  }
  fs::create_directories(dir);
  json cj = to_json(cfg);
  cj["fingerprint"] = fp;
  io::write_json(dir / "config.json", cj);

  auto report = run_experiment(cfg, inputs, {dir, cfg.save_checkpoints});
  io::write_file(dir / "metrics.csv", metrics_csv(report));
  io::write_file(dir / "per_patient.csv", per_patient_csv(report));
  io::write_file(dir / "repeats.csv", repeats_csv(report));

  const auto trend = ablation_trend(report.rows);
  json summary{{"fingerprint", fp},
               {"patients", inputs.size()},
               {"notes",
                {"Node splits are stratified by label and repeated with seeds seed+0..repeats-1; "
                 "the reference protocol states only the 10/20/70 proportions."}}};
  if (trend.available) {
    summary["ablation_trend"] = {{"full_ge_static_only", trend.full_ge_static},
                                 {"full_ge_dynamic_only", trend.full_ge_dynamic},
                                 {"pass", trend.full_ge_static && trend.full_ge_dynamic}};
  }
  io::write_json(dir / "summary.json", summary);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_json(dir / "timing.json", json{{"wall_seconds", wall}, {"experiment_seconds", report.wall_seconds}});
  if (out) *out = std::move(report);
  return dir;
}

std::vector<ReportRow> collect_report(const std::vector<fs::path>& run_dirs) {
  std::vector<ReportRow> rows, errors;
  for (const auto& dir : run_dirs) {
    ReportRow err;
    err.run = dir.string();
    const auto metrics = dir / "metrics.csv";
    if (!fs::is_directory(dir) || !fs::exists(metrics)) {
      err.error = "missing metrics.csv";
      errors.push_back(err);
      continue;
    }
    std::string fingerprint;
    if (fs::exists(dir / "config.json")) {
      fingerprint = io::read_json(dir / "config.json").value("fingerprint", "");
    }
    std::ifstream in(metrics);
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    bool ok = col.count("variant") && col.count("model");
    for (const char* m : kMetricNames) {
      ok = ok && col.count(std::string(m) + "_mean") && col.count(std::string(m) + "_std");
    }
    if (!ok) {
      err.error = "malformed metrics.csv header";
      errors.push_back(err);
      continue;
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != header.size()) {
        err.error = "malformed metrics.csv row";
        errors.push_back(err);
        break;
      }
      ReportRow r;
      r.run = dir.string();
      r.fingerprint = fingerprint;
      r.variant = cells[col["variant"]];
      r.model = cells[col["model"]];
      for (std::size_t k = 0; k < 4; ++k) {
        r.mean[k] = std::stod(cells[col[std::string(kMetricNames[k]) + "_mean"]]);
        r.stdev[k] = std::stod(cells[col[std::string(kMetricNames[k]) + "_std"]]);
      }
      rows.push_back(r);
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ReportRow& a, const ReportRow& b) { return a.mean[0] > b.mean[0]; });
  rows.insert(rows.end(), errors.begin(), errors.end());
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "run,fingerprint,variant,model";
  for (const char* m : kMetricNames) out += std::string(",") + m + "_mean," + m + "_std";
  out += ",error\n";
  for (const auto& r : rows) {
    out += r.run + "," + r.fingerprint + "," + r.variant + "," + r.model;
    for (std::size_t k = 0; k < 4; ++k) {
      out += r.error.empty() ? "," + fmt(r.mean[k]) + "," + fmt(r.stdev[k]) : ",,";
    }
    out += "," + r.error + "\n";
  }
  return out;
}

json report_json(const std::vector<ReportRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j{{"run", r.run}, {"fingerprint", r.fingerprint}, {"variant", r.variant}, {"model", r.model}};
    if (r.error.empty()) {
      for (std::size_t k = 0; k < 4; ++k) {
        j[std::string(kMetricNames[k]) + "_mean"] = r.mean[k];
        j[std::string(kMetricNames[k]) + "_std"] = r.stdev[k];
      }
    } else {
      j["error"] = r.error;
    }
    arr.push_back(j);
  }
  return json{{"rows", arr}};
}

PreparedCohort prepare_in_memory(const synth::CohortSpec& spec,
                                 const features::PreprocessConfig& pcfg,
                                 const satae::SataeConfig& scfg,
                                 const conn::AdjacencyOptions& gopts) {
  spec.validate();
  PreparedCohort out;
  std::vector<std::vector<Eigen::MatrixXd>> graphs;
  for (int i = 0; i < spec.num_patients; ++i) {
    auto patient = synth::generate_patient(spec, i);
    out.features.push_back(features::featurize_patient(patient, pcfg));
    std::vector<Eigen::MatrixXd> segs;
    for (auto& a : patient_graphs(patient, pcfg, gopts)) segs.push_back(std::move(a.a));
    graphs.push_back(std::move(segs));
    spdlog::debug("prepared {}", patient.id);
  }
  satae::SataeModel model(scfg);
  out.sae_history = satae::train_shared(model, satae::pooled_dataset(out.features));
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    PatientInput in;
    in.id = out.features[i].id;
    in.latents = satae::encode_patient(model, out.features[i]);
    in.segment_adjacency = std::move(graphs[i]);
    out.inputs.push_back(std::move(in));
  }
  return out;
}

}  // namespace soz::harness
