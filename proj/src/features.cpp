#include "soz/features.hpp"

#include <algorithm>
#include <cmath>

#include "soz/error.hpp"
#include "soz/morlet.hpp"
#include "soz/parallel.hpp"
#include "soz/tensor_io.hpp"

namespace soz::features {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStoreMagic = "SOZ-SITE-TENSOR";
constexpr int kStoreVersion = 1;

std::vector<double> condition_channel(std::span<const double> x, double rate,
                                      double target_rate,
                                      const PreprocessConfig& cfg) {
  auto y = dsp::notch_channel(x, rate, cfg.notch_hz, cfg.notch_q);
  y = dsp::lowpass_channel(y, rate, cfg.lowpass_hz);
  return dsp::downsample_channel(y, rate, target_rate);
}

dsp::Recording condition(const dsp::Recording& raw, double target_rate,
                         const PreprocessConfig& cfg) {
  raw.validate();
  dsp::decimation_factor(raw.rate_hz, target_rate);
  dsp::Recording out;
  out.rate_hz = target_rate;
  out.state = raw.state;
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(raw.channels()));
  parallel_for(rows.size(), cfg.workers, [&](std::size_t c) {
    rows[c] = condition_channel(raw.channel(static_cast<Eigen::Index>(c)),
                                raw.rate_hz, target_rate, cfg);
  });
  out.samples.resize(raw.channels(),
                     rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    out.set_channel(static_cast<Eigen::Index>(c), rows[c]);
  }
  return out;
}

}  // namespace

json to_json(const PreprocessConfig& c) {
  return json{{"notch_hz", c.notch_hz},       {"notch_q", c.notch_q},
              {"lowpass_hz", c.lowpass_hz},   {"feature_rate_hz", c.feature_rate_hz},
              {"ccep_rate_hz", c.ccep_rate_hz}, {"feat_len", c.feat_len},
              {"n_cycles", c.n_cycles},       {"n_freqs", c.n_freqs},
              {"zscore", c.zscore}};
}

PreprocessConfig preprocess_config_from_json(const json& j) {
  PreprocessConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "notch_hz") c.notch_hz = v.get<double>();
      else if (k == "notch_q") c.notch_q = v.get<double>();
      else if (k == "lowpass_hz") c.lowpass_hz = v.get<double>();
      else if (k == "feature_rate_hz") c.feature_rate_hz = v.get<double>();
      else if (k == "ccep_rate_hz") c.ccep_rate_hz = v.get<double>();
      else if (k == "feat_len") c.feat_len = v.get<int>();
      else if (k == "n_cycles") c.n_cycles = v.get<int>();
      else if (k == "n_freqs") c.n_freqs = v.get<int>();
      else if (k == "zscore") c.zscore = v.get<bool>();
      else throw ConfigError("unknown preprocess key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("preprocess config: ") + e.what());
  }
  if (c.feat_len < 2 || c.feat_len % 2 != 0) {
    throw ConfigError("feat_len must be even and >= 2");
  }
  return c;
}

SiteTensor::SiteTensor(std::string id_, int sites_, int dim_)
    : id(std::move(id_)), sites(sites_), dim(dim_),
      values(static_cast<std::size_t>(sites_) * kVectorsPerSite *
                 static_cast<std::size_t>(dim_),
             0.0) {}

std::vector<std::vector<double>> state_features(const dsp::Recording& raw,
                                                const PreprocessConfig& cfg) {
  raw.validate();
  const int factor = dsp::decimation_factor(raw.rate_hz, cfg.feature_rate_hz);
  const std::size_t n = static_cast<std::size_t>(raw.length()) / static_cast<std::size_t>(factor);
  dsp::MorletOptions mopts;
  mopts.n_cycles = cfg.n_cycles;
  mopts.n_freqs = cfg.n_freqs;
  mopts.out_len = cfg.feat_len;
  std::vector<dsp::MorletBank> banks;
  for (const auto& band : dsp::kBands) {
    banks.emplace_back(band, cfg.feature_rate_hz, n, mopts);
  }
  const auto fl = static_cast<std::size_t>(cfg.feat_len);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(raw.channels()),
                                       std::vector<double>(kNumBands * fl));
  parallel_for(out.size(), cfg.workers, [&](std::size_t c) {
    const auto x = condition_channel(raw.channel(static_cast<Eigen::Index>(c)),
                                     raw.rate_hz, cfg.feature_rate_hz, cfg);
    for (int b = 0; b < kNumBands; ++b) {
      const auto bp = dsp::bandpass_channel(x, cfg.feature_rate_hz,
                                            dsp::kBands[static_cast<std::size_t>(b)]);
      const auto pw = banks[static_cast<std::size_t>(b)].power(bp);
      std::copy(pw.begin(), pw.end(), out[c].begin() + static_cast<std::ptrdiff_t>(b * fl));
    }
  });
  return out;
}

void zscore_features(SiteTensor& f) {
  const auto dim = static_cast<std::size_t>(f.dim);
  for (int s = 0; s < kNumStates; ++s) {
    for (int b = 0; b < kNumBands; ++b) {
      double sum = 0.0;
      for (int i = 0; i < f.sites; ++i) {
        const double* v = f.vec(i, s, b);
        for (std::size_t t = 0; t < dim; ++t) sum += v[t];
      }
      const double count = static_cast<double>(f.sites) * static_cast<double>(dim);
      const double mean = sum / count;
      double ss = 0.0;
      for (int i = 0; i < f.sites; ++i) {
        const double* v = f.vec(i, s, b);
        for (std::size_t t = 0; t < dim; ++t) ss += (v[t] - mean) * (v[t] - mean);
      }
      const double sd = std::sqrt(ss / count);
      const double inv = sd > 0.0 ? 1.0 / sd : 0.0;
      for (int i = 0; i < f.sites; ++i) {
        double* v = f.vec(i, s, b);
        for (std::size_t t = 0; t < dim; ++t) v[t] = (v[t] - mean) * inv;
      }
    }
  }
}

SiteTensor featurize_patient(const synth::SyntheticPatient& p,
                             const PreprocessConfig& cfg) {
  SiteTensor out(p.id, p.sites, cfg.feat_len);
  out.labels = p.soz_labels;
  for (int s = 0; s < kNumStates; ++s) {
    const auto state = dsp::kBehavioralStates[static_cast<std::size_t>(s)];
    auto it = p.recordings.find(state);
    if (it == p.recordings.end()) {
      throw DependencyError(p.id + " lacks a " + std::string(dsp::to_string(state)) +
                            " recording");
    }
    const auto per_site = state_features(it->second, cfg);
    for (int i = 0; i < p.sites; ++i) {
      for (int b = 0; b < kNumBands; ++b) {
        const auto& src = per_site[static_cast<std::size_t>(i)];
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(b * cfg.feat_len),
                    cfg.feat_len, out.vec(i, s, b));
      }
    }
  }
  if (cfg.zscore) zscore_features(out);
  // Stored as 32-bit floats; round now so in-memory and reloaded runs agree.
  for (auto& v : out.values) v = static_cast<double>(static_cast<float>(v));
  out.meta["zscored"] = cfg.zscore;
  out.meta["preprocess"] = to_json(cfg);
  return out;
}

dsp::Recording preprocess_ccep(const dsp::Recording& raw,
                               const PreprocessConfig& cfg) {
  return condition(raw, cfg.ccep_rate_hz, cfg);
}

dsp::Recording preprocess_baseline(const dsp::Recording& raw_interictal,
                                   const PreprocessConfig& cfg) {
  return dsp::build_baseline(condition(raw_interictal, cfg.ccep_rate_hz, cfg));
}

void save_site_tensor(const SiteTensor& t, const fs::path& dir,
                      const std::string& kind) {
  fs::create_directories(dir);
  const std::uint64_t shape[4] = {static_cast<std::uint64_t>(t.sites), kNumStates,
                                  kNumBands, static_cast<std::uint64_t>(t.dim)};
  std::vector<float> data(t.values.begin(), t.values.end());
  io::write_tensor(dir / (t.id + ".f32"), shape, data);
  json side;
  side["magic"] = kStoreMagic;
  side["version"] = kStoreVersion;
  side["kind"] = kind;
  side["id"] = t.id;
  side["shape"] = {t.sites, kNumStates, kNumBands, t.dim};
  side["axes"] = {"site", "state", "band", kind == "latent" ? "latent" : "time_bin"};
  json states = json::array();
  for (auto s : dsp::kBehavioralStates) states.push_back(dsp::to_string(s));
  json bands = json::array();
  for (const auto& b : dsp::kBands) bands.push_back(dsp::to_string(b.band));
  side["states"] = states;
  side["bands"] = bands;
  side["labels"] = t.labels;
  side["meta"] = t.meta;
  io::write_json(dir / (t.id + ".json"), side);
}

SiteTensor load_site_tensor(const fs::path& dir, const std::string& id,
                            const std::string& kind) {
  const fs::path side_path = dir / (id + ".json");
  if (!fs::exists(side_path)) {
    throw DependencyError("missing " + kind + " store entry " + side_path.string());
  }
  const json side = io::read_json(side_path);
  if (!side.is_object() || side.value("magic", "") != kStoreMagic) {
    throw ParseError("bad magic in " + side_path.string(), 0);
  }
  if (side.value("version", -1) != kStoreVersion) {
    throw VersionError(side_path.string() + " has unsupported version");
  }
  if (side.value("kind", "") != kind) {
    throw ParseError(side_path.string() + " holds '" + side.value("kind", "") +
                         "', expected '" + kind + "'",
                     0);
  }
  const auto tensor = io::read_tensor_f32(dir / (id + ".f32"));
  if (tensor.shape.size() != 4 || tensor.shape[1] != kNumStates ||
      tensor.shape[2] != kNumBands) {
    throw ParseError("unexpected tensor shape in " + id, 0);
  }
  SiteTensor t(id, static_cast<int>(tensor.shape[0]), static_cast<int>(tensor.shape[3]));
  std::copy(tensor.data.begin(), tensor.data.end(), t.values.begin());
  t.labels = side.at("labels").get<std::vector<int>>();
  t.meta = side.value("meta", json::object());
  return t;
}

std::vector<std::string> list_store(const fs::path& dir, const std::string& kind) {
  std::vector<std::string> ids;
  if (!fs::is_directory(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    const json side = io::read_json(entry.path());
    if (side.is_object() && side.value("magic", "") == kStoreMagic &&
        side.value("kind", "") == kind) {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace soz::features
