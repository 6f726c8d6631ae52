#include "soz/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include "soz/error.hpp"
#include "soz/rng.hpp"
#include "soz/tensor_io.hpp"

namespace soz::synth {

namespace fs = std::filesystem;
using dsp::Recording;
using dsp::State;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPinkScale = 0.327;

// Oscillation amplitudes per band (delta .. high gamma) and their per-state
// modulation (wake, sleep, seizure).
constexpr double kBandAmplitude[6] = {1.2, 0.8, 0.8, 0.4, 0.2, 0.08};
constexpr double kStateModulation[3][6] = {
    {1.0, 1.0, 1.6, 1.1, 1.0, 1.0},
    {2.0, 1.4, 0.6, 0.8, 0.8, 0.8},
    {1.2, 1.3, 0.9, 1.2, 1.2, 1.1},
};

struct MarkerProfile {
  double burst_rate_hz;
  double burst_gain;
  double spike_rate_hz;
  double spike_gain;
};
constexpr MarkerProfile kMarkers[3] = {
    {0.0, 0.0, 0.0, 0.0},
    {1.5, 0.4, 0.0, 0.0},
    {3.0, 1.0, 1.5, 1.0},
};
constexpr double kBurstAmplitude = 0.6;
constexpr double kSpikeAmplitude = 2.5;
constexpr double kDistractorGain = 0.5;

// Stream identifiers for per-site sub-seeds.
constexpr std::uint64_t kStreamLayout = 0;
constexpr std::uint64_t kStreamSiteParams = 1;
constexpr std::uint64_t kStreamState = 1'000'000;
constexpr std::uint64_t kStreamCcep = 10'000'000;
constexpr std::uint64_t kStreamInterictal = 20'000'000;
constexpr std::uint64_t kStreamCcepGain = 30'000'000;

int state_slot(State s) {
  switch (s) {
    case State::wake: return 0;
    case State::sleep: return 1;
    case State::seizure: return 2;
    default: break;
  }
  throw DomainError("not a behavioral state");
}

struct SiteParams {
  double bg_amp;
  double osc_amp[6];
  double osc_freq[6];
  double env_freq[6][2];
  double marker_amp;  // 0 for sites without ictal markers
  bool spikes;
};

std::vector<SiteParams> site_params(const CohortSpec& spec,
                                    std::uint64_t pseed,
                                    const PatientLayout& layout) {
  Rng rng(derive_seed(pseed, kStreamSiteParams));
  const double severity = rng.uniform(0.7, 1.3) * spec.ictal_severity;
  std::vector<SiteParams> out(static_cast<std::size_t>(layout.sites));
  for (auto& p : out) {
    p.bg_amp = rng.uniform(0.8, 1.2);
    for (int b = 0; b < 6; ++b) {
      const auto& band = dsp::kBands[static_cast<std::size_t>(b)];
      const double w = band.hi_hz - band.lo_hz;
      p.osc_amp[b] = kBandAmplitude[b] * rng.uniform(0.6, 1.4);
      p.osc_freq[b] = rng.uniform(band.lo_hz + 0.2 * w, band.hi_hz - 0.2 * w);
      p.env_freq[b][0] = rng.uniform(0.05, 0.3);
      p.env_freq[b][1] = rng.uniform(0.05, 0.3);
    }
    p.marker_amp = severity * rng.uniform(0.4, 1.3);
    p.spikes = false;
  }
  for (int i = 0; i < layout.sites; ++i) {
    auto& p = out[static_cast<std::size_t>(i)];
    if (layout.soz_labels[static_cast<std::size_t>(i)] == 1) {
      p.spikes = true;
    } else if (std::find(layout.distractors.begin(), layout.distractors.end(),
                         i) != layout.distractors.end()) {
      p.marker_amp *= kDistractorGain;
    } else {
      p.marker_amp = 0.0;
    }
  }
  return out;
}

// Economy 1/f filter over white noise (Kellet's refined coefficients).
class PinkNoise {
 public:
  double next(double w) {
    b_[0] = 0.99886 * b_[0] + w * 0.0555179;
    b_[1] = 0.99332 * b_[1] + w * 0.0750759;
    b_[2] = 0.96900 * b_[2] + w * 0.1538520;
    b_[3] = 0.86650 * b_[3] + w * 0.3104856;
    b_[4] = 0.55000 * b_[4] + w * 0.5329522;
    b_[5] = -0.7616 * b_[5] - w * 0.0168980;
    const double out =
        b_[0] + b_[1] + b_[2] + b_[3] + b_[4] + b_[5] + b_[6] + w * 0.5362;
    b_[6] = w * 0.115926;
    return out;
  }

 private:
  double b_[7] = {0, 0, 0, 0, 0, 0, 0};
};

// Unit phasor advanced by multiplication; renormalized periodically.
class Oscillator {
 public:
  Oscillator(double freq_hz, double rate_hz, double phase)
      : z_(std::polar(1.0, phase)), step_(std::polar(1.0, 2 * kPi * freq_hz / rate_hz)) {}
  double next() {
    const double v = z_.imag();
    z_ *= step_;
    if (++count_ % 1024 == 0) z_ /= std::abs(z_);
    return v;
  }

 private:
  std::complex<double> z_;
  std::complex<double> step_;
  unsigned count_ = 0;
};

void add_bursts(std::vector<double>& x, double rate_hz, Rng& rng,
                double events_per_s, double amplitude) {
  if (events_per_s <= 0.0 || amplitude <= 0.0) return;
  const double duration = static_cast<double>(x.size()) / rate_hz;
  double t = rng.exponential(events_per_s);
  while (t < duration) {
    const double len = rng.uniform(0.03, 0.08);
    const double f = rng.uniform(90.0, 140.0);
    const double phase = rng.uniform(0.0, 2 * kPi);
    const auto start = static_cast<std::size_t>(t * rate_hz);
    const auto n = static_cast<std::size_t>(len * rate_hz);
    for (std::size_t k = 0; k < n && start + k < x.size(); ++k) {
      const double u = static_cast<double>(k) / static_cast<double>(n);
      const double win = 0.5 - 0.5 * std::cos(2 * kPi * u);
      x[start + k] += amplitude * win *
                      std::sin(2 * kPi * f * static_cast<double>(k) / rate_hz + phase);
    }
    t += len + rng.exponential(events_per_s);
  }
}

void add_spikes(std::vector<double>& x, double rate_hz, Rng& rng,
                double events_per_s, double amplitude) {
  if (events_per_s <= 0.0 || amplitude <= 0.0) return;
  const double duration = static_cast<double>(x.size()) / rate_hz;
  double t = rng.exponential(events_per_s);
  const auto span = static_cast<std::ptrdiff_t>(0.15 * rate_hz);
  while (t < duration) {
    const auto center = static_cast<std::ptrdiff_t>(t * rate_hz);
    const double a = amplitude * rng.uniform(0.7, 1.3);
    for (std::ptrdiff_t k = -span / 3; k < span; ++k) {
      const std::ptrdiff_t idx = center + k;
      if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(x.size())) continue;
      const double s = static_cast<double>(k) / rate_hz;
      const double sharp = std::exp(-(s / 0.008) * (s / 0.008));
      const double slow = std::exp(-((s - 0.04) / 0.03) * ((s - 0.04) / 0.03));
      x[static_cast<std::size_t>(idx)] += a * (-sharp + 0.4 * slow);
    }
    t += rng.exponential(events_per_s);
  }
}

std::vector<double> state_channel(const CohortSpec& spec, std::uint64_t pseed,
                                  State state, int site, const SiteParams& p,
                                  std::size_t n) {
  const int slot = state_slot(state);
  Rng rng(derive_seed(pseed, kStreamState + 100'000 * static_cast<std::uint64_t>(slot) +
                                 static_cast<std::uint64_t>(site)));
  const double fs = spec.raw_rate_hz;
  std::vector<Oscillator> osc, env_a, env_b;
  double env_depth[6][2];
  for (int b = 0; b < 6; ++b) {
    osc.emplace_back(p.osc_freq[b], fs, rng.uniform(0, 2 * kPi));
    env_a.emplace_back(p.env_freq[b][0], fs, rng.uniform(0, 2 * kPi));
    env_b.emplace_back(p.env_freq[b][1], fs, rng.uniform(0, 2 * kPi));
    env_depth[b][0] = rng.uniform(0.1, 0.35);
    env_depth[b][1] = rng.uniform(0.1, 0.35);
  }
  double amp[6];
  for (int b = 0; b < 6; ++b) amp[b] = p.osc_amp[b] * kStateModulation[slot][b];

  PinkNoise pink;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    double v = p.bg_amp * kPinkScale * pink.next(rng.normal());
    for (int b = 0; b < 6; ++b) {
      const double env = 1.0 + env_depth[b][0] * env_a[b].next() +
                         env_depth[b][1] * env_b[b].next();
      v += amp[b] * env * osc[b].next();
    }
    x[t] = v;
  }
  const auto& m = kMarkers[slot];
  add_bursts(x, fs, rng, m.burst_rate_hz, kBurstAmplitude * m.burst_gain * p.marker_amp);
  if (p.spikes) {
    add_spikes(x, fs, rng, m.spike_rate_hz, kSpikeAmplitude * m.spike_gain * p.marker_amp);
  }
  return x;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid cohort spec: " + what);
}

json recording_sidecar(const Recording& rec, const std::vector<int>& labels,
                       int stim_site) {
  json j;
  j["magic"] = kRecordingMagic;
  j["version"] = kCohortVersion;
  j["shape"] = {rec.channels(), rec.length()};
  j["rate_hz"] = rec.rate_hz;
  j["state"] = rec.state ? std::string(dsp::to_string(*rec.state)) : "";
  j["labels"] = labels;
  if (stim_site >= 0) j["stim_site"] = stim_site;
  return j;
}

void check_magic(const json& j, const char* magic, const std::string& origin) {
  if (!j.is_object() || !j.contains("magic") || j["magic"] != magic) {
    throw ParseError("missing or wrong magic in " + origin, 0);
  }
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw ParseError("missing version in " + origin, 0);
  }
  const int v = j["version"].get<int>();
  if (v != kCohortVersion) {
    throw VersionError(origin + " has format version " + std::to_string(v) +
                       ", expected " + std::to_string(kCohortVersion));
  }
}

json patient_header(const SyntheticPatient& p) {
  json j;
  j["id"] = p.id;
  j["sites"] = p.sites;
  j["soz_labels"] = p.soz_labels;
  j["community"] = p.community;
  j["ccep_stim_sites"] = p.ccep_stim_sites;
  j["ccep_segments"] = p.ccep.size();
  return j;
}

}  // namespace

void CohortSpec::validate() const {
  require(num_patients >= 0, "num_patients must be >= 0");
  require(sites_min >= 2 && sites_min <= sites_max,
          "sites_per_patient range must satisfy 2 <= min <= max");
  require(soz_fraction > 0.0 && soz_fraction < 1.0, "soz_fraction must lie in (0,1)");
  require(soz_fraction * sites_min >= 1.0, "soz_fraction * C must be >= 1");
  require(duration_state_s > 0.0, "duration_state_s must be > 0");
  require(ccep_duration_s > 0.0, "ccep_duration_s must be > 0");
  require(interictal_duration_s > 0.0, "interictal_duration_s must be > 0");
  require(ccep_segments >= 1, "ccep_segments must be >= 1");
  require(raw_rate_hz > 0.0, "raw_rate_hz must be > 0");
  require(coupling_strength >= 0.0 && coupling_strength <= 1.0,
          "coupling_strength must lie in [0,1]");
  require(communities >= 1 && communities <= sites_min,
          "communities must lie in [1, sites_min]");
  require(stim_rate_hz > 0.0, "stim_rate_hz must be > 0");
  require(evoked_amplitude >= 0.0, "evoked_amplitude must be >= 0");
  require(ictal_severity >= 0.0, "ictal_severity must be >= 0");
  require(distractor_fraction >= 0.0 && distractor_fraction < 1.0,
          "distractor_fraction must lie in [0,1)");
}

int CohortSpec::soz_count(int sites) const {
  return static_cast<int>(std::lround(soz_fraction * sites));
}

json to_json(const CohortSpec& s) {
  json j;
  j["num_patients"] = s.num_patients;
  j["sites_per_patient"] = {s.sites_min, s.sites_max};
  j["soz_fraction"] = s.soz_fraction;
  j["seed"] = s.seed;
  j["duration_state_s"] = s.duration_state_s;
  j["ccep_segments"] = s.ccep_segments;
  j["ccep_duration_s"] = s.ccep_duration_s;
  j["raw_rate_hz"] = s.raw_rate_hz;
  j["coupling_strength"] = s.coupling_strength;
  j["interictal_duration_s"] = s.interictal_duration_s;
  j["communities"] = s.communities;
  j["stim_rate_hz"] = s.stim_rate_hz;
  j["evoked_amplitude"] = s.evoked_amplitude;
  j["ictal_severity"] = s.ictal_severity;
  j["distractor_fraction"] = s.distractor_fraction;
  return j;
}

CohortSpec cohort_spec_from_json(const json& j) {
  CohortSpec s;
  if (!j.is_object()) throw ConfigError("cohort spec must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_patients") s.num_patients = value.get<int>();
      else if (key == "sites_per_patient") {
        if (value.is_array()) {
          if (value.size() != 2) throw ConfigError("sites_per_patient range needs [min,max]");
          s.sites_min = value[0].get<int>();
          s.sites_max = value[1].get<int>();
        } else {
          s.sites_min = s.sites_max = value.get<int>();
        }
      } else if (key == "soz_fraction") s.soz_fraction = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "duration_state_s") s.duration_state_s = value.get<double>();
      else if (key == "ccep_segments") s.ccep_segments = value.get<int>();
      else if (key == "ccep_duration_s") s.ccep_duration_s = value.get<double>();
      else if (key == "raw_rate_hz") s.raw_rate_hz = value.get<double>();
      else if (key == "coupling_strength") s.coupling_strength = value.get<double>();
      else if (key == "interictal_duration_s") s.interictal_duration_s = value.get<double>();
      else if (key == "communities") s.communities = value.get<int>();
      else if (key == "stim_rate_hz") s.stim_rate_hz = value.get<double>();
      else if (key == "evoked_amplitude") s.evoked_amplitude = value.get<double>();
      else if (key == "ictal_severity") s.ictal_severity = value.get<double>();
      else if (key == "distractor_fraction") s.distractor_fraction = value.get<double>();
      else throw ConfigError("unknown cohort spec key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cohort spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string patient_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "patient_%03d", index);
  return buf;
}

PatientLayout patient_layout(const CohortSpec& spec, int index) {
  spec.validate();
  const std::uint64_t pseed = derive_seed(spec.seed, static_cast<std::uint64_t>(index));
  Rng rng(derive_seed(pseed, kStreamLayout));
  PatientLayout out;
  const int c = spec.sites_min +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(
                    spec.sites_max - spec.sites_min + 1)));
  out.sites = c;

  std::vector<int> order(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  out.community.assign(static_cast<std::size_t>(c), 0);
  const int k = spec.communities;
  std::size_t pos = 0;
  for (int block = 0; block < k; ++block) {
    const int size = c / k + (block < c % k ? 1 : 0);
    for (int m = 0; m < size; ++m) out.community[static_cast<std::size_t>(order[pos++])] = block;
  }

  // SOZ sites fill community 0 first, overflowing into the next blocks.
  const int n_soz = spec.soz_count(c);
  out.soz_labels.assign(static_cast<std::size_t>(c), 0);
  for (int m = 0; m < n_soz; ++m) out.soz_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(m)])] = 1;
  const int soz_blocks_end = out.community[static_cast<std::size_t>(order[static_cast<std::size_t>(std::max(n_soz - 1, 0))])];

  std::vector<int> candidates;
  for (int i = 0; i < c; ++i) {
    if (out.soz_labels[static_cast<std::size_t>(i)] == 0 &&
        out.community[static_cast<std::size_t>(i)] > soz_blocks_end) {
      candidates.push_back(i);
    }
  }
  rng.shuffle(candidates);
  const auto n_distract = std::min<std::size_t>(
      candidates.size(),
      static_cast<std::size_t>(std::lround(spec.distractor_fraction * c)));
  out.distractors.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n_distract));
  std::sort(out.distractors.begin(), out.distractors.end());

  for (int q = 0; q < spec.ccep_segments; ++q) {
    out.ccep_stim_sites.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c))));
  }
  return out;
}

std::vector<double> evoked_train(double rate_hz, std::size_t length,
                                 double stim_rate_hz) {
  constexpr double kFreq = 20.0;
  constexpr double kDecay = 0.050;
  constexpr double kDelay = 0.010;
  constexpr double kSpan = 10 * kDecay;
  std::vector<double> r(length, 0.0);
  const double duration = static_cast<double>(length) / rate_hz;
  const double period = 1.0 / stim_rate_hz;
  for (int pulse = 0;; ++pulse) {
    const double onset = pulse * period + kDelay;
    if (onset >= duration) break;
    const auto first = static_cast<std::size_t>(std::ceil(onset * rate_hz));
    for (std::size_t t = first; t < length; ++t) {
      const double dt = static_cast<double>(t) / rate_hz - onset;
      if (dt > kSpan) break;
      r[t] += std::exp(-dt / kDecay) * std::sin(2 * kPi * kFreq * dt);
    }
  }
  return r;
}

SyntheticPatient generate_patient(const CohortSpec& spec, int index, bool behavioral_states) {
  const PatientLayout layout = patient_layout(spec, index);
  const std::uint64_t pseed = derive_seed(spec.seed, static_cast<std::uint64_t>(index));
  const auto params = site_params(spec, pseed, layout);
  const int c = layout.sites;
  const double fs = spec.raw_rate_hz;

  SyntheticPatient p;
  p.id = patient_id(index);
  p.sites = c;
  p.soz_labels = layout.soz_labels;
  p.community = layout.community;
  p.ccep_stim_sites = layout.ccep_stim_sites;

  const auto n_state = static_cast<std::size_t>(std::llround(spec.duration_state_s * fs));
  for (State s : dsp::kBehavioralStates) {
    if (!behavioral_states) break;
    Recording rec;
    rec.rate_hz = fs;
    rec.state = s;
    rec.samples.resize(c, static_cast<Eigen::Index>(n_state));
    for (int i = 0; i < c; ++i) {
      rec.set_channel(i, state_channel(spec, pseed, s, i, params[static_cast<std::size_t>(i)], n_state));
    }
    p.recordings.emplace(s, std::move(rec));
  }

  const auto n_ccep = static_cast<std::size_t>(std::llround(spec.ccep_duration_s * fs));
  const auto train = evoked_train(fs, n_ccep, spec.stim_rate_hz);
  for (int q = 0; q < spec.ccep_segments; ++q) {
    const int stim = layout.ccep_stim_sites[static_cast<std::size_t>(q)];
    const int block = layout.community[static_cast<std::size_t>(stim)];
    Rng gain_rng(derive_seed(pseed, kStreamCcepGain + static_cast<std::uint64_t>(q)));
    Recording rec;
    rec.rate_hz = fs;
    rec.state = State::ccep;
    rec.samples.resize(c, static_cast<Eigen::Index>(n_ccep));
    std::vector<double> x(n_ccep);
    for (int i = 0; i < c; ++i) {
      const double gain = gain_rng.uniform(0.7, 1.3);
      Rng rng(derive_seed(pseed, kStreamCcep + 100'000 * static_cast<std::uint64_t>(q) +
                                     static_cast<std::uint64_t>(i)));
      const double sigma = params[static_cast<std::size_t>(i)].bg_amp;
      const bool coupled = layout.community[static_cast<std::size_t>(i)] == block;
      const double a = coupled ? spec.coupling_strength * spec.evoked_amplitude * gain : 0.0;
      for (std::size_t t = 0; t < n_ccep; ++t) {
        x[t] = sigma * rng.normal() + a * train[t];
      }
      rec.set_channel(i, x);
    }
    p.ccep.push_back(std::move(rec));
  }

  const auto n_inter = static_cast<std::size_t>(std::llround(spec.interictal_duration_s * fs));
  Recording inter;
  inter.rate_hz = fs;
  inter.state = State::interictal;
  inter.samples.resize(c, static_cast<Eigen::Index>(n_inter));
  {
    std::vector<double> x(n_inter);
    for (int i = 0; i < c; ++i) {
      Rng rng(derive_seed(pseed, kStreamInterictal + static_cast<std::uint64_t>(i)));
      const double sigma = params[static_cast<std::size_t>(i)].bg_amp;
      for (auto& v : x) v = sigma * rng.normal();
      inter.set_channel(i, x);
    }
  }
  p.baseline_interictal = std::move(inter);
  return p;
}

Cohort generate_cohort(const CohortSpec& spec) {
  spec.validate();
  Cohort cohort;
  cohort.spec = spec;
  for (int i = 0; i < spec.num_patients; ++i) {
    cohort.patients.push_back(generate_patient(spec, i));
  }
  return cohort;
}

void save_recording(const Recording& rec, const fs::path& stem,
                    const std::vector<int>& labels, int stim_site) {
  const std::uint64_t shape[2] = {static_cast<std::uint64_t>(rec.channels()),
                                  static_cast<std::uint64_t>(rec.length())};
  io::write_tensor(fs::path(stem).concat(".f32"), shape,
                   std::span<const float>(rec.samples.data(), static_cast<std::size_t>(rec.samples.size())));
  io::write_json(fs::path(stem).concat(".json"), recording_sidecar(rec, labels, stim_site));
}

Recording load_recording(const fs::path& stem) {
  const auto side_path = fs::path(stem).concat(".json");
  const json side = io::read_json(side_path);
  check_magic(side, kRecordingMagic, side_path.string());
  const auto tensor = io::read_tensor_f32(fs::path(stem).concat(".f32"));
  try {
    const auto shape = side.at("shape").get<std::vector<std::uint64_t>>();
    if (shape != tensor.shape || shape.size() != 2) {
      throw ParseError("sidecar shape disagrees with tensor in " + stem.string(), 0);
    }
    Recording rec;
    rec.rate_hz = side.at("rate_hz").get<double>();
    const auto state = side.at("state").get<std::string>();
    if (!state.empty()) rec.state = dsp::state_from_string(state);
    rec.samples.resize(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    std::copy(tensor.data.begin(), tensor.data.end(), rec.samples.data());
    return rec;
  } catch (const json::exception& e) {
    throw ParseError("malformed sidecar " + side_path.string() + ": " + e.what(), 0);
  }
}

void save_patient(const SyntheticPatient& p, const fs::path& dir) {
  const fs::path pdir = dir / p.id;
  fs::create_directories(pdir);
  for (const auto& [state, rec] : p.recordings) {
    save_recording(rec, pdir / std::string(dsp::to_string(state)), p.soz_labels);
  }
  save_recording(p.baseline_interictal, pdir / "interictal", p.soz_labels);
  for (std::size_t q = 0; q < p.ccep.size(); ++q) {
    char name[32];
    std::snprintf(name, sizeof(name), "ccep_%02zu", q);
    save_recording(p.ccep[q], pdir / name, p.soz_labels, p.ccep_stim_sites[q]);
  }
}

void write_cohort_index(const CohortSpec& spec,
                        const std::vector<SyntheticPatient>& headers,
                        const fs::path& dir) {
  json j;
  j["magic"] = kCohortMagic;
  j["version"] = kCohortVersion;
  j["spec"] = to_json(spec);
  j["patients"] = json::array();
  for (const auto& p : headers) j["patients"].push_back(patient_header(p));
  io::write_json(dir / "cohort.json", j);
}

void save_cohort(const Cohort& cohort, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& p : cohort.patients) save_patient(p, dir);
  write_cohort_index(cohort.spec, cohort.patients, dir);
}

CohortIndex load_cohort_index(const fs::path& dir) {
  const fs::path path = dir / "cohort.json";
  if (!fs::exists(path)) {
    throw DependencyError("no cohort at " + dir.string() + "; run `synth` first");
  }
  const json j = io::read_json(path);
  check_magic(j, kCohortMagic, path.string());
  CohortIndex idx;
  try {
    idx.spec = cohort_spec_from_json(j.at("spec"));
    for (const auto& h : j.at("patients")) {
      SyntheticPatient p;
      p.id = h.at("id").get<std::string>();
      p.sites = h.at("sites").get<int>();
      p.soz_labels = h.at("soz_labels").get<std::vector<int>>();
      p.community = h.at("community").get<std::vector<int>>();
      p.ccep_stim_sites = h.at("ccep_stim_sites").get<std::vector<int>>();
      idx.headers.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ParseError("malformed " + path.string() + ": " + e.what(), 0);
  }
  return idx;
}

SyntheticPatient load_patient(const fs::path& dir, int index) {
  const auto idx = load_cohort_index(dir);
  if (index < 0 || index >= static_cast<int>(idx.headers.size())) {
    throw DomainError("patient index out of range");
  }
  SyntheticPatient p = idx.headers[static_cast<std::size_t>(index)];
  const fs::path pdir = dir / p.id;
  for (State s : dsp::kBehavioralStates) {
    p.recordings.emplace(s, load_recording(pdir / std::string(dsp::to_string(s))));
  }
  p.baseline_interictal = load_recording(pdir / "interictal");
  for (std::size_t q = 0; q < p.ccep_stim_sites.size(); ++q) {
    char name[32];
    std::snprintf(name, sizeof(name), "ccep_%02zu", q);
    p.ccep.push_back(load_recording(pdir / name));
  }
  return p;
}

Cohort load_cohort(const fs::path& dir) {
  const auto idx = load_cohort_index(dir);
  Cohort cohort;
  cohort.spec = idx.spec;
  for (std::size_t i = 0; i < idx.headers.size(); ++i) {
    cohort.patients.push_back(load_patient(dir, static_cast<int>(i)));
  }
  return cohort;
}

bool operator==(const SyntheticPatient& a, const SyntheticPatient& b) {
  return a.id == b.id && a.sites == b.sites && a.recordings == b.recordings &&
         a.ccep == b.ccep && a.ccep_stim_sites == b.ccep_stim_sites &&
         a.baseline_interictal == b.baseline_interictal &&
         a.soz_labels == b.soz_labels && a.community == b.community;
}

}  // namespace soz::synth
