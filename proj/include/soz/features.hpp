#pragma once

// Per-patient band-power features and the on-disk site x state x band store
// shared by features and latents.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "soz/dsp.hpp"
#include "soz/synthcohort.hpp"

namespace soz::features {

struct PreprocessConfig {
  double notch_hz = 50.0;
  double notch_q = dsp::kNotchQ;
  double lowpass_hz = 800.0;
  double feature_rate_hz = 1000.0;
  double ccep_rate_hz = 5000.0;
  int feat_len = 128;
  int n_cycles = 6;
  int n_freqs = 8;
  bool zscore = true;
  int workers = 1;
};

nlohmann::json to_json(const PreprocessConfig& cfg);
PreprocessConfig preprocess_config_from_json(const nlohmann::json& j);

inline constexpr int kNumStates = 3;
inline constexpr int kNumBands = 6;
inline constexpr int kVectorsPerSite = kNumStates * kNumBands;

// Values laid out site-major: [site][state][band][dim].
struct SiteTensor {
  std::string id;
  int sites = 0;
  int dim = 0;
  std::vector<int> labels;
  std::vector<double> values;
  nlohmann::json meta = nlohmann::json::object();

  SiteTensor() = default;
  SiteTensor(std::string id, int sites, int dim);

  std::size_t offset(int site, int state, int band) const {
    return ((static_cast<std::size_t>(site) * kNumStates + state) * kNumBands + band) *
           static_cast<std::size_t>(dim);
  }
  double* vec(int site, int state, int band) { return values.data() + offset(site, state, band); }
  const double* vec(int site, int state, int band) const {
    return values.data() + offset(site, state, band);
  }
};

// notch -> lowpass -> downsample -> band-pass -> Morlet power for one
// behavioral-state recording; returns sites x 6 x feat_len features.
std::vector<std::vector<double>> state_features(const dsp::Recording& raw,
                                                const PreprocessConfig& cfg);

SiteTensor featurize_patient(const synth::SyntheticPatient& p,
                             const PreprocessConfig& cfg);

// Per (band, state): subtract mean and divide by standard deviation taken
// over all sites and time bins.
void zscore_features(SiteTensor& f);

// notch -> lowpass -> downsample to the CCEP analysis rate.
dsp::Recording preprocess_ccep(const dsp::Recording& raw,
                               const PreprocessConfig& cfg);
dsp::Recording preprocess_baseline(const dsp::Recording& raw_interictal,
                                   const PreprocessConfig& cfg);

// Store layout: <dir>/<id>.f32 (sites x 3 x 6 x dim) and <dir>/<id>.json.
void save_site_tensor(const SiteTensor& t, const std::filesystem::path& dir,
                      const std::string& kind);
SiteTensor load_site_tensor(const std::filesystem::path& dir,
                            const std::string& id, const std::string& kind);
// Patient ids present in a store directory, sorted.
std::vector<std::string> list_store(const std::filesystem::path& dir,
                                    const std::string& kind);

}  // namespace soz::features
