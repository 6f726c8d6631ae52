#pragma once

// Reproducible synthetic sEEG cohorts: behavioral-state recordings, CCEP
// segments, an interictal baseline recording and ground-truth SOZ labels.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "soz/dsp.hpp"

namespace soz::synth {

struct CohortSpec {
  int num_patients = 5;
  int sites_min = 64;  // contact sites per patient, drawn uniformly
  int sites_max = 64;  // from [sites_min, sites_max]
  double soz_fraction = 0.25;
  std::uint64_t seed = 0;
  double duration_state_s = 60.0;
  int ccep_segments = 8;
  double ccep_duration_s = 6.0;
  double raw_rate_hz = 10000.0;
  double coupling_strength = 0.8;

  double interictal_duration_s = 60.0;
  int communities = 4;
  double stim_rate_hz = 50.0;        // pulse rate of the stimulation train
  double evoked_amplitude = 12.0;    // template peak relative to sensor noise
  double ictal_severity = 1.0;       // scales SOZ burst and spike amplitudes
  double distractor_fraction = 0.1;  // non-SOZ sites with weak bursts

  // Throws ConfigError naming the first violated invariant.
  void validate() const;
  int soz_count(int sites) const;
};

nlohmann::json to_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const nlohmann::json& j);

struct SyntheticPatient {
  std::string id;
  int sites = 0;
  std::map<dsp::State, dsp::Recording> recordings;  // wake, sleep, seizure
  std::vector<dsp::Recording> ccep;
  std::vector<int> ccep_stim_sites;
  dsp::Recording baseline_interictal;
  std::vector<int> soz_labels;
  std::vector<int> community;
};

struct Cohort {
  CohortSpec spec;
  std::vector<SyntheticPatient> patients;
};

// Labels, communities and stimulation sites without generating signals.
struct PatientLayout {
  int sites = 0;
  std::vector<int> soz_labels;
  std::vector<int> community;
  std::vector<int> distractors;
  std::vector<int> ccep_stim_sites;
};

PatientLayout patient_layout(const CohortSpec& spec, int index);
// Without behavioral states only CCEP and interictal recordings are made.
SyntheticPatient generate_patient(const CohortSpec& spec, int index,
                                  bool behavioral_states = true);
Cohort generate_cohort(const CohortSpec& spec);

// Evoked response to the stimulation train (unit amplitude), sampled at
// rate_hz: damped 20 Hz sinusoid, 50 ms decay, 10 ms after each pulse.
std::vector<double> evoked_train(double rate_hz, std::size_t length,
                                 double stim_rate_hz);

std::string patient_id(int index);

inline constexpr const char* kCohortMagic = "SOZ-COHORT";
inline constexpr const char* kRecordingMagic = "SOZ-RECORDING";
inline constexpr int kCohortVersion = 1;

// Directory layout: cohort.json plus one sub-directory per patient holding
// <name>.f32 tensors (channels x samples) with <name>.json sidecars.
void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& dir);

// Streaming variants for cohorts too large to hold in memory.
void save_patient(const SyntheticPatient& p, const std::filesystem::path& dir);
void write_cohort_index(const CohortSpec& spec,
                        const std::vector<SyntheticPatient>& headers,
                        const std::filesystem::path& dir);
SyntheticPatient load_patient(const std::filesystem::path& dir, int index);
// cohort.json contents: spec and per-patient metadata (no signals).
struct CohortIndex {
  CohortSpec spec;
  std::vector<SyntheticPatient> headers;
};
CohortIndex load_cohort_index(const std::filesystem::path& dir);

void save_recording(const dsp::Recording& rec, const std::filesystem::path& stem,
                    const std::vector<int>& labels, int stim_site = -1);
dsp::Recording load_recording(const std::filesystem::path& stem);

bool operator==(const SyntheticPatient& a, const SyntheticPatient& b);

}  // namespace soz::synth
