#pragma once

// Shared attention autoencoder: a five-layer tanh encoder and mirrored
// decoder, each with two pooling-gated attention blocks.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "soz/features.hpp"
#include "soz/nncore.hpp"

namespace soz::satae {

using nn::Mat;

enum class Placement { E, D, ED, none };

std::string_view to_string(Placement p);
Placement placement_from_string(std::string_view s);

struct SataeConfig {
  int input_dim = 128;
  int latent_dim = 32;
  // Input widths of the five encoder layers; encoder_dims[0] = input_dim and
  // the last layer maps encoder_dims[4] to latent_dim.
  std::array<int, 5> encoder_dims = {128, 96, 64, 48, 32};
  Placement placement = Placement::E;
  int batch_size = 16;
  int epochs = 30;
  double lr = 0.002;
  std::uint64_t seed = 0;

  // Output widths of the five decoder layers: mirror of the encoder.
  std::array<int, 5> decoder_dims() const;
  void validate() const;
};

nlohmann::json to_json(const SataeConfig& c);
SataeConfig satae_config_from_json(const nlohmann::json& j);

// Five dense tanh layers; with gating, blocks (1,2) and (3,4) are each
// multiplied by tanh(resample(block input) Wp + bp).
class GatedStack {
 public:
  enum class Resample { pool, unpool };

  GatedStack() = default;
  GatedStack(std::string prefix, std::array<int, 6> widths, bool gated, Resample resample);

  struct Cache {
    std::array<Mat, 6> h;      // h[0] input, h[s] layer s output
    std::array<Mat, 2> gate;
    std::array<Mat, 2> r;      // resampled block inputs
    std::array<Mat, 2> block;  // gated block outputs
  };

  Mat forward(const Mat& x, Cache* cache) const;
  // Accumulates parameter gradients; returns dL/dx.
  Mat backward(const Cache& cache, const Mat& dy);

  std::vector<nn::Param>& params() { return params_; }
  const std::vector<nn::Param>& params() const { return params_; }
  bool gated() const { return gated_; }

 private:
  const Mat& w(int s) const { return params_[static_cast<std::size_t>(2 * s)].value; }
  const Mat& b(int s) const { return params_[static_cast<std::size_t>(2 * s + 1)].value; }
  nn::Param& pw(int s) { return params_[static_cast<std::size_t>(2 * s)]; }
  nn::Param& pb(int s) { return params_[static_cast<std::size_t>(2 * s + 1)]; }
  Mat resample(const Mat& x) const;
  Mat resample_bwd(const Mat& dy) const;

  std::array<int, 6> widths_{};
  bool gated_ = false;
  Resample resample_ = Resample::pool;
  // Layers 0..4 then gates 5, 6; each contributes (W, b).
  std::vector<nn::Param> params_;
};

class SataeModel {
 public:
  explicit SataeModel(const SataeConfig& cfg);

  void init(std::uint64_t seed);
  Mat encode(const Mat& x) const;
  Mat decode(const Mat& l) const;
  // MSE reconstruction loss; fills parameter gradients when requested.
  double loss(const Mat& x, bool with_grad);

  // Flat view over encoder then decoder parameters, for optimizers and
  // checkpoints. Changes to the returned vector are written back by sync().
  std::vector<nn::Param>& flat();
  void sync();
  void zero_grad();

  const SataeConfig& config() const { return cfg_; }
  GatedStack& encoder() { return enc_; }
  GatedStack& decoder() { return dec_; }

 private:
  SataeConfig cfg_;
  GatedStack enc_;
  GatedStack dec_;
  std::vector<nn::Param> flat_;
};

struct TrainResult {
  std::vector<double> epoch_mse;
};

// Rows of `data` are training samples.
TrainResult train_shared(SataeModel& model, const Mat& data);

// All 18 feature vectors of every site of every patient as rows.
Mat pooled_dataset(const std::vector<features::SiteTensor>& feats);

// sites x 3 x 6 x latent_dim store entry.
features::SiteTensor encode_patient(const SataeModel& model, const features::SiteTensor& f);

void save_model(SataeModel& model, const std::filesystem::path& path,
                const TrainResult* history = nullptr);
SataeModel load_model(const std::filesystem::path& path);

}  // namespace soz::satae
