#include "soz/satae.hpp"

#include <numeric>

#include "soz/error.hpp"

namespace soz::satae {

using nlohmann::json;

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::E: return "E";
    case Placement::D: return "D";
    case Placement::ED: return "ED";
    case Placement::none: return "none";
  }
  return "?";
}

Placement placement_from_string(std::string_view s) {
  if (s == "E") return Placement::E;
  if (s == "D") return Placement::D;
  if (s == "ED") return Placement::ED;
  if (s == "none") return Placement::none;
  throw ConfigError("unknown attention placement '" + std::string(s) + "'");
}

std::array<int, 5> SataeConfig::decoder_dims() const {
  return {encoder_dims[4], encoder_dims[3], encoder_dims[2], encoder_dims[1], input_dim};
}

void SataeConfig::validate() const {
  if (encoder_dims[0] != input_dim) throw ConfigError("encoder_dims[0] must equal input_dim");
  for (int d : encoder_dims) {
    if (d < 1) throw ConfigError("encoder widths must be positive");
  }
  if (latent_dim < 1) throw ConfigError("latent_dim must be positive");
  const bool enc_gated = placement == Placement::E || placement == Placement::ED;
  if (enc_gated && (input_dim % 2 != 0 || encoder_dims[2] % 2 != 0)) {
    throw ConfigError("encoder attention pools input_dim and encoder_dims[2]; both must be even");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
}

json to_json(const SataeConfig& c) {
  return json{{"input_dim", c.input_dim},   {"latent_dim", c.latent_dim},
              {"encoder_dims", c.encoder_dims}, {"attention_placement", to_string(c.placement)},
              {"batch_size", c.batch_size}, {"epochs", c.epochs},
              {"lr", c.lr},                 {"seed", c.seed}};
}

SataeConfig satae_config_from_json(const json& j) {
  SataeConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "input_dim") c.input_dim = v.get<int>();
      else if (k == "latent_dim") c.latent_dim = v.get<int>();
      else if (k == "encoder_dims") c.encoder_dims = v.get<std::array<int, 5>>();
      else if (k == "attention_placement") c.placement = placement_from_string(v.get<std::string>());
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown sae key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sae config: ") + e.what());
  }
  c.validate();
  return c;
}

GatedStack::GatedStack(std::string prefix, std::array<int, 6> widths, bool gated,
                       Resample resample)
    : widths_(widths), gated_(gated), resample_(resample) {
  for (int s = 0; s < 5; ++s) {
    const auto tag = std::to_string(s + 1);
    params_.emplace_back(prefix + ".W" + tag, "dense", widths[s], widths[s + 1]);
    params_.emplace_back(prefix + ".b" + tag, "bias", 1, widths[s + 1]);
  }
  if (gated_) {
    for (int g = 0; g < 2; ++g) {
      const int in = widths[2 * g];
      const int r = resample_ == Resample::pool ? in / 2 : in * 2;
      const auto tag = std::to_string(g + 1);
      params_.emplace_back(prefix + ".Wp" + tag, "gate", r, widths[2 * g + 2]);
      params_.emplace_back(prefix + ".bp" + tag, "gate_bias", 1, widths[2 * g + 2]);
    }
  }
}

Mat GatedStack::resample(const Mat& x) const {
  return resample_ == Resample::pool ? nn::avgpool(x) : nn::unpool(x);
}

Mat GatedStack::resample_bwd(const Mat& dy) const {
  return resample_ == Resample::pool ? nn::avgpool_bwd(dy) : nn::unpool_bwd(dy);
}

Mat GatedStack::forward(const Mat& x, Cache* cache) const {
  if (x.cols() != widths_[0]) {
    throw DomainError("expected width " + std::to_string(widths_[0]) + ", got " +
                      std::to_string(x.cols()));
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.h[0] = x;
  Mat in = x;
  for (int blk = 0; blk < 2; ++blk) {
    const int s1 = 2 * blk;
    c.h[s1 + 1] = nn::tanh_fwd(nn::dense_forward(in, w(s1), b(s1)));
    c.h[s1 + 2] = nn::tanh_fwd(nn::dense_forward(c.h[s1 + 1], w(s1 + 1), b(s1 + 1)));
    if (gated_) {
      c.r[blk] = resample(in);
      c.gate[blk] = nn::tanh_fwd(nn::dense_forward(c.r[blk], w(5 + blk), b(5 + blk)));
      c.block[blk] = nn::hadamard(c.gate[blk], c.h[s1 + 2]);
    } else {
      c.block[blk] = c.h[s1 + 2];
    }
    in = c.block[blk];
  }
  c.h[5] = nn::tanh_fwd(nn::dense_forward(in, w(4), b(4)));
  return c.h[5];
}

Mat GatedStack::backward(const Cache& c, const Mat& dy) {
  Mat d = nn::tanh_bwd(c.h[5], dy);
  auto g = nn::dense_backward(c.block[1], w(4), d);
  pw(4).grad += g.dw;
  pb(4).grad += g.db;
  Mat d_block = g.dx;
  for (int blk = 1; blk >= 0; --blk) {
    const int s1 = 2 * blk;
    const Mat& in = blk == 0 ? c.h[0] : c.block[0];
    Mat d_h2 = d_block;
    Mat d_in = Mat::Zero(in.rows(), in.cols());
    if (gated_) {
      auto hg = nn::hadamard_bwd(c.gate[blk], c.h[s1 + 2], d_block);
      d_h2 = hg.db;
      const Mat d_gpre = nn::tanh_bwd(c.gate[blk], hg.da);
      auto gg = nn::dense_backward(c.r[blk], w(5 + blk), d_gpre);
      pw(5 + blk).grad += gg.dw;
      pb(5 + blk).grad += gg.db;
      d_in += resample_bwd(gg.dx);
    }
    auto g2 = nn::dense_backward(c.h[s1 + 1], w(s1 + 1), nn::tanh_bwd(c.h[s1 + 2], d_h2));
    pw(s1 + 1).grad += g2.dw;
    pb(s1 + 1).grad += g2.db;
    auto g1 = nn::dense_backward(in, w(s1), nn::tanh_bwd(c.h[s1 + 1], g2.dx));
    pw(s1).grad += g1.dw;
    pb(s1).grad += g1.db;
    d_in += g1.dx;
    d_block = d_in;
  }
  return d_block;
}

SataeModel::SataeModel(const SataeConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& e = cfg_.encoder_dims;
  const auto d = cfg_.decoder_dims();
  const bool eg = cfg_.placement == Placement::E || cfg_.placement == Placement::ED;
  const bool dg = cfg_.placement == Placement::D || cfg_.placement == Placement::ED;
  enc_ = GatedStack("enc", {e[0], e[1], e[2], e[3], e[4], cfg_.latent_dim}, eg,
                    GatedStack::Resample::pool);
  dec_ = GatedStack("dec", {cfg_.latent_dim, d[0], d[1], d[2], d[3], d[4]}, dg,
                    GatedStack::Resample::unpool);
}

void SataeModel::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto* stack : {&enc_, &dec_}) {
    for (auto& p : stack->params()) {
      if (p.role == "dense" || p.role == "gate") nn::glorot_init(p.value, rng);
      else p.value.setZero();
    }
  }
}

Mat SataeModel::encode(const Mat& x) const { return enc_.forward(x, nullptr); }

Mat SataeModel::decode(const Mat& l) const { return dec_.forward(l, nullptr); }

double SataeModel::loss(const Mat& x, bool with_grad) {
  GatedStack::Cache ce, cd;
  const Mat l = enc_.forward(x, &ce);
  const Mat y = dec_.forward(l, &cd);
  auto ls = nn::mse(y, x);
  if (with_grad) {
    const Mat dl = dec_.backward(cd, ls.grad);
    enc_.backward(ce, dl);
  }
  return ls.value;
}

std::vector<nn::Param>& SataeModel::flat() {
  flat_.clear();
  for (auto* stack : {&enc_, &dec_}) {
    for (auto& p : stack->params()) flat_.push_back(p);
  }
  return flat_;
}

void SataeModel::sync() {
  std::size_t k = 0;
  for (auto* stack : {&enc_, &dec_}) {
    for (auto& p : stack->params()) p.value = flat_[k++].value;
  }
}

void SataeModel::zero_grad() {
  for (auto* stack : {&enc_, &dec_}) {
    for (auto& p : stack->params()) p.zero_grad();
  }
}

TrainResult train_shared(SataeModel& model, const Mat& data) {
  const auto& cfg = model.config();
  if (data.rows() == 0) throw ConfigError("sATAE training set is empty");
  if (data.cols() != cfg.input_dim) {
    throw ConfigError("feature length " + std::to_string(data.cols()) +
                      " differs from input_dim " + std::to_string(cfg.input_dim));
  }
  model.init(derive_seed(cfg.seed, 0));
  Rng shuffle_rng(derive_seed(cfg.seed, 1));

  // One optimizer state per parameter, in encoder-then-decoder order.
  std::vector<nn::Param*> params;
  for (auto* stack : {&model.encoder(), &model.decoder()}) {
    for (auto& p : stack->params()) params.push_back(&p);
  }
  std::vector<nn::AdamState> adam(params.size());
  for (auto& s : adam) s.lr = cfg.lr;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), 0);
  TrainResult out;
  Mat batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      batch.resize(static_cast<Eigen::Index>(n), data.cols());
      for (std::size_t r = 0; r < n; ++r) {
        batch.row(static_cast<Eigen::Index>(r)) = data.row(order[start + r]);
      }
      model.zero_grad();
      const double l = model.loss(batch, true);
      if (!std::isfinite(l)) throw NumericalError("sATAE loss became non-finite");
      total += l * static_cast<double>(n);
      for (std::size_t k = 0; k < params.size(); ++k) {
        nn::adam_step(params[k]->value, params[k]->grad, adam[k]);
      }
    }
    out.epoch_mse.push_back(total / static_cast<double>(order.size()));
  }
  return out;
}

Mat pooled_dataset(const std::vector<features::SiteTensor>& feats) {
  Eigen::Index rows = 0;
  int dim = -1;
  for (const auto& f : feats) {
    if (dim >= 0 && f.dim != dim) throw ConfigError("feature length differs between patients");
    dim = f.dim;
    rows += static_cast<Eigen::Index>(f.sites) * features::kVectorsPerSite;
  }
  Mat out(rows, std::max(dim, 0));
  Eigen::Index r = 0;
  for (const auto& f : feats) {
    const Eigen::Index n = static_cast<Eigen::Index>(f.sites) * features::kVectorsPerSite;
    out.middleRows(r, n) =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            f.values.data(), n, f.dim);
    r += n;
  }
  return out;
}

features::SiteTensor encode_patient(const SataeModel& model, const features::SiteTensor& f) {
  const auto& cfg = model.config();
  if (f.dim != cfg.input_dim) {
    throw ConfigError(f.id + ": feature length " + std::to_string(f.dim) +
                      " differs from model input_dim " + std::to_string(cfg.input_dim));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(f.sites) * features::kVectorsPerSite;
  const Mat x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      f.values.data(), n, f.dim);
  const Mat l = model.encode(x);
  features::SiteTensor out(f.id, f.sites, cfg.latent_dim);
  out.labels = f.labels;
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out.values.data(), n, cfg.latent_dim) = l;
  out.meta["attention_placement"] = to_string(cfg.placement);
  return out;
}

void save_model(SataeModel& model, const std::filesystem::path& path, const TrainResult* history) {
  json meta{{"model", "satae"}, {"config", to_json(model.config())}};
  if (history) meta["epoch_mse"] = history->epoch_mse;
  nn::save_checkpoint(path, model.flat(), meta);
}

SataeModel load_model(const std::filesystem::path& path) {
  const json meta = nn::read_checkpoint_meta(path);
  if (meta.value("model", "") != "satae") {
    throw ParseError(path.string() + " is not an sATAE checkpoint", 0);
  }
  SataeModel model(satae_config_from_json(meta.at("config")));
  nn::load_checkpoint(path, model.flat());
  model.sync();
  return model;
}

}  // namespace soz::satae
