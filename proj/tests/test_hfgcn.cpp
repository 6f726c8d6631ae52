#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <numeric>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "soz/error.hpp"
#include "soz/hfgcn.hpp"

using namespace soz;
using namespace soz::hfgcn;
using testutil::random_matrix;

namespace {

constexpr std::array<FusionMode, 5> kModes = {FusionMode::full, FusionMode::fusion_s1, FusionMode::fusion_s2,
                                              FusionMode::static_only, FusionMode::dynamic_only};

std::vector<const Mat*> ptrs(const std::vector<Mat>& w) {
  std::vector<const Mat*> p;
  for (const auto& m : w) p.push_back(&m);
  return p;
}

}  // namespace

TEST_CASE("scaled laplacian hand cases") {
  const auto iso = scaled_laplacian(Mat::Zero(4, 4));
  CHECK(iso.lambda_max == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((iso.l_tilde - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-5);

  Mat a(2, 2);
  a << 0, 1, 1, 0;
  const auto two = scaled_laplacian(a);
  CHECK(two.lambda_max == doctest::Approx(2.0).epsilon(1e-6));
  Mat expect(2, 2);
  expect << 0, -1, -1, 0;
  CHECK((two.l_tilde - expect).cwiseAbs().maxCoeff() < 1e-6);

  Mat asym = Mat::Zero(3, 3);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(scaled_laplacian(asym), DomainError);
}

TEST_CASE("power iteration agrees with a dense eigensolver") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = testutil::random_adjacency(rng, 16, 0.3, trial % 2 == 0);
    const auto lap = scaled_laplacian(a);
    Eigen::VectorXd d(16);
    for (int i = 0; i < 16; ++i) d(i) = a.row(i).cwiseAbs().sum() + 1e-8;
    const Mat l = Mat::Identity(16, 16) - d.cwiseInverse().cwiseSqrt().asDiagonal() * a *
                                              d.cwiseInverse().cwiseSqrt().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(l);
    CHECK(lap.lambda_max == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-4));
    CHECK((lap.l_tilde - oracle::scaled_laplacian(a)).cwiseAbs().maxCoeff() < 1e-4);
    if (trial % 2 == 1) {
      Eigen::SelfAdjointEigenSolver<Mat> st(lap.l_tilde);
      CHECK(st.eigenvalues().maxCoeff() <= 1.0 + 1e-6);
      CHECK(st.eigenvalues().minCoeff() >= -1.0 - 1e-6);
    }
  }
}

TEST_CASE("clamping negative edges") {
  Mat a(3, 3);
  a << 0, -0.5, 0.4, -0.5, 0, 0.2, 0.4, 0.2, 0;
  Mat clamped = a.cwiseMax(0.0);
  CHECK((scaled_laplacian(a, true).l_tilde - scaled_laplacian(clamped).l_tilde).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("chebyshev recurrence equals the explicit polynomial") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int c = 4 + static_cast<int>(rng.below(9));
    const int f = 1 + trial % 5;
    const Mat lt = scaled_laplacian(testutil::random_adjacency(rng, c, 0.5, true)).l_tilde;
    const Mat h = random_matrix(rng, c, 3);
    std::vector<Mat> w;
    for (int q = 0; q < f; ++q) w.push_back(random_matrix(rng, 3, 2, 0.3));
    Mat pre = Mat::Zero(c, 2);
    for (int q = 0; q < f; ++q) pre += oracle::cheb_poly(lt, q) * h * w[static_cast<std::size_t>(q)];
    ChebCache cache;
    const Mat out = cheb_conv_forward(h, lt, ptrs(w), &cache);
    CHECK((out - pre.array().tanh().matrix()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("order-one chebyshev ignores the graph") {
  Rng rng(3);
  const Mat h = random_matrix(rng, 5, 3);
  const std::vector<Mat> w = {random_matrix(rng, 3, 4)};
  const Mat lt = scaled_laplacian(testutil::random_adjacency(rng, 5, 0.6, false)).l_tilde;
  CHECK((cheb_conv_forward(h, lt, ptrs(w), nullptr) - (h * w[0]).array().tanh().matrix()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK_THROWS_AS(cheb_conv_forward(h, lt, {}, nullptr), ConfigError);
}

TEST_CASE("knn hand cases") {
  Mat line(4, 1);
  line << 0, 1, 2, 3;
  const auto n1 = knn_pairs(line, 1);
  CHECK(n1[0] == 1);
  CHECK(n1[3] == 2);
  CHECK(n1[1] == 0);  // tie between 0 and 2: lower index
  Mat square(4, 2);
  square << 0, 0, 1, 0, 0, 1, 1, 1;
  const auto sq = knn_pairs(square, 1);
  CHECK(sq[0] == 1);
  CHECK(sq[3] == 1);
  CHECK_THROWS_AS(knn_pairs(square, 4), ConfigError);
  CHECK_THROWS_AS(knn_pairs(square, 0), ConfigError);
}

TEST_CASE("knn matches exhaustive sort") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Mat h = random_matrix(rng, 32, 8);
    if (trial % 5 == 0) h.row(7) = h.row(3);  // duplicate points
    const int k = 1 + static_cast<int>(rng.below(10));
    const auto got = knn_pairs(h, k);
    const auto want = oracle::knn(h, k);
    for (int i = 0; i < 32; ++i) {
      for (int q = 0; q < k; ++q) CHECK(got[static_cast<std::size_t>(i * k + q)] == want[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)]);
    }
  }
}

TEST_CASE("edge conv cases") {
  Rng rng(5);
  const Mat w1 = random_matrix(rng, 6, 4);
  const Mat w2 = random_matrix(rng, 4, 5);
  const Mat h = random_matrix(rng, 7, 3);
  // K=1 is the single nearest edge.
  const auto nb = knn_pairs(h, 1);
  const Mat out = edge_conv_forward(h, 1, w1, w2, nullptr);
  for (int i = 0; i < 7; ++i) {
    Mat cat(1, 6);
    cat << h.row(i), h.row(nb[static_cast<std::size_t>(i)]);
    const Mat e = nn::relu_fwd(nn::relu_fwd(cat * w1) * w2);
    CHECK((out.row(i) - e).cwiseAbs().maxCoeff() < 1e-14);
  }
  // Brute-force max over neighbours.
  const auto nb3 = knn_pairs(h, 3);
  const Mat out3 = edge_conv_forward(h, 3, w1, w2, nullptr);
  for (int i = 0; i < 7; ++i) {
    Mat best = Mat::Constant(1, 5, -1e300);
    for (int q = 0; q < 3; ++q) {
      Mat cat(1, 6);
      cat << h.row(i), h.row(nb3[static_cast<std::size_t>(i * 3 + q)]);
      best = best.cwiseMax(nn::relu_fwd(nn::relu_fwd(cat * w1) * w2));
    }
    CHECK((out3.row(i) - best).cwiseAbs().maxCoeff() < 1e-14);
  }
  // Identical nodes give identical rows.
  const Mat same = Mat::Ones(5, 3) * 0.3;
  const Mat o = edge_conv_forward(same, 2, w1, w2, nullptr);
  for (int i = 1; i < 5; ++i) CHECK(o.row(i) == o.row(0));
}

TEST_CASE("layer gradient checks") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(gc::cheb(seed) < 1e-4);
    CHECK(gc::edge(seed) < 1e-4);
  }
}

TEST_CASE("full model gradient check in every mode") {
  for (FusionMode m : kModes) {
    for (std::uint64_t seed = 0; seed < 2; ++seed) CHECK(gc::hfgcn_model(seed, m) < 1e-4);
  }
  CHECK(gc::hfgcn_model(5, FusionMode::full, Weighting::raw_layer) < 1e-4);
}

TEST_CASE("logits are permutation equivariant in every mode") {
  Rng rng(6);
  for (FusionMode m : kModes) {
    HfgcnConfig cfg;
    cfg.hidden = 8;
    cfg.knn = 3;
    cfg.fusion_mode = m;
    HfgcnModel model(cfg, 6);
    model.init(7);
    const Mat x = random_matrix(rng, 12, 6);
    const Mat a = testutil::random_adjacency(rng, 12, 0.4, true);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Mat p = testutil::permutation(perm);
    const Mat base = model.logits(x, scaled_laplacian(a).l_tilde);
    const Mat moved = model.logits(p * x, scaled_laplacian(p * a * p.transpose()).l_tilde);
    CHECK((moved - p * base).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("node weights are positively homogeneous") {
  Rng rng(8);
  const Mat s = random_matrix(rng, 6, 4);
  const auto w = node_weights(s);
  Mat scaled = s;
  scaled.row(2) *= 3.5;
  const auto w2 = node_weights(scaled);
  for (int i = 0; i < 6; ++i) {
    if (i == 2) CHECK(w2(i) == doctest::Approx(3.5 * w(i)).epsilon(1e-14));
    else CHECK(w2(i) == w(i));
  }
}

TEST_CASE("zero parameters give the classifier bias") {
  HfgcnConfig cfg;
  cfg.hidden = 4;
  cfg.knn = 2;
  HfgcnModel model(cfg, 3);
  for (auto& p : model.params()) p.value.setZero();
  model.params().back().value << 0.25, -1.5;
  Rng rng(9);
  const Mat lg = model.logits(random_matrix(rng, 5, 3), scaled_laplacian(testutil::random_adjacency(rng, 5, 0.5, false)).l_tilde);
  for (int i = 0; i < 5; ++i) {
    CHECK(lg(i, 0) == 0.25);
    CHECK(lg(i, 1) == -1.5);
  }
}

TEST_CASE("weighting streams follow their definitions") {
  Rng rng(10);
  HfgcnConfig cfg;
  cfg.hidden = 5;
  cfg.knn = 2;
  const Mat x = random_matrix(rng, 8, 4);
  const Mat lt = scaled_laplacian(testutil::random_adjacency(rng, 8, 0.5, true)).l_tilde;
  for (FusionMode m : kModes) {
    cfg.fusion_mode = m;
    HfgcnModel model(cfg, 4);
    model.init(3);
    HfgcnModel::Forward f;
    model.logits(x, lt, &f);
    Mat expect;
    switch (m) {
      case FusionMode::full: {
        const Mat z1 = f.s[1].rowwise().norm().asDiagonal() * f.s[2];
        expect = z1.rowwise().norm().asDiagonal() * f.s[3];
        CHECK((f.s[1] - (f.h_static[1] + f.edge[0]->out)).cwiseAbs().maxCoeff() == 0.0);
        break;
      }
      case FusionMode::fusion_s1:
        expect = (f.h_static[1].rowwise().norm().cwiseProduct(f.h_static[2].rowwise().norm())).asDiagonal() *
                 f.h_static[3];
        break;
      case FusionMode::fusion_s2:
        expect = (f.s[1].rowwise().norm().cwiseProduct(f.s[2].rowwise().norm())).asDiagonal() * f.s[3];
        CHECK(f.edge[0].has_value());
        break;
      case FusionMode::static_only: expect = f.h_static[3]; break;
      case FusionMode::dynamic_only:
        expect = f.edge[2]->out;
        CHECK_FALSE(f.edge[0].has_value());
        break;
    }
    CHECK((f.h_out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  cfg.fusion_mode = FusionMode::full;
  cfg.weighting = Weighting::raw_layer;
  HfgcnModel model(cfg, 4);
  model.init(3);
  HfgcnModel::Forward f;
  model.logits(x, lt, &f);
  CHECK((f.h_out - f.s[2].rowwise().norm().asDiagonal() * f.s[3]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("config validation and json") {
  HfgcnConfig cfg;
  CHECK_THROWS_AS(cfg.validate(10), ConfigError);
  CHECK_NOTHROW(cfg.validate(11));
  cfg.layers = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.fusion_mode = FusionMode::static_only;
  CHECK_NOTHROW(cfg.validate());
  cfg = HfgcnConfig{};
  cfg.auto_class_weights = true;
  cfg.fusion_mode = FusionMode::fusion_s2;
  CHECK(to_json(hfgcn_config_from_json(to_json(cfg))) == to_json(cfg));
  auto j = to_json(cfg);
  j["dropout"] = 0.1;
  CHECK_THROWS_AS(hfgcn_config_from_json(j), ConfigError);
  CHECK(weighting_from_string("raw-layer") == Weighting::raw_layer);
}

namespace {

PatientGraph planted(Rng& rng, int c) {
  PatientGraph g;
  g.x.resize(c, 4);
  g.labels.resize(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) {
    const int y = i % 4 == 0 ? 1 : 0;
    g.labels[static_cast<std::size_t>(i)] = y;
    for (int d = 0; d < 4; ++d) g.x(i, d) = (y ? 1.0 : -1.0) + 0.1 * rng.normal();
  }
  g.a = testutil::random_adjacency(rng, c, 0.2, false);
  for (int i = 0; i < c; ++i) (i % 3 == 0 ? g.val : g.train).push_back(i);
  return g;
}

}  // namespace

TEST_CASE("separable planted graph is learned and training is deterministic") {
  Rng rng(11);
  const auto g = planted(rng, 40);
  // Separability oracle: a threshold on the feature mean classifies every node.
  for (int i = 0; i < 40; ++i) CHECK((g.x.row(i).mean() > 0) == (g.labels[static_cast<std::size_t>(i)] == 1));
  HfgcnConfig cfg;
  cfg.hidden = 8;
  cfg.knn = 4;
  cfg.epochs = 150;
  HfgcnModel model(cfg, 4);
  const auto out = train_hfgcn(model, g, 5);
  CHECK(out.history.size() == 151);
  for (const auto& r : out.history) CHECK(std::isfinite(r.train_loss));
  const Mat probs = predict(model, g);
  int correct = 0;
  for (int r : g.train) correct += (probs(r, 1) > probs(r, 0)) == (g.labels[static_cast<std::size_t>(r)] == 1);
  CHECK(correct == static_cast<int>(g.train.size()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) <= 1e-12);

  HfgcnModel again(cfg, 4);
  const auto out2 = train_hfgcn(again, g, 5);
  CHECK(out2.best_epoch == out.best_epoch);
  for (std::size_t k = 0; k < out.best.size(); ++k) CHECK(out.best[k].value == out2.best[k].value);
  for (std::size_t k = 0; k < model.params().size(); ++k) CHECK(model.params()[k].value == again.params()[k].value);

  // First maximum wins: the best epoch carries the largest val F1 and no
  // earlier epoch reaches it.
  double best = -1;
  for (const auto& r : out.history) best = std::max(best, r.val_f1);
  CHECK(out.history[static_cast<std::size_t>(out.best_epoch)].val_f1 == best);
  for (int e = 0; e < out.best_epoch; ++e) CHECK(out.history[static_cast<std::size_t>(e)].val_f1 < best);
}

TEST_CASE("empty train mask is a config error") {
  Rng rng(12);
  auto g = planted(rng, 20);
  g.train.clear();
  HfgcnConfig cfg;
  cfg.knn = 3;
  HfgcnModel model(cfg, 4);
  CHECK_THROWS_AS(train_hfgcn(model, g, 1), ConfigError);
}

TEST_CASE("predict matches softmax of logits") {
  Rng rng(13);
  const auto g = planted(rng, 15);
  HfgcnConfig cfg;
  cfg.knn = 3;
  cfg.hidden = 6;
  HfgcnModel model(cfg, 4);
  model.init(2);
  const Mat p = predict(model, g);
  const Mat lg = model.logits(g.x, scaled_laplacian(g.a).l_tilde);
  for (Eigen::Index i = 0; i < lg.rows(); ++i) {
    const double m = lg.row(i).maxCoeff();
    const double e0 = std::exp(lg(i, 0) - m), e1 = std::exp(lg(i, 1) - m);
    CHECK(std::abs(p(i, 1) - e1 / (e0 + e1)) < 1e-14);
  }
  for (auto& prm : model.params()) prm.value.setZero();
  const Mat half = predict(model, g);
  CHECK((half.array() - 0.5).abs().maxCoeff() == 0.0);
}
