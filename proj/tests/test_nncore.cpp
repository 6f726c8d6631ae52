#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "soz/error.hpp"
#include "soz/nncore.hpp"
#include "testutil.hpp"

using namespace soz;
using namespace soz::nn;
using testutil::random_matrix;

TEST_CASE("dense special cases") {
  Rng rng(1);
  const Mat w = random_matrix(rng, 4, 3);
  CHECK(dense_forward(Mat::Identity(4, 4), w, Mat::Zero(1, 3)).isApprox(w, 0.0));
  Mat b(1, 3);
  b << 1, -2, 3;
  const Mat y = dense_forward(Mat::Random(5, 4), Mat::Zero(4, 3), b);
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(y.row(r) == b);
  CHECK_THROWS_AS(dense_forward(Mat::Zero(2, 3), w, Mat::Zero(1, 3)), DomainError);
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(2);
  const Mat x = random_matrix(rng, 3, 5);
  const Mat w = random_matrix(rng, 5, 4);
  const Mat b = random_matrix(rng, 1, 4);
  const Mat c = random_matrix(rng, 3, 4);  // loss = sum(c .* y)
  const auto g = dense_backward(x, w, c);
  CHECK(grad_check([&](const Mat& v) { return dense_forward(v, w, b).cwiseProduct(c).sum(); }, x, g.dx) < 1e-5);
  CHECK(grad_check([&](const Mat& v) { return dense_forward(x, v, b).cwiseProduct(c).sum(); }, w, g.dw) < 1e-5);
  CHECK(grad_check([&](const Mat& v) { return dense_forward(x, w, v).cwiseProduct(c).sum(); }, b, g.db) < 1e-5);
}

TEST_CASE("activations") {
  Mat z(1, 3);
  z << 0.0, -1.0, 2.0;
  CHECK(tanh_fwd(z)(0, 0) == 0.0);
  CHECK(relu_fwd(z)(0, 1) == 0.0);
  CHECK(relu_fwd(z)(0, 2) == 2.0);
  Rng rng(3);
  Mat x = random_matrix(rng, 4, 6, 2.0);
  CHECK((tanh_fwd(-x) + tanh_fwd(x)).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x(i)) < 0.05) x(i) += 0.1;  // keep away from the relu kink
  }
  const Mat c = random_matrix(rng, 4, 6);
  CHECK(grad_check([&](const Mat& v) { return tanh_fwd(v).cwiseProduct(c).sum(); }, x,
                   tanh_bwd(tanh_fwd(x), c)) < 1e-6);
  CHECK(grad_check([&](const Mat& v) { return relu_fwd(v).cwiseProduct(c).sum(); }, x, relu_bwd(x, c)) < 1e-6);
  Mat zero = Mat::Zero(1, 1);
  CHECK(relu_bwd(zero, Mat::Ones(1, 1))(0, 0) == 0.0);
}

TEST_CASE("pooling") {
  Mat x(1, 4);
  x << 1, 3, 5, 7;
  Mat p(1, 2);
  p << 2, 6;
  CHECK(avgpool(x) == p);
  Mat u(1, 4);
  u << 2, 2, 6, 6;
  CHECK(unpool(p) == u);
  Rng rng(4);
  const Mat r = random_matrix(rng, 3, 10);
  CHECK(avgpool(unpool(r)) == r);
  CHECK_THROWS_AS(avgpool(Mat::Zero(1, 3)), DomainError);
  const Mat c5 = random_matrix(rng, 3, 5);
  const Mat c10 = random_matrix(rng, 3, 20);
  CHECK(grad_check([&](const Mat& v) { return avgpool(v).cwiseProduct(c5).sum(); }, r, avgpool_bwd(c5)) < 1e-8);
  CHECK(grad_check([&](const Mat& v) { return unpool(v).cwiseProduct(c10).sum(); }, r, unpool_bwd(c10)) < 1e-8);
}

TEST_CASE("hadamard") {
  Rng rng(5);
  const Mat a = random_matrix(rng, 3, 4);
  const Mat b = random_matrix(rng, 3, 4);
  CHECK(hadamard(a, Mat::Ones(3, 4)) == a);
  CHECK(hadamard(a, Mat::Zero(3, 4)).cwiseAbs().maxCoeff() == 0.0);
  const Mat c = random_matrix(rng, 3, 4);
  const auto g = hadamard_bwd(a, b, c);
  CHECK(grad_check([&](const Mat& v) { return hadamard(v, b).cwiseProduct(c).sum(); }, a, g.da) < 1e-8);
  CHECK(grad_check([&](const Mat& v) { return hadamard(a, v).cwiseProduct(c).sum(); }, b, g.db) < 1e-8);
}

TEST_CASE("softmax and cross-entropy") {
  const Mat u = Mat::Zero(1, 2);
  const Mat p = softmax_rows(u);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  const std::vector<int> label0 = {0}, row0 = {0};
  CHECK(cross_entropy(p, label0, row0).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Mat big(1, 2);
  big << 1000.0, 0.0;
  const Mat pb = softmax_rows(big);
  CHECK(pb(0, 0) == doctest::Approx(1.0));
  CHECK(std::isfinite(pb(0, 1)));

  Rng rng(6);
  const Mat x = random_matrix(rng, 6, 2, 3.0);
  const Mat s = softmax_rows(x);
  for (Eigen::Index r = 0; r < 6; ++r) CHECK(std::abs(s.row(r).sum() - 1.0) <= 1e-12);
  const Mat shifted = softmax_rows(x + Mat::Constant(6, 2, 123.25));
  CHECK((shifted - s).cwiseAbs().maxCoeff() <= 1e-12);

  const std::vector<int> labels = {0, 1, 1, 0, 1, 0};
  const std::vector<int> rows = {0, 1, 2, 4, 5};
  const std::vector<double> weights = {1.0, 2.5};
  for (bool weighted : {false, true}) {
    std::span<const double> cw = weighted ? std::span<const double>(weights) : std::span<const double>();
    const auto loss = cross_entropy(s, labels, rows, cw);
    const auto f = [&](const Mat& v) { return cross_entropy(softmax_rows(v), labels, rows, cw).value; };
    CHECK(grad_check(f, x, loss.grad) < 1e-6);
    // Direct weighted mean.
    double num = 0.0, den = 0.0;
    for (int r : rows) {
      const double w = weighted ? weights[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])] : 1.0;
      num += -w * std::log(s(r, labels[static_cast<std::size_t>(r)]));
      den += w;
    }
    CHECK(loss.value == doctest::Approx(num / den).epsilon(1e-12));
    CHECK(loss.grad.row(3).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mse") {
  Rng rng(7);
  const Mat x = random_matrix(rng, 2, 8);
  CHECK(mse(x, x).value == 0.0);
  CHECK(mse(x + Mat::Ones(2, 8), x).value == doctest::Approx(1.0));
  const Mat y = random_matrix(rng, 2, 8);
  CHECK(grad_check([&](const Mat& v) { return mse(v, y).value; }, x, mse(x, y).grad) < 1e-8);
}

TEST_CASE("adam closed form") {
  AdamState st;
  st.lr = 0.1;
  Mat p = Mat::Constant(1, 1, 1.0);
  adam_step(p, Mat::Constant(1, 1, 0.5), st);
  const double step1 = 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
  CHECK(std::abs(p(0, 0) - (1.0 - step1)) <= 1e-12);
  adam_step(p, Mat::Constant(1, 1, -0.2), st);
  const double m2 = 0.9 * 0.05 + 0.1 * -0.2;
  const double v2 = 0.999 * (0.001 * 0.25) + 0.001 * 0.04;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  CHECK(std::abs(p(0, 0) - (1.0 - step1 - 0.1 * mh / (std::sqrt(vh) + 1e-8))) <= 1e-12);
  CHECK(st.t == 2);

  AdamState z;
  Mat q = Mat::Constant(2, 2, 3.0);
  for (int i = 0; i < 10; ++i) adam_step(q, Mat::Zero(2, 2), z);
  CHECK(q == Mat::Constant(2, 2, 3.0));

  AdamState s1;
  s1.lr = 0.01;
  Mat r = Mat::Zero(1, 2);
  Mat g(1, 2);
  g << 4.0, -1e-3;
  adam_step(r, g, s1);
  CHECK(r(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(r(0, 1) == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("grad_check detects wrong gradients") {
  Rng rng(8);
  const Mat x = random_matrix(rng, 3, 3);
  CHECK(grad_check([](const Mat&) { return 4.0; }, x, Mat::Zero(3, 3)) == 0.0);
  const auto f = [](const Mat& v) { return v.squaredNorm(); };
  CHECK(grad_check(f, x, 2.0 * x) < 1e-8);
  CHECK(grad_check(f, x, 4.0 * x) > 0.3);
}

TEST_CASE("checkpoint round-trip and shape checks") {
  Rng rng(9);
  std::vector<Param> ps;
  ps.emplace_back("a", "dense", 3, 2);
  ps.emplace_back("b", "bias", 1, 2);
  for (auto& p : ps) glorot_init(p.value, rng);
  const auto path = std::filesystem::temp_directory_path() / "soz_test_ckpt.bin";
  save_checkpoint(path, ps, {{"model", "unit"}});
  auto copy = ps;
  for (auto& p : copy) p.value.setZero();
  const auto meta = load_checkpoint(path, copy);
  CHECK(meta.at("model") == "unit");
  CHECK(read_checkpoint_meta(path).at("model") == "unit");
  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(copy[i].value == ps[i].value);
  std::vector<Param> wrong;
  wrong.emplace_back("a", "dense", 2, 3);
  CHECK_THROWS(load_checkpoint(path, wrong));
  CHECK(all_finite(ps));
  ps[0].value(0, 0) = std::nan("");
  CHECK_FALSE(all_finite(ps));
}

TEST_CASE("glorot bounds and determinism") {
  Rng a(10), b(10);
  Mat w1(30, 20), w2(30, 20);
  glorot_init(w1, a);
  glorot_init(w2, b);
  CHECK(w1 == w2);
  CHECK(w1.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50.0));
}

TEST_CASE("adam training loop is bit-reproducible") {
  const auto run = [] {
    Rng rng(11);
    std::vector<Param> ps;
    ps.emplace_back("w", "dense", 4, 2);
    glorot_init(ps[0].value, rng);
    const Mat x = random_matrix(rng, 8, 4);
    const Mat y = random_matrix(rng, 8, 2);
    Adam opt(ps, 0.01);
    for (int i = 0; i < 25; ++i) {
      const auto l = mse(x * ps[0].value, y);
      ps[0].grad = x.transpose() * l.grad;
      opt.step();
    }
    return ps[0].value;
  };
  CHECK(run() == run());
}
