#include <doctest.h>

#include <cmath>
#include <random>

#include "agcd/losses.hpp"
#include "agcd/model.hpp"
#include "oracles.hpp"

using namespace agcd;

namespace {

constexpr double kTol = 1e-4;

void check_input_gradients(const std::function<LossGrad(const Matrix&, const Matrix&)>& loss, const Matrix& a,
                           const Matrix& b) {
  const LossGrad analytic = loss(a, b);
  const Matrix fd_a = oracle::numeric_gradient([&](const Matrix& m) { return loss(m, b).value; }, a);
  CHECK(oracle::relative_error(oracle::flatten(analytic.d_first), oracle::flatten(fd_a)) <= kTol);
  if (analytic.d_second.size() > 0) {
    const Matrix fd_b = oracle::numeric_gradient([&](const Matrix& m) { return loss(a, m).value; }, b);
    CHECK(oracle::relative_error(oracle::flatten(analytic.d_second), oracle::flatten(fd_b)) <= kTol);
  }
}

}  // namespace

TEST_CASE("unsupervised contrastive: orthogonal pair") {
  Matrix z(2, 3);
  z << 1, 0, 0,  //
      0, 1, 0;
  const double tau = 0.07;
  const double expected = -std::log(std::exp(1.0 / tau) / (std::exp(1.0 / tau) + 1.0));
  CHECK(contrastive_unsup_loss(z, z, tau).value == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_WITH(contrastive_unsup_loss(z.topRows(1), z.topRows(1), tau), "degenerate unsupervised batch");
}

TEST_CASE("unsupervised contrastive: duplicated batch keeps the positive term") {
  std::mt19937_64 rng(2);
  const Matrix z = oracle::random_unit_rows(4, 5, rng);
  const Matrix zo = oracle::random_unit_rows(4, 5, rng);
  Matrix z2(8, 5), zo2(8, 5);
  z2 << z, z;
  zo2 << zo, zo;
  // Positive similarity sum is the same per anchor; only the denominators grow.
  double pos = 0.0, pos2 = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) pos += z.row(i).dot(zo.row(i));
  for (Eigen::Index i = 0; i < 8; ++i) pos2 += z2.row(i).dot(zo2.row(i));
  CHECK(pos2 == doctest::Approx(2.0 * pos));
  CHECK(contrastive_unsup_loss(z2, zo2, 0.5).value > contrastive_unsup_loss(z, zo, 0.5).value);
}

TEST_CASE("supervised contrastive: two identical same-label samples") {
  Matrix z(2, 3);
  z << 1, 0, 0,  //
      1, 0, 0;
  CHECK(contrastive_sup_loss(z, z, LabelList{4, 4}, 0.07).value == doctest::Approx(0.0));
  CHECK_THROWS_WITH(contrastive_sup_loss(z, z, LabelList{0, 1}, 0.07), "degenerate supervised batch");
}

TEST_CASE("supervised contrastive is invariant to batch order") {
  std::mt19937_64 rng(6);
  const Matrix z = oracle::random_unit_rows(8, 6, rng);
  const Matrix zo = oracle::random_unit_rows(8, 6, rng);
  const LabelList y{0, 1, 0, 2, 1, 1, 3, 0};
  std::vector<Eigen::Index> order{3, 7, 0, 5, 1, 6, 2, 4};
  Matrix zp(8, 6), zop(8, 6);
  LabelList yp(8);
  for (std::size_t i = 0; i < 8; ++i) {
    zp.row(static_cast<Eigen::Index>(i)) = z.row(order[i]);
    zop.row(static_cast<Eigen::Index>(i)) = zo.row(order[i]);
    yp[i] = y[static_cast<std::size_t>(order[i])];
  }
  CHECK(contrastive_sup_loss(zp, zop, yp, 0.1).value ==
        doctest::Approx(contrastive_sup_loss(z, zo, y, 0.1).value).epsilon(1e-12));
}

TEST_CASE("self-distillation with identical views equals mean entropy") {
  std::mt19937_64 rng(3);
  const Matrix cos = oracle::random_unit_rows(6, 4, rng);
  const double tau = 0.1;
  const Matrix target = sharpen(cos, tau);
  const LossGrad l = self_distillation_loss(cos, cos, target, target, tau, 0.0);
  const Matrix p = softmax_rows(cos, tau);
  double mean_h = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) mean_h += entropy(p.row(r).transpose());
  mean_h /= static_cast<double>(p.rows());
  CHECK(l.value == doctest::Approx(mean_h).epsilon(1e-12));
}

TEST_CASE("self-distillation regularizer: uniform mean prediction and zero weight") {
  // Two samples with mirrored predictions average to uniform: H(mean p) = log 2.
  Matrix cos(2, 2);
  cos << 0.3, -0.3,  //
      -0.3, 0.3;
  const Matrix t = sharpen(cos, 0.05);
  const double base = self_distillation_loss(cos, cos, t, t, 0.1, 0.0).value;
  const double reg = self_distillation_loss(cos, cos, t, t, 0.1, 1.0).value;
  CHECK(base - reg == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const Vector uniform = Vector::Constant(5, 0.2);
  CHECK(entropy(uniform) == doctest::Approx(std::log(5.0)));
  Vector onehot = Vector::Zero(3);
  onehot(1) = 1.0;
  CHECK(entropy(onehot) == 0.0);
}

TEST_CASE("supervised cross-entropy identities") {
  // Near one-hot posterior at the true label -> loss ~ 0; uniform -> log K.
  Matrix cos(1, 3);
  cos << 1.0, -1.0, -1.0;
  CHECK(supervised_ce_loss(cos, LabelList{0}, 0.001).value == doctest::Approx(0.0).epsilon(1e-12));
  const Matrix flat = Matrix::Constant(2, 4, 0.25);
  CHECK(supervised_ce_loss(flat, LabelList{1, 3}, 0.1).value == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(supervised_ce_loss(flat, LabelList{1, 4}, 0.1), Error);
}

TEST_CASE("posterior examples") {
  Parameters p;
  p.adapter_weight = Matrix::Identity(2, 2);
  p.adapter_bias = Vector::Zero(2);
  p.head_weight = Matrix::Identity(2, 2);
  p.prototypes = Matrix::Identity(2, 2);
  const Model model(p, {});
  Vector h(2);
  h << 1.0, 0.0;
  const Vector post = posterior(model, h);
  CHECK(post(0) == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 1.0)).epsilon(1e-12));

  Parameters same = p;
  same.prototypes << 1, 0,  //
      1, 0;
  CHECK(posterior(Model(same, {}), h)(1) == doctest::Approx(0.5));

  std::mt19937_64 rng(1);
  const Model random(8, 8, 5, 4);
  const Matrix probs = random.posteriors(oracle::random_unit_rows(20, 8, rng));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) CHECK(std::fabs(probs.row(r).sum() - 1.0) <= 1e-12);
}

TEST_CASE("loss gradients match finite differences on their inputs") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix z = oracle::random_unit_rows(8, 16, rng);
    const Matrix zo = oracle::random_unit_rows(8, 16, rng);
    const LabelList y{0, 1, 0, 2, 1, 3, 0, 5};
    check_input_gradients([](const Matrix& a, const Matrix& b) { return contrastive_unsup_loss(a, b, 0.07); }, z, zo);
    check_input_gradients([&](const Matrix& a, const Matrix& b) { return contrastive_sup_loss(a, b, y, 0.07); }, z, zo);

    const Matrix c1 = oracle::random_unit_rows(8, 6, rng);
    const Matrix c2 = oracle::random_unit_rows(8, 6, rng);
    const Matrix t1 = sharpen(c1, 0.05);
    const Matrix t2 = sharpen(c2, 0.05);
    check_input_gradients(
        [&](const Matrix& a, const Matrix& b) { return self_distillation_loss(a, b, t1, t2, 0.1, 1.0); }, c1, c2);
    check_input_gradients([&](const Matrix& a, const Matrix&) { return supervised_ce_loss(a, y, 0.1); }, c1, c2);
  }
}
