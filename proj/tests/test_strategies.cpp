#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "agcd/strategies.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace agcd;
using fixtures::context_from_posteriors;

namespace {

IndexList sorted(IndexList v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Context over explicit feature rows; posteriors are uniform.
StrategyContext feature_context(const Matrix& unlabeled, const Matrix& labeled, std::size_t budget) {
  StrategyContext ctx = context_from_posteriors(Matrix::Constant(unlabeled.rows(), 2, 0.5), budget, 1, 1);
  ctx.unlabeled_features = unlabeled;
  ctx.labeled_features = labeled;
  for (Eigen::Index i = 0; i < labeled.rows(); ++i) ctx.labeled.push_back(100 + static_cast<Index>(i));
  return ctx;
}

}  // namespace

TEST_CASE("uncertainty scores") {
  Matrix p(1, 3);
  p << 0.5, 0.3, 0.2;
  const auto s = uncertainty_scores(p);
  CHECK(s.msp(0) == doctest::Approx(0.5));
  CHECK(s.margin(0) == doctest::Approx(0.2));
  CHECK(s.entropy(0) == doctest::Approx(1.0297).epsilon(1e-4));

  const auto u = uncertainty_scores(Matrix::Constant(1, 4, 0.25));
  CHECK(u.margin(0) == 0.0);
  CHECK(u.entropy(0) == doctest::Approx(std::log(4.0)));

  Matrix onehot = Matrix::Zero(1, 3);
  onehot(0, 2) = 1.0;
  const auto o = uncertainty_scores(onehot);
  CHECK(o.msp(0) == 1.0);
  CHECK(o.margin(0) == 1.0);
  CHECK(o.entropy(0) == 0.0);
}

TEST_CASE("uncertainty strategies: ties go to the lowest indices") {
  const auto ctx = context_from_posteriors(Matrix::Constant(10, 3, 1.0 / 3.0), 4, 2, 1);
  for (auto* f : {&select_entropy, &select_leastconf, &select_margin}) CHECK(f(ctx) == IndexList{0, 1, 2, 3});
}

TEST_CASE("uncertainty strategies: a unique uncertain sample is picked") {
  Matrix p = Matrix::Zero(6, 3);
  for (Eigen::Index r = 0; r < 6; ++r) p(r, r % 3) = 1.0;
  p.row(4).setConstant(1.0 / 3.0);
  const auto ctx = context_from_posteriors(p, 1, 2, 1);
  for (auto* f : {&select_entropy, &select_leastconf, &select_margin}) CHECK(f(ctx) == IndexList{4});
}

TEST_CASE("budget larger than the pool is rejected") {
  const auto ctx = context_from_posteriors(Matrix::Constant(3, 2, 0.5), 4, 1, 1);
  for (auto kind : {StrategyKind::kRandom, StrategyKind::kEntropy, StrategyKind::kMargin, StrategyKind::kBadge,
                    StrategyKind::kAdaptiveNovel})
    CHECK_THROWS_WITH(select(kind, ctx), "budget exceeds pool");
}

TEST_CASE("random selection is reproducible and stays in the pool") {
  std::mt19937_64 rng(0);
  auto ctx = context_from_posteriors(oracle::random_posteriors(50, 3, rng), 10, 2, 1);
  for (auto& i : ctx.unlabeled) i = 2 * i + 1;  // odd ids; labeled would be even
  ctx.seed = 5;
  const IndexList a = select_random(ctx);
  CHECK(a == select_random(ctx));
  CHECK(std::set<Index>(a.begin(), a.end()).size() == 10);
  for (Index i : a) CHECK(i % 2 == 1);
  ctx.seed = 6;
  CHECK(a != select_random(ctx));
}

TEST_CASE("k-means selection: one representative per blob") {
  Matrix x(6, 2);
  x << 0.0, 0.0,  //
      0.1, 0.0,   //
      0.0, 0.3,   //
      10.0, 10.0, //
      10.2, 10.0, //
      10.0, 10.1;
  auto ctx = feature_context(x, Matrix(0, 2), 2);
  const IndexList picks = sorted(select_kmeans(ctx));
  // Blob means (0.033, 0.1) and (10.067, 10.033); nearest rows are 0 and 3.
  CHECK(picks == IndexList{0, 3});

  ctx.budget = 1;
  // Global mean (5.05, 5.067): row 2 (0, 0.3) and row 5 are the nearest candidates.
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::Index nearest = 0;
  (x.rowwise() - mean).rowwise().squaredNorm().minCoeff(&nearest);
  CHECK(select_kmeans(ctx) == IndexList{static_cast<Index>(nearest)});
}

TEST_CASE("k-means selection is invariant to duplicating the pool") {
  Matrix blobs(6, 2);
  blobs << 0, 0, 0.1, 0, 5, 5, 5.1, 5, -5, 5, -5, 5.1;
  Matrix blobs2(12, 2);
  blobs2 << blobs, blobs;
  std::set<std::pair<double, double>> sa, sb;
  for (Index i : select_kmeans(feature_context(blobs, Matrix(0, 2), 3)))
    sa.insert({blobs(static_cast<Eigen::Index>(i), 0), blobs(static_cast<Eigen::Index>(i), 1)});
  for (Index i : select_kmeans(feature_context(blobs2, Matrix(0, 2), 3)))
    sb.insert({blobs2(static_cast<Eigen::Index>(i), 0), blobs2(static_cast<Eigen::Index>(i), 1)});
  CHECK(sa == sb);
}

TEST_CASE("k-means selection needs enough distinct points") {
  const auto ctx = feature_context(Matrix::Ones(4, 2), Matrix(0, 2), 2);
  CHECK_THROWS_AS(select_kmeans(ctx), Error);
}

TEST_CASE("coreset greedy k-center on a line") {
  Matrix u(3, 1);
  u << 1.0, 2.0, 3.0;
  Matrix l(1, 1);
  l << 0.0;
  auto ctx = feature_context(u, l, 1);
  CHECK(select_coreset(ctx) == IndexList{2});
  ctx.budget = 2;
  CHECK(select_coreset(ctx) == IndexList{2, 0});
  ctx.budget = 3;
  CHECK(sorted(select_coreset(ctx)) == IndexList{0, 1, 2});
  CHECK_THROWS_AS(select_coreset(feature_context(u, Matrix(0, 1), 1)), Error);
}

TEST_CASE("badge: confident samples are never the first seed") {
  Matrix p = Matrix::Zero(5, 3);
  for (Eigen::Index r = 0; r < 5; ++r) p(r, r % 3) = 1.0;
  p.row(3) << 0.4, 0.35, 0.25;
  const auto ctx = context_from_posteriors(p, 1, 2, 1);
  CHECK(select_badge(ctx) == IndexList{3});
}

TEST_CASE("badge: identical gradient embeddings fall back to the lowest indices") {
  const auto ctx = context_from_posteriors(Matrix::Constant(6, 2, 0.5), 3, 1, 1);
  CHECK(select_badge(ctx) == IndexList{0, 1, 2});
}

TEST_CASE("badge: two separated gradient clusters give one pick each") {
  // Two pairs of samples with identical gradient embeddings within a pair, so
  // the second D^2 draw can only land in the other pair.
  Matrix p(4, 2);
  p << 0.6, 0.4,  //
      0.6, 0.4,   //
      0.3, 0.7,   //
      0.3, 0.7;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto ctx = context_from_posteriors(p, 2, 1, 1);
    ctx.unlabeled_features = Matrix::Ones(4, 2) / std::sqrt(2.0);
    ctx.seed = seed;
    const IndexList picks = select_badge(ctx);
    REQUIRE(picks.size() == 2);
    CHECK((picks[0] < 2) != (picks[1] < 2));
  }
}

TEST_CASE("adaptive-novel: one confident pick per predicted-new class") {
  Matrix p(5, 4);
  p.row(0) = fixtures::posterior_with_margin(4, 2, 0.2).transpose();
  p.row(1) = fixtures::posterior_with_margin(4, 2, 0.7).transpose();
  p.row(2) = fixtures::posterior_with_margin(4, 3, 0.5).transpose();
  p.row(3) = fixtures::posterior_with_margin(4, 3, 0.1).transpose();
  p.row(4) = fixtures::posterior_with_margin(4, 0, 0.9).transpose();
  const auto ctx = context_from_posteriors(p, 2, 2, 2, false);
  CHECK(select_adaptive_novel(ctx) == IndexList{1, 2});
}

TEST_CASE("adaptive-novel: nothing predicted new falls back to old by margin") {
  Matrix p(4, 4);
  p.row(0) = fixtures::posterior_with_margin(4, 0, 0.2).transpose();
  p.row(1) = fixtures::posterior_with_margin(4, 1, 0.7).transpose();
  p.row(2) = fixtures::posterior_with_margin(4, 0, 0.5).transpose();
  p.row(3) = fixtures::posterior_with_margin(4, 1, 0.1).transpose();
  CHECK(select_adaptive_novel(context_from_posteriors(p, 2, 2, 2, false)) == IndexList{1, 2});
  CHECK(select_adaptive_novel(context_from_posteriors(p, 2, 2, 2, true)) == IndexList{3, 0});
}

TEST_CASE("adaptive-novel matches the hand simulation") {
  const fixtures::NovelInstance inst;
  CHECK(select_adaptive_novel(inst.context(5, false)) == fixtures::kConfidentB5);
  CHECK(select_adaptive_novel(inst.context(5, true)) == fixtures::kInformativeB5);
  CHECK(select_adaptive_novel(inst.context(7, false)) == fixtures::kConfidentB7);
  CHECK(select_adaptive_novel(inst.context(7, true)) == fixtures::kInformativeB7);
  CHECK(select_adaptive_novel(inst.context(0, true)).empty());
}

TEST_CASE("adaptive-novel confidence metric knob") {
  // Sample 0: msp high but margin small; sample 1: the reverse.
  Matrix p(2, 4);
  p << 0.0, 0.0, 0.48, 0.52,  //
      0.3, 0.0, 0.45, 0.25;
  auto ctx = context_from_posteriors(p, 1, 2, 2, false);
  // Predictions: 3 and 2. Quota 0 per class, so the single pick is the
  // global backfill among predicted-new by the chosen measure.
  ctx.metric = UncertaintyMetric::kMargin;
  CHECK(select_adaptive_novel(ctx) == IndexList{1});
  ctx.metric = UncertaintyMetric::kMsp;
  CHECK(select_adaptive_novel(ctx) == IndexList{0});
}

TEST_CASE("transfer latch") {
  const LabelMapping a({0, 1, 2, 3});
  const LabelMapping b({1, 0, 2, 3});
  CHECK(update_transfer(false, a, a, 0.1));
  CHECK_FALSE(update_transfer(false, a, b, 0.1));
  CHECK(update_transfer(true, a, b, 0.1));
  CHECK(update_transfer(false, a, b, 0.6));
}

TEST_CASE("strategy names round trip") {
  for (auto name : {"random", "entropy", "leastconf", "margin", "kmeans", "coreset", "badge", "adaptive-novel"})
    CHECK(strategy_name(parse_strategy(name)) == name);
  CHECK_THROWS_AS(parse_strategy("greedy"), ConfigError);
}
