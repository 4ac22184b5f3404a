#include "agcd/strategies.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "agcd/kmeans.hpp"
#include "agcd/losses.hpp"

namespace agcd {

namespace {

void check_budget(const StrategyContext& ctx) {
  if (ctx.budget > ctx.unlabeled.size()) throw Error("budget exceeds pool");
  if (static_cast<std::size_t>(ctx.posteriors.rows()) != ctx.unlabeled.size() ||
      ctx.predictions.size() != ctx.unlabeled.size() ||
      static_cast<std::size_t>(ctx.unlabeled_features.rows()) != ctx.unlabeled.size()) {
    throw Error("strategy context rows do not match the unlabeled pool");
  }
}

// Positions into ctx.unlabeled ordered by key ascending, ties by position
// (= sample index, since unlabeled is sorted).
std::vector<std::size_t> order_by(const Vector& key) {
  std::vector<std::size_t> pos(static_cast<std::size_t>(key.size()));
  std::iota(pos.begin(), pos.end(), 0);
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
    return key(static_cast<Eigen::Index>(a)) < key(static_cast<Eigen::Index>(b));
  });
  return pos;
}

IndexList take_first(const StrategyContext& ctx, const std::vector<std::size_t>& positions) {
  IndexList out;
  for (std::size_t i = 0; i < ctx.budget; ++i) out.push_back(ctx.unlabeled[positions[i]]);
  return out;
}

std::size_t count_distinct_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

// Higher = more confident.
Vector confidence(const UncertaintyScores& s, UncertaintyMetric metric) {
  switch (metric) {
    case UncertaintyMetric::kMargin:
      return s.margin;
    case UncertaintyMetric::kMsp:
      return s.msp;
    case UncertaintyMetric::kEntropy:
      return -s.entropy;
  }
  return s.margin;
}

}  // namespace

StrategyKind parse_strategy(std::string_view name) {
  if (name == "random") return StrategyKind::kRandom;
  if (name == "entropy") return StrategyKind::kEntropy;
  if (name == "leastconf") return StrategyKind::kLeastConf;
  if (name == "margin") return StrategyKind::kMargin;
  if (name == "kmeans") return StrategyKind::kKMeans;
  if (name == "coreset") return StrategyKind::kCoreSet;
  if (name == "badge") return StrategyKind::kBadge;
  if (name == "adaptive-novel") return StrategyKind::kAdaptiveNovel;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRandom: return "random";
    case StrategyKind::kEntropy: return "entropy";
    case StrategyKind::kLeastConf: return "leastconf";
    case StrategyKind::kMargin: return "margin";
    case StrategyKind::kKMeans: return "kmeans";
    case StrategyKind::kCoreSet: return "coreset";
    case StrategyKind::kBadge: return "badge";
    case StrategyKind::kAdaptiveNovel: return "adaptive-novel";
  }
  return "unknown";
}

UncertaintyMetric parse_uncertainty_metric(std::string_view name) {
  if (name == "margin") return UncertaintyMetric::kMargin;
  if (name == "msp") return UncertaintyMetric::kMsp;
  if (name == "entropy") return UncertaintyMetric::kEntropy;
  throw ConfigError("unknown uncertainty metric '" + std::string(name) + "'");
}

std::string_view uncertainty_metric_name(UncertaintyMetric metric) {
  switch (metric) {
    case UncertaintyMetric::kMargin: return "margin";
    case UncertaintyMetric::kMsp: return "msp";
    case UncertaintyMetric::kEntropy: return "entropy";
  }
  return "unknown";
}

UncertaintyScores uncertainty_scores(const Matrix& posteriors) {
  const Eigen::Index n = posteriors.rows();
  UncertaintyScores s{Vector(n), Vector(n), Vector(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    double top = -1.0;
    double second = -1.0;
    for (Eigen::Index k = 0; k < posteriors.cols(); ++k) {
      const double p = posteriors(r, k);
      if (p > top) {
        second = top;
        top = p;
      } else if (p > second) {
        second = p;
      }
    }
    if (second < 0.0) second = 0.0;
    s.msp(r) = top;
    s.margin(r) = top - second;
    s.entropy(r) = entropy(posteriors.row(r).transpose());
  }
  return s;
}

StrategyContext make_context(const Model& model, const FeatureDataset& dataset, const PoolState& pool,
                             std::size_t budget, std::size_t num_old, std::uint64_t seed,
                             bool transfer, UncertaintyMetric metric) {
  StrategyContext ctx;
  ctx.unlabeled = pool.unlabeled;
  ctx.labeled = pool.labeled;
  ctx.unlabeled_features = model.adapt(dataset.rows(pool.unlabeled));
  ctx.labeled_features = model.adapt(dataset.rows(pool.labeled));
  ctx.posteriors = softmax_rows(ctx.unlabeled_features * model.params().prototypes.transpose(),
                                model.temperatures().classifier);
  ctx.predictions.resize(pool.unlabeled.size());
  for (Eigen::Index r = 0; r < ctx.posteriors.rows(); ++r) {
    Eigen::Index best = 0;
    ctx.posteriors.row(r).maxCoeff(&best);
    ctx.predictions[static_cast<std::size_t>(r)] = static_cast<Label>(best);
  }
  ctx.budget = budget;
  ctx.num_old = num_old;
  ctx.num_new = model.num_classes() - num_old;
  ctx.seed = seed;
  ctx.transfer = transfer;
  ctx.metric = metric;
  return ctx;
}

IndexList select_random(const StrategyContext& ctx) {
  check_budget(ctx);
  std::vector<std::size_t> pos(ctx.unlabeled.size());
  std::iota(pos.begin(), pos.end(), 0);
  std::mt19937_64 rng(ctx.seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  return take_first(ctx, pos);
}

IndexList select_entropy(const StrategyContext& ctx) {
  check_budget(ctx);
  return take_first(ctx, order_by(-uncertainty_scores(ctx.posteriors).entropy));
}

IndexList select_leastconf(const StrategyContext& ctx) {
  check_budget(ctx);
  return take_first(ctx, order_by(uncertainty_scores(ctx.posteriors).msp));
}

IndexList select_margin(const StrategyContext& ctx) {
  check_budget(ctx);
  return take_first(ctx, order_by(uncertainty_scores(ctx.posteriors).margin));
}

IndexList select_kmeans(const StrategyContext& ctx) {
  check_budget(ctx);
  if (ctx.budget == 0) return {};
  const Matrix& x = ctx.unlabeled_features;
  if (count_distinct_rows(x) < ctx.budget) throw Error("k-means selection: fewer distinct points than budget");
  std::mt19937_64 rng(ctx.seed);
  const KMeansResult km = kmeans(x, ctx.budget, rng);
  const Matrix d = squared_distances(km.centroids, x);
  std::vector<bool> taken(ctx.unlabeled.size(), false);
  IndexList out;
  for (Eigen::Index c = 0; c < d.rows(); ++c) {
    const std::vector<std::size_t> nearest = order_by(d.row(c).transpose());
    for (std::size_t p : nearest) {
      if (!taken[p]) {
        taken[p] = true;
        out.push_back(ctx.unlabeled[p]);
        break;
      }
    }
  }
  return out;
}

IndexList select_coreset(const StrategyContext& ctx) {
  check_budget(ctx);
  if (ctx.labeled.empty() || ctx.labeled_features.rows() == 0) {
    throw Error("coreset selection needs a nonempty labeled pool");
  }
  const Matrix& x = ctx.unlabeled_features;
  const auto n = static_cast<std::size_t>(x.rows());
  Vector min_d(static_cast<Eigen::Index>(n));
  min_d.setConstant(std::numeric_limits<double>::infinity());
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < ctx.labeled_features.rows(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, ctx.labeled_features.rows() - start);
    const Matrix d = squared_distances(x, ctx.labeled_features.middleRows(start, len));
    min_d = min_d.cwiseMin(d.rowwise().minCoeff());
  }
  std::vector<bool> taken(n, false);
  IndexList out;
  for (std::size_t step = 0; step < ctx.budget; ++step) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_d(static_cast<Eigen::Index>(i)) > min_d(static_cast<Eigen::Index>(best))) best = i;
    }
    taken[best] = true;
    out.push_back(ctx.unlabeled[best]);
    const Vector d = (x.rowwise() - x.row(static_cast<Eigen::Index>(best))).rowwise().squaredNorm();
    min_d = min_d.cwiseMin(d);
  }
  return out;
}

IndexList select_badge(const StrategyContext& ctx) {
  check_budget(ctx);
  if (ctx.budget == 0) return {};
  const Matrix& h = ctx.unlabeled_features;
  const Eigen::Index k = ctx.posteriors.cols();
  const Eigen::Index d = h.cols();
  // Gradient of the pseudo-label cross-entropy w.r.t. the prototype layer:
  // (p - e_yhat) outer h, flattened.
  Matrix embed(h.rows(), k * d);
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    for (Eigen::Index c = 0; c < k; ++c) {
      const double coef = ctx.posteriors(r, c) - (static_cast<Label>(c) == ctx.predictions[static_cast<std::size_t>(r)] ? 1.0 : 0.0);
      embed.block(r, c * d, 1, d) = coef * h.row(r);
    }
  }
  Eigen::Index first = 0;
  embed.rowwise().squaredNorm().maxCoeff(&first);
  std::mt19937_64 rng(ctx.seed);
  const IndexList seeds = kmeanspp_seeds(embed, ctx.budget, rng, static_cast<Index>(first));
  IndexList out;
  for (Index s : seeds) out.push_back(ctx.unlabeled[s]);
  return out;
}

IndexList select_adaptive_novel(const StrategyContext& ctx) {
  check_budget(ctx);
  if (ctx.num_new == 0) throw Error("adaptive-novel needs at least one new class");
  if (ctx.budget == 0) return {};
  const Vector conf = confidence(uncertainty_scores(ctx.posteriors), ctx.metric);
  // Preferred first: most confident in the confident phase, least in the informative phase.
  const std::vector<std::size_t> ranked = order_by(ctx.transfer ? conf : Vector(-conf));

  const std::size_t quota = ctx.budget / ctx.num_new;
  std::vector<bool> taken(ctx.unlabeled.size(), false);
  IndexList out;
  for (std::size_t c = 0; c < ctx.num_new; ++c) {
    const auto cls = static_cast<Label>(ctx.num_old + c);
    std::size_t got = 0;
    for (std::size_t p : ranked) {
      if (got == quota) break;
      if (ctx.predictions[p] == cls) {
        taken[p] = true;
        out.push_back(ctx.unlabeled[p]);
        ++got;
      }
    }
  }
  // Remainder and per-class shortfalls: predicted-new first, then predicted-old.
  for (const bool want_new : {true, false}) {
    for (std::size_t p : ranked) {
      if (out.size() == ctx.budget) break;
      if (taken[p] || (ctx.predictions[p] >= ctx.num_old) != want_new) continue;
      taken[p] = true;
      out.push_back(ctx.unlabeled[p]);
    }
  }
  return out;
}

IndexList select(StrategyKind kind, const StrategyContext& ctx) {
  switch (kind) {
    case StrategyKind::kRandom: return select_random(ctx);
    case StrategyKind::kEntropy: return select_entropy(ctx);
    case StrategyKind::kLeastConf: return select_leastconf(ctx);
    case StrategyKind::kMargin: return select_margin(ctx);
    case StrategyKind::kKMeans: return select_kmeans(ctx);
    case StrategyKind::kCoreSet: return select_coreset(ctx);
    case StrategyKind::kBadge: return select_badge(ctx);
    case StrategyKind::kAdaptiveNovel: return select_adaptive_novel(ctx);
  }
  throw ConfigError("unknown strategy");
}

bool update_transfer(bool transfer, const LabelMapping& initial, const LabelMapping& final_mapping,
                     double delta) {
  return transfer || mapping_diff(initial, final_mapping) < delta;
}

}  // namespace agcd
