#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "agcd/assignment.hpp"
#include "agcd/common.hpp"
#include "agcd/data.hpp"
#include "agcd/model.hpp"

namespace agcd {

enum class StrategyKind { kRandom, kEntropy, kLeastConf, kMargin, kKMeans, kCoreSet, kBadge, kAdaptiveNovel };

// CLI names: random|entropy|leastconf|margin|kmeans|coreset|badge|adaptive-novel.
StrategyKind parse_strategy(std::string_view name);
std::string_view strategy_name(StrategyKind kind);

// Confidence measure used inside Adaptive-Novel. Higher = more confident
// for all three (negative entropy for kEntropy).
enum class UncertaintyMetric { kMargin, kMsp, kEntropy };
UncertaintyMetric parse_uncertainty_metric(std::string_view name);
std::string_view uncertainty_metric_name(UncertaintyMetric metric);

struct UncertaintyScores {
  Vector msp;
  Vector margin;
  Vector entropy;  // nats
};

UncertaintyScores uncertainty_scores(const Matrix& posteriors);

// Everything a strategy may look at. Rows of the unlabeled_* members align
// with `unlabeled`; labeled_features aligns with `labeled`.
struct StrategyContext {
  IndexList unlabeled;
  IndexList labeled;
  Matrix unlabeled_features;  // adapted h
  Matrix labeled_features;
  Matrix posteriors;
  LabelList predictions;
  std::size_t budget = 0;
  std::size_t num_old = 0;  // classifier ids [0, num_old) are old
  std::size_t num_new = 0;  // classifier ids [num_old, num_old + num_new) are new
  std::uint64_t seed = 0;
  bool transfer = false;  // Adaptive-Novel phase: false = confident, true = informative
  UncertaintyMetric metric = UncertaintyMetric::kMargin;
};

// Scores the pool with `model` (adapted features, posteriors, argmax).
StrategyContext make_context(const Model& model, const FeatureDataset& dataset, const PoolState& pool,
                             std::size_t budget, std::size_t num_old, std::uint64_t seed,
                             bool transfer, UncertaintyMetric metric = UncertaintyMetric::kMargin);

// All selectors return exactly ctx.budget distinct unlabeled sample indices
// (global dataset ids), in selection order. Ties resolve to the lowest index.
IndexList select_random(const StrategyContext& ctx);
IndexList select_entropy(const StrategyContext& ctx);
IndexList select_leastconf(const StrategyContext& ctx);
IndexList select_margin(const StrategyContext& ctx);
IndexList select_kmeans(const StrategyContext& ctx);
IndexList select_coreset(const StrategyContext& ctx);
IndexList select_badge(const StrategyContext& ctx);
IndexList select_adaptive_novel(const StrategyContext& ctx);

IndexList select(StrategyKind kind, const StrategyContext& ctx);

// Latching transfer rule: once the mapping diff drops below delta the
// informative phase stays on.
bool update_transfer(bool transfer, const LabelMapping& initial, const LabelMapping& final_mapping,
                     double delta);

}  // namespace agcd
