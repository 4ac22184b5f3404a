#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agcd/data.hpp"
#include "agcd/estimation.hpp"
#include "agcd/metrics.hpp"
#include "agcd/model.hpp"
#include "agcd/strategies.hpp"
#include "agcd/training.hpp"

namespace agcd {

// Either a feature directory or a synthetic generator spec.
struct DataSource {
  std::filesystem::path feature_dir;
  std::optional<SyntheticSpec> synthetic;
};

struct RunConfig {
  DataSource source;
  SplitConfig split;  // old_class_count 0 = take the dataset's num_old
  double test_fraction = 0.2;
  TrainConfig train;
  StrategyKind strategy = StrategyKind::kAdaptiveNovel;
  std::size_t rounds = 5;
  std::size_t budget = 100;
  double delta = 0.1;
  std::optional<KRange> estimate_range;  // unset = known K
  std::filesystem::path out_dir;         // empty = nothing persisted
  std::uint64_t seed = 0;
  bool informative_from_start = false;   // start Adaptive-Novel in the informative phase
  UncertaintyMetric metric = UncertaintyMetric::kMargin;
  bool score_with_ema = false;           // strategies score with the EMA model
  bool transductive = false;             // also report accuracy on the unlabeled pool

  void validate() const;
};

// Derives an independent seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

// Stratified per-class split of all samples into (train, test).
std::pair<IndexList, IndexList> holdout_split(const FeatureDataset& dataset, double test_fraction,
                                              std::uint64_t seed);

struct Experiment {
  FeatureDataset dataset;
  IndexList train;
  IndexList test;
  PoolState pool;
  std::size_t model_classes = 0;  // classifier width (true K or estimate)
  std::optional<KEstimate> estimate;

  // Width of label mappings and accuracy contingencies.
  std::size_t mapping_classes() const { return std::max(model_classes, dataset.num_classes()); }
};

FeatureDataset load_source(const DataSource& source, std::uint64_t seed);
Experiment prepare_experiment(const RunConfig& cfg);
Experiment prepare_experiment(const RunConfig& cfg, FeatureDataset dataset);

struct RoundReport {
  std::size_t round = 0;
  std::string strategy;
  AccuracyReport accuracy;
  std::optional<AccuracyReport> transductive;
  std::optional<NoveltyReport> novelty;             // this round's queries
  std::optional<NoveltyReport> novelty_cumulative;  // all queries so far
  std::optional<double> mapping_diff;
  bool informative_phase = false;  // phase used to select this round
  bool transfer = false;           // latch after this round (applies to the next)
  std::size_t num_labeled = 0;
  std::size_t num_unlabeled = 0;
  std::size_t num_queried = 0;
  std::optional<LabelMapping> mapping;  // final mapping of the round
  double seconds = 0.0;                 // wall clock; kept out of to_json()

  nlohmann::json to_json() const;
};

std::string csv_header();
std::string to_csv_row(const RoundReport& report);

AccuracyReport evaluate(const Model& model, const FeatureDataset& dataset, const IndexList& indices,
                        std::size_t mapping_classes);

struct BaseResult {
  Model model;
  EmaModel ema;
  RoundReport report;
  std::size_t schedule_epoch = 0;
};

// Base (round-0) training on D_l^0 u D_u^0 with ground-truth labels for the
// initially labeled old classes.
BaseResult run_base_training(const RunConfig& cfg, const Experiment& exp);

using ReportSink = std::function<void(const RoundReport&)>;

// AGCD rounds 1..n continuing from a base result, which is updated in place
// (model, EMA, schedule position). The sink sees each report as soon as the
// round finishes.
std::vector<RoundReport> run_agcd(const RunConfig& cfg, const Experiment& exp, BaseResult& state,
                                  const ReportSink& sink = {});

// Full run: prepare, base training, rounds. When out_dir is set writes
// config.json, rounds.jsonl, rounds.csv, timing.jsonl and checkpoints.
std::vector<RoundReport> run_experiment(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);

}  // namespace agcd
