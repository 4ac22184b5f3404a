#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "agcd/common.hpp"
#include "agcd/strategies.hpp"

namespace agcd {

// Category make-up of a set of queried samples (ground-truth labels).
struct NoveltyReport {
  double nov_c = 0.0;  // covered new classes / K_new
  double nov_r = 0.0;  // fraction of queries from new classes
  double nov_u = 0.0;  // normalized entropy of new-class counts over N_select
  double nov_i = 0.0;  // nov_r * nov_u
  std::size_t num_selected = 0;
  std::vector<std::size_t> new_class_counts;  // per new class, length K_new
  std::vector<Label> covered_new_classes;
};

// Nov-U uses N_select (not the new-sample count) as the denominator and
// natural logs with 0 log 0 = 0. For K_new = 1, Nov-U is 1 when every query is
// from the single new class and 0 otherwise.
NoveltyReport novelty_metrics(std::span<const Label> queried_labels, std::size_t num_old,
                              std::size_t num_new);

struct AccuracyReport {
  double acc_all = 0.0;
  std::optional<double> acc_old;  // absent when the test set has no old samples
  std::optional<double> acc_new;
  std::vector<std::size_t> permutation;  // predicted id -> ground-truth id
};

// One Hungarian permutation over all k classes; old/new accuracies are that
// permutation restricted to samples whose ground truth is old/new.
AccuracyReport accuracy_breakdown(std::span<const Label> y_true, std::span<const Label> y_pred,
                                  std::size_t k, std::size_t num_old);

enum class ConfidenceMeasure { kNegEntropy, kMargin, kMsp };

struct ConfidenceHistogram {
  double lower = 0.0;
  double upper = 1.0;
  std::vector<double> old_mass;  // normalized; empty subset -> all zeros
  std::vector<double> new_mass;
};

// Histograms of a confidence measure split by ground-truth old/new. Bins are
// uniform over the measure's range: [-log K, 0] for negative entropy,
// [0, 1] for margin, [1/K, 1] for MSP. The top edge is inclusive.
ConfidenceHistogram confidence_histogram(const Matrix& posteriors, std::span<const Label> y_true,
                                         std::size_t num_old, ConfidenceMeasure measure,
                                         std::size_t bins);

nlohmann::json to_json(const NoveltyReport& report);
nlohmann::json to_json(const AccuracyReport& report);

}  // namespace agcd
