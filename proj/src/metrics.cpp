#include "agcd/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "agcd/assignment.hpp"

namespace agcd {

NoveltyReport novelty_metrics(std::span<const Label> queried_labels, std::size_t num_old,
                              std::size_t num_new) {
  if (queried_labels.empty()) throw Error("novelty metrics need at least one queried sample");
  if (num_new == 0) throw Error("novelty metrics need at least one new class");
  NoveltyReport r;
  r.num_selected = queried_labels.size();
  r.new_class_counts.assign(num_new, 0);
  std::size_t new_total = 0;
  for (Label y : queried_labels) {
    if (y >= num_old + num_new) throw Error("queried label out of range");
    if (y >= num_old) {
      ++r.new_class_counts[y - num_old];
      ++new_total;
    }
  }
  const double n_select = static_cast<double>(r.num_selected);
  for (std::size_t c = 0; c < num_new; ++c) {
    if (r.new_class_counts[c] > 0) r.covered_new_classes.push_back(static_cast<Label>(num_old + c));
  }
  r.nov_c = static_cast<double>(r.covered_new_classes.size()) / static_cast<double>(num_new);
  r.nov_r = static_cast<double>(new_total) / n_select;
  if (num_new == 1) {
    r.nov_u = new_total == r.num_selected ? 1.0 : 0.0;
  } else {
    double h = 0.0;
    for (std::size_t count : r.new_class_counts) {
      if (count == 0) continue;
      const double q = static_cast<double>(count) / n_select;
      h -= q * std::log(q);
    }
    r.nov_u = h / std::log(static_cast<double>(num_new));
  }
  r.nov_i = r.nov_r * r.nov_u;
  return r;
}

AccuracyReport accuracy_breakdown(std::span<const Label> y_true, std::span<const Label> y_pred,
                                  std::size_t k, std::size_t num_old) {
  const ClusterAccuracy acc = cluster_accuracy(y_true, y_pred, k);
  AccuracyReport r;
  r.acc_all = acc.accuracy;
  r.permutation = acc.permutation;
  std::size_t old_n = 0, old_hit = 0, new_n = 0, new_hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool hit = acc.permutation[y_pred[i]] == y_true[i];
    if (y_true[i] < num_old) {
      ++old_n;
      old_hit += hit;
    } else {
      ++new_n;
      new_hit += hit;
    }
  }
  if (old_n > 0) r.acc_old = static_cast<double>(old_hit) / static_cast<double>(old_n);
  if (new_n > 0) r.acc_new = static_cast<double>(new_hit) / static_cast<double>(new_n);
  return r;
}

ConfidenceHistogram confidence_histogram(const Matrix& posteriors, std::span<const Label> y_true,
                                         std::size_t num_old, ConfidenceMeasure measure,
                                         std::size_t bins) {
  if (bins < 1) throw Error("confidence histogram needs at least one bin");
  if (static_cast<std::size_t>(posteriors.rows()) != y_true.size()) {
    throw Error("confidence histogram: label count mismatch");
  }
  const auto k = static_cast<double>(posteriors.cols());
  const UncertaintyScores s = uncertainty_scores(posteriors);
  ConfidenceHistogram h;
  Vector value;
  switch (measure) {
    case ConfidenceMeasure::kNegEntropy:
      h.lower = -std::log(k);
      h.upper = 0.0;
      value = -s.entropy;
      break;
    case ConfidenceMeasure::kMargin:
      h.lower = 0.0;
      h.upper = 1.0;
      value = s.margin;
      break;
    case ConfidenceMeasure::kMsp:
      h.lower = 1.0 / k;
      h.upper = 1.0;
      value = s.msp;
      break;
  }
  h.old_mass.assign(bins, 0.0);
  h.new_mass.assign(bins, 0.0);
  std::size_t old_n = 0, new_n = 0;
  const double width = (h.upper - h.lower) / static_cast<double>(bins);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double v = value(static_cast<Eigen::Index>(i));
    auto bin = static_cast<std::ptrdiff_t>(std::floor((v - h.lower) / width));
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    if (y_true[i] < num_old) {
      h.old_mass[static_cast<std::size_t>(bin)] += 1.0;
      ++old_n;
    } else {
      h.new_mass[static_cast<std::size_t>(bin)] += 1.0;
      ++new_n;
    }
  }
  if (old_n > 0)
    for (double& m : h.old_mass) m /= static_cast<double>(old_n);
  if (new_n > 0)
    for (double& m : h.new_mass) m /= static_cast<double>(new_n);
  return h;
}

nlohmann::json to_json(const NoveltyReport& r) {
  return {{"nov_c", r.nov_c}, {"nov_r", r.nov_r}, {"nov_u", r.nov_u}, {"nov_i", r.nov_i},
          {"num_selected", r.num_selected}, {"new_class_counts", r.new_class_counts}};
}

nlohmann::json to_json(const AccuracyReport& r) {
  nlohmann::json j = {{"acc_all", r.acc_all}};
  j["acc_old"] = r.acc_old ? nlohmann::json(*r.acc_old) : nlohmann::json(nullptr);
  j["acc_new"] = r.acc_new ? nlohmann::json(*r.acc_new) : nlohmann::json(nullptr);
  return j;
}

}  // namespace agcd
