#pragma once

#include <span>
#include <string>
#include <vector>

#include "agcd/common.hpp"

namespace agcd {

class Model;
class EmaModel;

// Bijection from ground-truth class ids to classifier class ids:
// map()[g] is the classifier index assigned to class g.
class LabelMapping {
 public:
  LabelMapping() = default;
  // Throws if values is not a permutation of 0..K-1.
  explicit LabelMapping(std::vector<Label> values);

  static LabelMapping identity(std::size_t k);

  std::size_t size() const { return map_.size(); }
  const std::vector<Label>& map() const { return map_; }
  Label operator[](Label g) const { return map_.at(g); }
  LabelMapping inverse() const;

  // JSON integer array of length K.
  std::string to_json() const;
  static LabelMapping from_json(const std::string& text);

  friend bool operator==(const LabelMapping&, const LabelMapping&) = default;

 private:
  std::vector<Label> map_;
};

// Assignment maximizing sum_g reward(g, result[g]) over all permutations.
// O(K^3) shortest augmenting path with potentials; among equal-cost
// augmenting choices the lowest column index wins.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& reward);

struct ClusterAccuracy {
  double accuracy = 0.0;
  // permutation[predicted id] = ground-truth id it is matched to.
  std::vector<std::size_t> permutation;
};

// max over permutations p of (1/M) sum_i 1(y_i == p(yhat_i)) via the K x K
// contingency matrix. Entries of both arrays must be < k.
ClusterAccuracy cluster_accuracy(std::span<const Label> y_true, std::span<const Label> y_pred,
                                 std::size_t k);

// Mapping maximizing agreement between mapped ground truth and predictions.
// Classes absent from the labels get the Hungarian completion.
LabelMapping compute_mapping(std::span<const Label> labels, std::span<const Label> predictions,
                             std::size_t k);
// Same, from the EMA model's predictions on raw (un-augmented) features.
LabelMapping compute_mapping(const EmaModel& ema, const Matrix& labeled_features,
                             std::span<const Label> labels, std::size_t k);

LabelList apply_mapping(const LabelMapping& mapping, std::span<const Label> labels);

// Fraction of classes whose mapped index differs.
double mapping_diff(const LabelMapping& initial, const LabelMapping& final_mapping);

}  // namespace agcd
