#include "agcd/assignment.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

#include "agcd/model.hpp"

namespace agcd {

LabelMapping::LabelMapping(std::vector<Label> values) : map_(std::move(values)) {
  std::vector<bool> seen(map_.size(), false);
  for (Label v : map_) {
    if (v >= map_.size() || seen[v]) throw Error("label mapping is not a bijection");
    seen[v] = true;
  }
}

LabelMapping LabelMapping::identity(std::size_t k) {
  std::vector<Label> values(k);
  for (std::size_t i = 0; i < k; ++i) values[i] = static_cast<Label>(i);
  return LabelMapping(std::move(values));
}

LabelMapping LabelMapping::inverse() const {
  std::vector<Label> inv(map_.size());
  for (std::size_t g = 0; g < map_.size(); ++g) inv[map_[g]] = static_cast<Label>(g);
  return LabelMapping(std::move(inv));
}

std::string LabelMapping::to_json() const { return nlohmann::json(map_).dump(); }

LabelMapping LabelMapping::from_json(const std::string& text) {
  try {
    return LabelMapping(nlohmann::json::parse(text).get<std::vector<Label>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad mapping JSON: ") + e.what());
  }
}

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& reward) {
  if (reward.rows() != reward.cols()) throw Error("hungarian: reward matrix must be square");
  if (!reward.allFinite()) throw Error("hungarian: reward matrix must be finite");
  const std::size_t n = static_cast<std::size_t>(reward.rows());
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t row, std::size_t col) {
    return -reward(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  };

  // 1-based potentials formulation; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0);  // owner[col] = row matched to col
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    owner[0] = row;
    std::size_t col0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t row0 = owner[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double slack = cost(row0 - 1, col - 1) - u[row0] - v[col];
        if (slack < min_slack[col]) {
          min_slack[col] = slack;
          way[col] = col0;
        }
        if (min_slack[col] < delta) {
          delta = min_slack[col];
          col1 = col;
        }
      }
      for (std::size_t col = 0; col <= n; ++col) {
        if (used[col]) {
          u[owner[col]] += delta;
          v[col] -= delta;
        } else {
          min_slack[col] -= delta;
        }
      }
      col0 = col1;
    } while (owner[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      owner[col0] = owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t col = 1; col <= n; ++col) result[owner[col] - 1] = col - 1;
  return result;
}

ClusterAccuracy cluster_accuracy(std::span<const Label> y_true, std::span<const Label> y_pred,
                                 std::size_t k) {
  if (y_true.empty()) throw Error("cluster_accuracy: empty input");
  if (y_true.size() != y_pred.size()) throw Error("cluster_accuracy: length mismatch");
  const auto dim = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= k || y_pred[i] >= k) throw Error("cluster_accuracy: label out of range");
    counts(y_pred[i], y_true[i]) += 1.0;
  }
  ClusterAccuracy out;
  out.permutation = hungarian(counts);
  double matched = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    matched += counts(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(out.permutation[p]));
  }
  out.accuracy = matched / static_cast<double>(y_true.size());
  return out;
}

LabelMapping compute_mapping(std::span<const Label> labels, std::span<const Label> predictions,
                             std::size_t k) {
  if (labels.empty()) throw Error("no labeled data for mapping");
  if (labels.size() != predictions.size()) throw Error("compute_mapping: length mismatch");
  const auto dim = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k || predictions[i] >= k) throw Error("compute_mapping: label out of range");
    counts(labels[i], predictions[i]) += 1.0;
  }
  const auto assignment = hungarian(counts);
  std::vector<Label> values(k);
  for (std::size_t g = 0; g < k; ++g) values[g] = static_cast<Label>(assignment[g]);
  return LabelMapping(std::move(values));
}

LabelMapping compute_mapping(const EmaModel& ema, const Matrix& labeled_features,
                             std::span<const Label> labels, std::size_t k) {
  if (labels.empty()) throw Error("no labeled data for mapping");
  const LabelList predictions = ema.snapshot().predict(labeled_features);
  return compute_mapping(labels, predictions, k);
}

LabelList apply_mapping(const LabelMapping& mapping, std::span<const Label> labels) {
  LabelList out;
  out.reserve(labels.size());
  for (Label y : labels) out.push_back(mapping[y]);
  return out;
}

double mapping_diff(const LabelMapping& initial, const LabelMapping& final_mapping) {
  if (initial.size() != final_mapping.size()) throw Error("mapping_diff: size mismatch");
  if (initial.size() == 0) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < initial.size(); ++i)
    if (initial.map()[i] != final_mapping.map()[i]) ++changed;
  return static_cast<double>(changed) / static_cast<double>(initial.size());
}

}  // namespace agcd
