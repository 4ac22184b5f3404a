#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agcd/common.hpp"

namespace agcd {

// Immutable per-sample embeddings with ground-truth labels. Classes
// [0, num_old) are "old", [num_old, num_classes()) are "new". Values are
// always representable in binary32 so the on-disk format round-trips.
class FeatureDataset {
 public:
  FeatureDataset() = default;
  FeatureDataset(Matrix features, LabelList labels, std::vector<std::string> class_names,
                 std::size_t num_old);

  const Matrix& features() const { return features_; }
  const LabelList& labels() const { return labels_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  std::size_t num_classes() const { return class_names_.size(); }
  std::size_t num_old() const { return num_old_; }
  std::size_t num_new() const { return num_classes() - num_old_; }
  bool is_old(Label label) const { return label < num_old_; }

  // Rows for the given sample indices, in order.
  Matrix rows(std::span<const Index> indices) const;
  LabelList labels_of(std::span<const Index> indices) const;

 private:
  Matrix features_;
  LabelList labels_;
  std::vector<std::string> class_names_;
  std::size_t num_old_ = 0;
};

struct SplitConfig {
  std::size_t old_class_count = 0;
  double label_ratio = 0.2;
  std::uint64_t seed = 0;
};

// Round-t partition of the training indices. All index lists are sorted.
struct PoolState {
  IndexList labeled;
  IndexList unlabeled;
  std::vector<IndexList> queried_per_round;
  std::size_t round = 0;

  IndexList all_queried() const;
  // Labeled at round 0, i.e. labeled minus everything queried since.
  IndexList initial_labeled() const;
};

// Noiseless labeling oracle.
class Oracle {
 public:
  explicit Oracle(const LabelList& labels) : labels_(&labels) {}
  Label query(Index i) const;

 private:
  const LabelList* labels_;
};

// Splits train_indices (all samples when empty) into the initial labeled and
// unlabeled pools: floor(label_ratio * n_c) samples of every old class c are
// labeled, chosen by a seeded shuffle.
PoolState make_split(const FeatureDataset& dataset, const SplitConfig& cfg,
                     std::span<const Index> train_indices = {});

// Moves picks from unlabeled to labeled and records them as the next round.
PoolState query_oracle(const PoolState& pool, const Oracle& oracle, std::span<const Index> picks);

// Asserts the labeled/unlabeled partition and queried-set invariants against
// the expected training index set. Throws Error on violation.
void check_pool(const PoolState& pool, std::span<const Index> train_indices);

struct SyntheticSpec {
  std::size_t num_old = 5;
  std::size_t num_new = 5;
  std::size_t per_class = 200;
  std::size_t dim = 32;
  double separation = 5.0;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return num_old + num_new; }
};

// Isotropic unit-variance Gaussian clusters whose means sit on a random
// orthogonal frame scaled by separation (random unit directions when K > D),
// then L2-normalized and rounded to binary32.
FeatureDataset generate_synthetic(const SyntheticSpec& spec);

// Parses "K_OLD,K_NEW,PER_CLASS,DIM,SEP".
SyntheticSpec parse_synthetic_spec(const std::string& text);

// Version-1 feature directory: meta.json, features.bin (f32le), labels.bin (u32le).
FeatureDataset load_feature_dir(const std::filesystem::path& dir);
void save_feature_dir(const FeatureDataset& dataset, const std::filesystem::path& dir);

}  // namespace agcd
