#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "agcd/assignment.hpp"
#include "agcd/common.hpp"
#include "agcd/data.hpp"
#include "agcd/model.hpp"

namespace agcd {

struct TrainConfig {
  double lambda = 0.35;    // supervised contrastive weight
  double lambda_e = 1.0;   // mean-entropy regularizer weight
  double learning_rate = 0.1;
  double min_lr_factor = 1e-3;  // cosine floor as a fraction of learning_rate
  double momentum = 0.9;
  double weight_decay = 0.0;
  double ema_decay = 0.9;
  double view_noise = 0.05;
  std::size_t proj_dim = 0;  // 0 means "same as input dimension"
  std::size_t epochs_base = 200;
  std::size_t epochs_round = 15;
  std::size_t batch_main = 128;
  std::size_t batch_queried = 8;
  std::uint64_t seed = 0;
  Temperatures temperatures;

  void validate() const;
};

// Two independent noisy views of a batch.
struct ViewPair {
  Matrix first;
  Matrix second;
};

// Each view is normalize(x + eps), eps ~ N(0, sigma^2 I).
ViewPair make_views(const Matrix& batch, double sigma, std::mt19937_64& rng);

// Weights selecting the terms of the training objective.
struct ObjectiveWeights {
  double contrastive_unsup = 0.0;
  double contrastive_sup = 0.0;
  double distillation = 0.0;
  double supervised_ce = 0.0;
  double lambda_e = 0.0;
};

// Main-batch weights: (1 - lambda) Lcon^u + lambda Lcon^l + Lcls^u + Lcls^l.
ObjectiveWeights main_objective(const TrainConfig& cfg);
// Queried-batch weights: supervised terms only.
ObjectiveWeights queried_objective(const TrainConfig& cfg);

// One batch of two views with optional labels (nullopt = unlabeled).
struct ObjectiveBatch {
  ViewPair views;
  std::vector<std::optional<Label>> labels;
  // Frozen self-distillation targets for the first/second view. When empty
  // they are sharpened from the current cosines with teacher_temperature.
  Matrix target_first;
  Matrix target_second;
  double teacher_temperature = 0.04;
};

// Weighted objective value; when grad is non-null the analytic gradient is
// accumulated into it. Supervised terms cover the labeled rows only and are
// skipped when undefined (no labeled rows, or no positive pair).
double objective(const Model& model, const ObjectiveBatch& batch, const ObjectiveWeights& weights,
                 Parameters* grad);

// SGD with momentum; prototypes are renormalized after every step.
class SgdOptimizer {
 public:
  SgdOptimizer(const Model& model, double momentum, double weight_decay);
  void step(Model& model, const Parameters& grad, double lr);

 private:
  Parameters velocity_;
  double momentum_;
  double weight_decay_;
};

// Cosine-annealed learning rate for epoch e of a stage of E epochs.
double cosine_lr(const TrainConfig& cfg, std::size_t epoch, std::size_t epochs);

// Index sets driving one training stage.
struct TrainData {
  const FeatureDataset* dataset = nullptr;
  IndexList main;          // D_l^0 u D_u (main batches)
  IndexList main_labeled;  // subset of main that carries labels (D_l^0)
  IndexList queried;       // all queried samples so far (queried batches)
};

// Returns the label mapping to use for the coming epoch.
using MappingProvider = std::function<LabelMapping(const EmaModel&)>;

struct TrainResult {
  std::vector<LabelMapping> epoch_mappings;  // one per epoch, in order
  std::vector<double> epoch_losses;          // mean main-batch objective per epoch
  std::size_t steps = 0;

  const LabelMapping& initial_mapping() const { return epoch_mappings.front(); }
  const LabelMapping& final_mapping() const { return epoch_mappings.back(); }
};

// Runs `epochs` epochs. Each epoch asks the provider for a mapping, maps the
// labels, then interleaves main batches with round-robin queried batches;
// the EMA is updated after every optimizer step. schedule_offset is the
// absolute epoch of the first epoch (for the teacher temperature ramp).
TrainResult train_round(Model& model, EmaModel& ema, const TrainData& data, const TrainConfig& cfg,
                        std::size_t epochs, std::size_t schedule_offset,
                        const MappingProvider& mapping_provider, std::uint64_t stream_seed);

}  // namespace agcd
