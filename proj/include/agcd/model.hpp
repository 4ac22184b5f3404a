#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "agcd/common.hpp"

namespace agcd {

// Temperature settings carried with the model. The teacher (sharpening)
// temperature ramps linearly from teacher_start to teacher_end over the first
// teacher_warmup_epochs epochs of the schedule and stays flat afterwards.
struct Temperatures {
  double contrastive = 0.07;
  double classifier = 0.1;
  double teacher_start = 0.07;
  double teacher_end = 0.04;
  std::size_t teacher_warmup_epochs = 30;

  double teacher(std::size_t epoch) const;
};

// Trainable tensors in declaration order. The same struct doubles as a
// gradient buffer.
struct Parameters {
  Matrix adapter_weight;  // D x D
  Vector adapter_bias;    // D
  Matrix head_weight;     // Dp x D
  Matrix prototypes;      // K x D, rows unit-norm in a live model

  static constexpr std::array<const char*, 4> kTensorNames = {"adapter_weight", "adapter_bias",
                                                              "head_weight", "prototypes"};

  // Zero tensors shaped like this one.
  Parameters zeros_like() const;
  std::array<std::span<double>, 4> tensors();
  std::array<std::span<const double>, 4> tensors() const;
  std::size_t count() const;
  bool same_shape(const Parameters& other) const;
};

// Intermediate values of one forward pass over a batch (one row per sample).
struct ForwardCache {
  Matrix input;
  Matrix pre_activation;  // x W^T + b
  Matrix activation;      // gelu(pre_activation)
  Vector activation_norm;
  Matrix features;        // h, rows unit-norm
  Matrix head_output;     // h P^T
  Vector head_norm;
  Matrix embeddings;      // z, rows unit-norm
  Matrix cosines;         // h C^T
};

// Linear adapter + GELU + L2 normalization over frozen features, a linear
// projection head for the contrastive embeddings and a prototype classifier.
class Model {
 public:
  Model() = default;
  Model(std::size_t dim, std::size_t proj_dim, std::size_t num_classes, std::uint64_t seed,
        Temperatures temperatures = {});
  Model(Parameters params, Temperatures temperatures);

  std::size_t dim() const { return static_cast<std::size_t>(params_.adapter_weight.cols()); }
  std::size_t proj_dim() const { return static_cast<std::size_t>(params_.head_weight.rows()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(params_.prototypes.rows()); }

  const Parameters& params() const { return params_; }
  Parameters& params() { return params_; }
  const Temperatures& temperatures() const { return temperatures_; }

  ForwardCache forward(const Matrix& input) const;

  // Accumulates parameter gradients given dL/d(embeddings) and dL/d(cosines).
  // Either upstream gradient may be empty (treated as zero).
  void backward(const ForwardCache& cache, const Matrix& d_embeddings, const Matrix& d_cosines,
                Parameters& grad) const;

  // Adapted, unit-norm features h for raw inputs.
  Matrix adapt(const Matrix& input) const;
  // Softmax of h.c_k / tau_p, row per sample.
  Matrix posteriors(const Matrix& input) const;
  // Argmax class per row of posteriors(input); ties to lowest class id.
  LabelList predict(const Matrix& input) const;

  void normalize_prototypes();

 private:
  Parameters params_;
  Temperatures temperatures_;
};

// Posterior for one unit-norm adapted feature vector.
Vector posterior(const Model& model, const Vector& feature);

// Row-wise softmax of logits / temperature with max-subtraction.
Matrix softmax_rows(const Matrix& logits, double temperature);

// Exponential moving average of a model's parameters.
class EmaModel {
 public:
  EmaModel() = default;
  EmaModel(const Model& model, double decay);

  double decay() const { return decay_; }
  const Parameters& shadow() const { return shadow_; }
  Parameters& shadow() { return shadow_; }

  // Inference copy with prototypes renormalized.
  Model snapshot() const;

 private:
  Parameters shadow_;
  Temperatures temperatures_;
  double decay_ = 0.9;
};

// theta_ema <- beta * theta_ema + (1 - beta) * theta for every parameter.
void ema_update(EmaModel& ema, const Model& model, double beta);

// Binary checkpoint: 8-byte magic, u64le header length, JSON header, then the
// tensors in declaration order as binary64 little-endian.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     std::size_t schedule_epoch);
Model load_checkpoint(const std::filesystem::path& path, std::size_t* schedule_epoch = nullptr);
// Model + EMA (EMA goes to "<path>.ema").
void save_checkpoint(const Model& model, const EmaModel& ema, const std::filesystem::path& path,
                     std::size_t schedule_epoch);
EmaModel load_ema_checkpoint(const std::filesystem::path& path, double decay);

}  // namespace agcd
