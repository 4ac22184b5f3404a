#include "agcd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "agcd/losses.hpp"

namespace agcd {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  if (!(lambda_e >= 0.0)) throw ConfigError("lambda_e must be non-negative");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("EMA decay must be in [0, 1]");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(view_noise >= 0.0)) throw ConfigError("view noise must be non-negative");
  if (batch_main < 2) throw ConfigError("main batch size must be at least 2");
  if (batch_queried < 1) throw ConfigError("queried batch size must be at least 1");
  if (!(temperatures.contrastive > 0.0 && temperatures.classifier > 0.0 &&
        temperatures.teacher_start > 0.0 && temperatures.teacher_end > 0.0)) {
    throw ConfigError("temperatures must be positive");
  }
}

ViewPair make_views(const Matrix& batch, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto one_view = [&] {
    Matrix v = batch;
    if (sigma > 0.0) {
      for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) += sigma * normal(rng);
      for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double n = v.row(r).norm();
        if (n > 0.0) v.row(r) /= n;
      }
    }
    return v;
  };
  ViewPair views;
  views.first = one_view();
  views.second = one_view();
  return views;
}

ObjectiveWeights main_objective(const TrainConfig& cfg) {
  return {1.0 - cfg.lambda, cfg.lambda, 1.0, 1.0, cfg.lambda_e};
}

ObjectiveWeights queried_objective(const TrainConfig& cfg) {
  return {0.0, cfg.lambda, 0.0, 1.0, 0.0};
}

double objective(const Model& model, const ObjectiveBatch& batch, const ObjectiveWeights& w,
                 Parameters* grad) {
  const ForwardCache first = model.forward(batch.views.first);
  const ForwardCache second = model.forward(batch.views.second);
  const Eigen::Index b = first.input.rows();
  if (static_cast<std::size_t>(b) != batch.labels.size()) throw Error("objective: label count mismatch");
  const double tau_p = model.temperatures().classifier;
  const double tau_c = model.temperatures().contrastive;

  Matrix d_z1 = Matrix::Zero(b, first.embeddings.cols());
  Matrix d_z2 = Matrix::Zero(b, first.embeddings.cols());
  Matrix d_c1 = Matrix::Zero(b, first.cosines.cols());
  Matrix d_c2 = Matrix::Zero(b, first.cosines.cols());
  double total = 0.0;

  if (w.contrastive_unsup != 0.0) {
    const LossGrad l = contrastive_unsup_loss(first.embeddings, second.embeddings, tau_c);
    total += w.contrastive_unsup * l.value;
    d_z1 += w.contrastive_unsup * l.d_first;
    d_z2 += w.contrastive_unsup * l.d_second;
  }
  if (w.distillation != 0.0) {
    const Matrix t1 = batch.target_first.size() > 0
                          ? batch.target_first
                          : sharpen(first.cosines, batch.teacher_temperature);
    const Matrix t2 = batch.target_second.size() > 0
                          ? batch.target_second
                          : sharpen(second.cosines, batch.teacher_temperature);
    const LossGrad l = self_distillation_loss(first.cosines, second.cosines, t1, t2, tau_p, w.lambda_e);
    total += w.distillation * l.value;
    d_c1 += w.distillation * l.d_first;
    d_c2 += w.distillation * l.d_second;
  }

  std::vector<Eigen::Index> rows;
  LabelList labels;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (batch.labels[static_cast<std::size_t>(i)]) {
      rows.push_back(i);
      labels.push_back(*batch.labels[static_cast<std::size_t>(i)]);
    }
  }
  if (!rows.empty() && (w.contrastive_sup != 0.0 || w.supervised_ce != 0.0)) {
    auto gather = [&](const Matrix& m) {
      Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
      return out;
    };
    auto scatter_add = [&](Matrix& dst, const Matrix& src, double scale) {
      for (std::size_t r = 0; r < rows.size(); ++r) dst.row(rows[r]) += scale * src.row(static_cast<Eigen::Index>(r));
    };
    if (w.contrastive_sup != 0.0 && has_positive_pair(labels)) {
      const LossGrad l =
          contrastive_sup_loss(gather(first.embeddings), gather(second.embeddings), labels, tau_c);
      total += w.contrastive_sup * l.value;
      scatter_add(d_z1, l.d_first, w.contrastive_sup);
      scatter_add(d_z2, l.d_second, w.contrastive_sup);
    }
    if (w.supervised_ce != 0.0) {
      // Averaged over both views.
      const LossGrad l1 = supervised_ce_loss(gather(first.cosines), labels, tau_p);
      const LossGrad l2 = supervised_ce_loss(gather(second.cosines), labels, tau_p);
      const double s = 0.5 * w.supervised_ce;
      total += s * (l1.value + l2.value);
      scatter_add(d_c1, l1.d_first, s);
      scatter_add(d_c2, l2.d_first, s);
    }
  }

  if (grad != nullptr) {
    model.backward(first, d_z1, d_c1, *grad);
    model.backward(second, d_z2, d_c2, *grad);
  }
  return total;
}

SgdOptimizer::SgdOptimizer(const Model& model, double momentum, double weight_decay)
    : velocity_(model.params().zeros_like()), momentum_(momentum), weight_decay_(weight_decay) {}

void SgdOptimizer::step(Model& model, const Parameters& grad, double lr) {
  if (lr == 0.0) return;
  auto params = model.params().tensors();
  auto velocity = velocity_.tensors();
  const auto g = grad.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double gi = g[t][i] + weight_decay_ * params[t][i];
      velocity[t][i] = momentum_ * velocity[t][i] + gi;
      params[t][i] -= lr * velocity[t][i];
    }
  }
  model.normalize_prototypes();
}

double cosine_lr(const TrainConfig& cfg, std::size_t epoch, std::size_t epochs) {
  const double floor = cfg.learning_rate * cfg.min_lr_factor;
  if (epochs <= 1) return cfg.learning_rate;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs);
  return floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

TrainResult train_round(Model& model, EmaModel& ema, const TrainData& data, const TrainConfig& cfg,
                        std::size_t epochs, std::size_t schedule_offset,
                        const MappingProvider& mapping_provider, std::uint64_t stream_seed) {
  cfg.validate();
  if (data.dataset == nullptr) throw Error("train_round: no dataset");
  const FeatureDataset& dataset = *data.dataset;
  const std::size_t k_model = model.num_classes();
  std::mt19937_64 rng(stream_seed);
  SgdOptimizer optimizer(model, cfg.momentum, cfg.weight_decay);
  const ObjectiveWeights main_w = main_objective(cfg);
  const ObjectiveWeights queried_w = queried_objective(cfg);

  IndexList labeled_sorted = data.main_labeled;
  std::sort(labeled_sorted.begin(), labeled_sorted.end());

  TrainResult result;
  for (std::size_t e = 0; e < epochs; ++e) {
    const double lr = cosine_lr(cfg, e, epochs);
    const double tau_t = model.temperatures().teacher(schedule_offset + e);
    const LabelMapping mapping = mapping_provider(ema);
    result.epoch_mappings.push_back(mapping);

    // Ground-truth classes mapped outside the classifier (estimated K smaller
    // than the true K) cannot be supervised and are treated as unlabeled.
    auto mapped = [&](Index i) -> std::optional<Label> {
      const Label y = mapping[dataset.labels()[i]];
      if (y >= k_model) return std::nullopt;
      return y;
    };

    IndexList order = data.main;
    std::shuffle(order.begin(), order.end(), rng);
    IndexList queried;
    for (Index i : data.queried)
      if (mapped(i)) queried.push_back(i);
    std::shuffle(queried.begin(), queried.end(), rng);
    std::size_t queried_cursor = 0;

    double epoch_loss = 0.0;
    std::size_t main_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_main) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_main);
      if (end - start < 2) break;
      const std::span<const Index> ids(order.data() + start, end - start);
      ObjectiveBatch batch;
      batch.views = make_views(dataset.rows(ids), cfg.view_noise, rng);
      batch.teacher_temperature = tau_t;
      batch.labels.reserve(ids.size());
      for (Index i : ids) {
        batch.labels.push_back(std::binary_search(labeled_sorted.begin(), labeled_sorted.end(), i)
                                   ? mapped(i)
                                   : std::nullopt);
      }
      Parameters grad = model.params().zeros_like();
      epoch_loss += objective(model, batch, main_w, &grad);
      ++main_batches;
      optimizer.step(model, grad, lr);
      ema_update(ema, model, cfg.ema_decay);
      ++result.steps;

      if (!queried.empty()) {
        if (queried_cursor >= queried.size()) {
          std::shuffle(queried.begin(), queried.end(), rng);
          queried_cursor = 0;
        }
        const std::size_t q_end = std::min(queried.size(), queried_cursor + cfg.batch_queried);
        const std::span<const Index> q_ids(queried.data() + queried_cursor, q_end - queried_cursor);
        queried_cursor = q_end;
        ObjectiveBatch q_batch;
        q_batch.views = make_views(dataset.rows(q_ids), cfg.view_noise, rng);
        q_batch.teacher_temperature = tau_t;
        for (Index i : q_ids) q_batch.labels.push_back(mapped(i));
        Parameters q_grad = model.params().zeros_like();
        objective(model, q_batch, queried_w, &q_grad);
        optimizer.step(model, q_grad, lr);
        ema_update(ema, model, cfg.ema_decay);
        ++result.steps;
      }
    }
    result.epoch_losses.push_back(main_batches > 0 ? epoch_loss / static_cast<double>(main_batches) : 0.0);
  }
  return result;
}

}  // namespace agcd
