#pragma once

#include <span>

#include "agcd/common.hpp"

namespace agcd {

// A scalar loss and its gradient w.r.t. the two view inputs it consumed.
struct LossGrad {
  double value = 0.0;
  Matrix d_first;
  Matrix d_second;
};

// Self-supervised InfoNCE over the batch. Anchor z_i (first view), positive
// z'_i, denominator over every z'_n in the batch including the positive.
// Throws "degenerate unsupervised batch" for fewer than two samples.
LossGrad contrastive_unsup_loss(const Matrix& z, const Matrix& z_other, double temperature);

// Supervised contrastive loss. For anchor i the positives are the other
// samples q != i sharing its label; the denominator runs over all n != i.
// Anchors without positives are skipped; if none remain throws
// "degenerate supervised batch".
LossGrad contrastive_sup_loss(const Matrix& z, const Matrix& z_other, std::span<const Label> labels,
                              double temperature);

// True if some label occurs at least twice, i.e. contrastive_sup_loss is defined.
bool has_positive_pair(std::span<const Label> labels);

// Self-distillation between two views plus the mean-entropy regularizer:
//   1/(2B) sum_i [CE(t'_i, p_i) + CE(t_i, p'_i)] - lambda_e * H(mean of p and p')
// where p = softmax(cos / tau_p) and targets are constants (no gradient).
// target_first is the sharpened prediction of the first view, used as the
// target for the second view, and vice versa.
LossGrad self_distillation_loss(const Matrix& cos, const Matrix& cos_other,
                                const Matrix& target_first, const Matrix& target_second,
                                double tau_p, double lambda_e);

// Mean cross-entropy of softmax(cos / tau_p) against integer labels; only
// d_first is populated. Throws on label >= K.
LossGrad supervised_ce_loss(const Matrix& cos, std::span<const Label> labels, double tau_p);

// Sharpened teacher distribution softmax(cos / tau_t).
Matrix sharpen(const Matrix& cos, double tau_t);

// Shannon entropy in nats with 0 log 0 = 0.
double entropy(const Eigen::Ref<const Vector>& p);

}  // namespace agcd
