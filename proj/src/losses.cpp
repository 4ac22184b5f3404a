#include "agcd/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "agcd/model.hpp"

namespace agcd {

namespace {

// log softmax of a row, scaled by 1/temperature.
Matrix log_softmax_rows(const Matrix& logits, double temperature) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff() / temperature;
    double total = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) total += std::exp(logits(r, k) / temperature - peak);
    const double lse = peak + std::log(total);
    for (Eigen::Index k = 0; k < logits.cols(); ++k) out(r, k) = logits(r, k) / temperature - lse;
  }
  return out;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": view shapes differ");
  }
}

}  // namespace

LossGrad contrastive_unsup_loss(const Matrix& z, const Matrix& z_other, double temperature) {
  check_same_shape(z, z_other, "contrastive_unsup_loss");
  const Eigen::Index b = z.rows();
  if (b < 2) throw Error("degenerate unsupervised batch");
  const Matrix sim = z * z_other.transpose() / temperature;
  Matrix d_sim(b, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double peak = sim.row(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index n = 0; n < b; ++n) denom += std::exp(sim(i, n) - peak);
    const double lse = peak + std::log(denom);
    total += lse - sim(i, i);
    for (Eigen::Index n = 0; n < b; ++n) d_sim(i, n) = std::exp(sim(i, n) - lse);
    d_sim(i, i) -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  d_sim *= inv_b / temperature;
  LossGrad out;
  out.value = total * inv_b;
  out.d_first = d_sim * z_other;
  out.d_second = d_sim.transpose() * z;
  return out;
}

bool has_positive_pair(std::span<const Label> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j)
      if (labels[i] == labels[j]) return true;
  return false;
}

LossGrad contrastive_sup_loss(const Matrix& z, const Matrix& z_other, std::span<const Label> labels,
                              double temperature) {
  check_same_shape(z, z_other, "contrastive_sup_loss");
  const Eigen::Index b = z.rows();
  if (static_cast<std::size_t>(b) != labels.size()) throw Error("label count differs from batch size");
  const Matrix sim = z * z_other.transpose() / temperature;
  Matrix d_sim = Matrix::Zero(b, b);
  double total = 0.0;
  std::size_t anchors = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    std::size_t positives = 0;
    for (Eigen::Index q = 0; q < b; ++q)
      if (q != i && labels[q] == labels[i]) ++positives;
    if (positives == 0) continue;
    ++anchors;
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index n = 0; n < b; ++n)
      if (n != i) peak = std::max(peak, sim(i, n));
    double denom = 0.0;
    for (Eigen::Index n = 0; n < b; ++n)
      if (n != i) denom += std::exp(sim(i, n) - peak);
    const double lse = peak + std::log(denom);
    const double inv_pos = 1.0 / static_cast<double>(positives);
    for (Eigen::Index n = 0; n < b; ++n) {
      if (n == i) continue;
      d_sim(i, n) = std::exp(sim(i, n) - lse);
      if (labels[n] == labels[i]) {
        total += inv_pos * (lse - sim(i, n));
        d_sim(i, n) -= inv_pos;
      }
    }
  }
  if (anchors == 0) throw Error("degenerate supervised batch");
  const double inv_a = 1.0 / static_cast<double>(anchors);
  d_sim *= inv_a / temperature;
  LossGrad out;
  out.value = total * inv_a;
  out.d_first = d_sim * z_other;
  out.d_second = d_sim.transpose() * z;
  return out;
}

LossGrad self_distillation_loss(const Matrix& cos, const Matrix& cos_other,
                                const Matrix& target_first, const Matrix& target_second,
                                double tau_p, double lambda_e) {
  check_same_shape(cos, cos_other, "self_distillation_loss");
  check_same_shape(cos, target_first, "self_distillation_loss");
  check_same_shape(cos, target_second, "self_distillation_loss");
  const Eigen::Index b = cos.rows();
  const Eigen::Index k = cos.cols();
  if (b == 0) throw Error("empty batch");
  const double scale = 1.0 / (2.0 * static_cast<double>(b));

  const Matrix log_p = log_softmax_rows(cos, tau_p);
  const Matrix log_p_other = log_softmax_rows(cos_other, tau_p);
  const Matrix p = log_p.array().exp().matrix();
  const Matrix p_other = log_p_other.array().exp().matrix();

  // The second view's target supervises the first view's prediction and vice versa.
  double ce = 0.0;
  LossGrad out;
  out.d_first.resize(b, k);
  out.d_second.resize(b, k);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double mass_second = target_second.row(i).sum();
    const double mass_first = target_first.row(i).sum();
    ce -= target_second.row(i).dot(log_p.row(i)) + target_first.row(i).dot(log_p_other.row(i));
    out.d_first.row(i) = (mass_second * p.row(i) - target_second.row(i)) * (scale / tau_p);
    out.d_second.row(i) = (mass_first * p_other.row(i) - target_first.row(i)) * (scale / tau_p);
  }
  out.value = ce * scale;

  if (lambda_e != 0.0) {
    const Vector mean_p = (p.colwise().sum() + p_other.colwise().sum()).transpose() * scale;
    out.value -= lambda_e * entropy(mean_p);
    // d(-lambda_e H)/d mean_p_k = lambda_e (log mean_p_k + 1); the constant
    // cancels through the softmax Jacobian.
    Vector g(k);
    for (Eigen::Index c = 0; c < k; ++c) {
      g(c) = mean_p(c) > 0.0 ? lambda_e * std::log(mean_p(c)) * scale : 0.0;
    }
    for (Eigen::Index i = 0; i < b; ++i) {
      const double dot = p.row(i).dot(g);
      const double dot_other = p_other.row(i).dot(g);
      for (Eigen::Index c = 0; c < k; ++c) {
        out.d_first(i, c) += p(i, c) * (g(c) - dot) / tau_p;
        out.d_second(i, c) += p_other(i, c) * (g(c) - dot_other) / tau_p;
      }
    }
  }
  return out;
}

LossGrad supervised_ce_loss(const Matrix& cos, std::span<const Label> labels, double tau_p) {
  const Eigen::Index b = cos.rows();
  if (static_cast<std::size_t>(b) != labels.size()) throw Error("label count differs from batch size");
  if (b == 0) throw Error("empty batch");
  const Matrix log_p = log_softmax_rows(cos, tau_p);
  LossGrad out;
  out.d_first = log_p.array().exp().matrix();
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Label y = labels[static_cast<std::size_t>(i)];
    if (y >= static_cast<Label>(cos.cols())) {
      throw Error("label " + std::to_string(y) + " outside classifier range");
    }
    total -= log_p(i, y);
    out.d_first(i, y) -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  out.value = total * inv_b;
  out.d_first *= inv_b / tau_p;
  return out;
}

Matrix sharpen(const Matrix& cos, double tau_t) { return softmax_rows(cos, tau_t); }

double entropy(const Eigen::Ref<const Vector>& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) h -= p(k) * std::log(p(k));
  return h;
}

}  // namespace agcd
