#pragma once

#include <vector>

#include "agcd/strategies.hpp"

namespace fixtures {

// Strategy context built directly from posteriors; features are the
// posteriors themselves unless given.
inline agcd::StrategyContext context_from_posteriors(const agcd::Matrix& p, std::size_t budget, std::size_t num_old,
                                                     std::size_t num_new, bool transfer = false) {
  agcd::StrategyContext ctx;
  for (agcd::Index i = 0; i < static_cast<agcd::Index>(p.rows()); ++i) ctx.unlabeled.push_back(i);
  ctx.unlabeled_features = p;
  ctx.labeled_features = agcd::Matrix(0, p.cols());
  ctx.posteriors = p;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    p.row(r).maxCoeff(&best);
    ctx.predictions.push_back(static_cast<agcd::Label>(best));
  }
  ctx.budget = budget;
  ctx.num_old = num_old;
  ctx.num_new = num_new;
  ctx.transfer = transfer;
  return ctx;
}

// Posterior row over k classes with the given argmax and top-two margin.
inline agcd::Vector posterior_with_margin(std::size_t k, std::size_t top, double margin) {
  agcd::Vector p = agcd::Vector::Zero(static_cast<Eigen::Index>(k));
  p(static_cast<Eigen::Index>(top)) = 0.5 + margin / 2.0;
  p(static_cast<Eigen::Index>((top + 1) % k)) = 0.5 - margin / 2.0;
  return p;
}

// Eight unlabeled samples, K_old = 2, K_new = 2.
//   sample:     0    1    2    3    4    5    6    7
//   predicted:  2    2    2    3    0    3    1    2
//   margin:   .90  .30  .60  .80  .95  .10  .05  .45
struct NovelInstance {
  std::vector<agcd::Label> predicted{2, 2, 2, 3, 0, 3, 1, 2};
  std::vector<double> margin{0.90, 0.30, 0.60, 0.80, 0.95, 0.10, 0.05, 0.45};

  agcd::StrategyContext context(std::size_t budget, bool transfer) const {
    agcd::Matrix p(8, 4);
    for (std::size_t i = 0; i < 8; ++i) p.row(static_cast<Eigen::Index>(i)) = posterior_with_margin(4, predicted[i], margin[i]).transpose();
    return context_from_posteriors(p, budget, 2, 2, transfer);
  }
};

// Hand simulation (quota floor(b / K_new) per predicted-new class, then
// backfill from leftover predicted-new, then predicted-old).
//
// b = 5, quota 2:
//   confident:   class 2 -> 0 (.90), 2 (.60); class 3 -> 3 (.80), 5 (.10);
//                remainder from {1 (.30), 7 (.45)} -> 7
//   informative: class 2 -> 1 (.30), 7 (.45); class 3 -> 5 (.10), 3 (.80);
//                remainder from {0 (.90), 2 (.60)} -> 2
// b = 7, quota 3 (class 3 has only two candidates):
//   confident:   0, 2, 7 | 3, 5 | new leftover 1 | old by max margin 4
//   informative: 1, 7, 2 | 5, 3 | new leftover 0 | old by min margin 6
inline const agcd::IndexList kConfidentB5{0, 2, 3, 5, 7};
inline const agcd::IndexList kInformativeB5{1, 7, 5, 3, 2};
inline const agcd::IndexList kConfidentB7{0, 2, 7, 3, 5, 1, 4};
inline const agcd::IndexList kInformativeB7{1, 7, 2, 5, 3, 0, 6};

}  // namespace fixtures
