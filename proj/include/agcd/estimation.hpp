#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agcd/common.hpp"

namespace agcd {

struct KRange {
  std::size_t min = 0;
  std::size_t max = 0;
};

// Parses "MIN:MAX".
KRange parse_k_range(const std::string& text);

struct KEstimate {
  KRange range;
  std::vector<double> accuracy;  // labeled clustering accuracy per candidate, min..max
  std::size_t k = 0;             // chosen total class count
};

struct EstimateOptions {
  std::size_t restarts = 3;
};

// Max-ACC: k-means on all features for every candidate k; the labeled rows
// are scored with Hungarian accuracy on a zero-padded square contingency;
// the best candidate wins, ties to the smallest k. Candidates are evaluated
// in parallel and reduced in order.
KEstimate estimate_k(const Matrix& features, std::span<const Index> labeled_rows,
                     std::span<const Label> labeled_labels, KRange range, std::uint64_t seed,
                     const EstimateOptions& options = {});

}  // namespace agcd
