#include "agcd/estimation.hpp"

#include <algorithm>

#include "agcd/assignment.hpp"
#include "agcd/kmeans.hpp"
#include "agcd/parallel.hpp"

namespace agcd {

KRange parse_k_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("expected MIN:MAX, got '" + text + "'");
  KRange r;
  try {
    r.min = std::stoul(text.substr(0, colon));
    r.max = std::stoul(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("cannot parse range '" + text + "'");
  }
  return r;
}

KEstimate estimate_k(const Matrix& features, std::span<const Index> labeled_rows,
                     std::span<const Label> labeled_labels, KRange range, std::uint64_t seed,
                     const EstimateOptions& options) {
  if (range.min > range.max) throw ConfigError("estimate_k: range minimum exceeds maximum");
  if (range.min < 1) throw ConfigError("estimate_k: candidates must be positive");
  if (range.max > static_cast<std::size_t>(features.rows())) {
    throw ConfigError("estimate_k: more clusters than samples");
  }
  if (labeled_rows.empty()) throw Error("estimate_k: labeled subset is empty");
  if (labeled_rows.size() != labeled_labels.size()) throw Error("estimate_k: label count mismatch");
  const std::size_t num_labels = *std::max_element(labeled_labels.begin(), labeled_labels.end()) + 1;

  KEstimate est;
  est.range = range;
  const std::size_t candidates = range.max - range.min + 1;
  est.accuracy.assign(candidates, 0.0);
  parallel_for(candidates, [&](std::size_t c) {
    const std::size_t k = range.min + c;
    // Same seed stream per candidate so results do not depend on scheduling.
    const KMeansResult km = kmeans_restarts(features, k, options.restarts, seed + 7919 * k);
    LabelList clusters;
    clusters.reserve(labeled_rows.size());
    for (Index r : labeled_rows) clusters.push_back(km.assignment.at(r));
    est.accuracy[c] = cluster_accuracy(labeled_labels, clusters, std::max(k, num_labels)).accuracy;
  });
  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates; ++c)
    if (est.accuracy[c] > est.accuracy[best]) best = c;
  est.k = range.min + best;
  return est;
}

}  // namespace agcd
