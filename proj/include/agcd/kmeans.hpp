#pragma once

#include <optional>
#include <random>

#include "agcd/common.hpp"

namespace agcd {

// k-means++ (D^2) seeding over the rows of points. When first is set it is
// used as the first seed instead of a uniform draw. If every remaining point
// has zero distance to the chosen seeds, the lowest unchosen index is taken.
IndexList kmeanspp_seeds(const Matrix& points, std::size_t k, std::mt19937_64& rng,
                         std::optional<Index> first = std::nullopt);

struct KMeansResult {
  Matrix centroids;
  LabelList assignment;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double relative_tolerance = 1e-6;
};

// Lloyd's algorithm from k-means++ seeds. Empty clusters are re-seeded with
// the point farthest from its centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::mt19937_64& rng,
                    const KMeansOptions& options = {});

// Best inertia over `restarts` seeded runs.
KMeansResult kmeans_restarts(const Matrix& points, std::size_t k, std::size_t restarts,
                             std::uint64_t seed, const KMeansOptions& options = {});

// Squared Euclidean distances, rows of a against rows of b.
Matrix squared_distances(const Matrix& a, const Matrix& b);

}  // namespace agcd
