#include "agcd/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace agcd {

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Vector a2 = a.rowwise().squaredNorm();
  const Vector b2 = b.rowwise().squaredNorm();
  Matrix d = -2.0 * a * b.transpose();
  d.colwise() += a2;
  d.rowwise() += b2.transpose();
  return d.cwiseMax(0.0);
}

IndexList kmeanspp_seeds(const Matrix& points, std::size_t k, std::mt19937_64& rng,
                         std::optional<Index> first) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k > n) throw Error("k-means++: more seeds than points");
  IndexList seeds;
  if (k == 0) return seeds;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (first) {
    if (*first >= n) throw Error("k-means++: first seed out of range");
    seeds.push_back(*first);
  } else {
    seeds.push_back(std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n))));
  }
  std::vector<bool> chosen(n, false);
  chosen[seeds[0]] = true;
  Vector d2 = (points.rowwise() - points.row(static_cast<Eigen::Index>(seeds[0]))).rowwise().squaredNorm();
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!chosen[i]) total += d2(static_cast<Eigen::Index>(i));
    Index pick = n;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = chosen[i] ? 0.0 : d2(static_cast<Eigen::Index>(i));
        if (w <= 0.0) continue;
        acc += w;
        pick = i;
        if (target < acc) break;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    seeds.push_back(pick);
    chosen[pick] = true;
    const Vector d_new =
        (points.rowwise() - points.row(static_cast<Eigen::Index>(pick))).rowwise().squaredNorm();
    d2 = d2.cwiseMin(d_new);
  }
  return seeds;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::mt19937_64& rng,
                    const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || k > n) throw Error("k-means: k must be in [1, N]");
  const IndexList seeds = kmeanspp_seeds(points, k, rng);
  KMeansResult r;
  r.centroids.resize(static_cast<Eigen::Index>(k), points.cols());
  for (std::size_t c = 0; c < k; ++c) {
    r.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(seeds[c]));
  }
  r.assignment.assign(n, 0);
  double previous = std::numeric_limits<double>::infinity();
  for (r.iterations = 1; r.iterations <= options.max_iterations; ++r.iterations) {
    const Matrix d = squared_distances(points, r.centroids);
    r.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      d.row(static_cast<Eigen::Index>(i)).minCoeff(&best);
      r.assignment[i] = static_cast<Label>(best);
      r.inertia += d(static_cast<Eigen::Index>(i), best);
    }
    Matrix sums = Matrix::Zero(r.centroids.rows(), r.centroids.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(r.assignment[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[r.assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        r.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      Index far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double di = d(static_cast<Eigen::Index>(i), r.assignment[i]);
        if (!taken[i] && di > far_d) {
          far_d = di;
          far = i;
        }
      }
      taken[far] = true;
      r.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
    }
    const double change = std::abs(previous - r.inertia);
    if (change <= options.relative_tolerance * std::max(r.inertia, 1e-300)) break;
    previous = r.inertia;
  }
  r.iterations = std::min(r.iterations, options.max_iterations);
  // Final assignment against the final centroids.
  const Matrix d = squared_distances(points, r.centroids);
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    d.row(static_cast<Eigen::Index>(i)).minCoeff(&best);
    r.assignment[i] = static_cast<Label>(best);
    r.inertia += d(static_cast<Eigen::Index>(i), best);
  }
  return r;
}

KMeansResult kmeans_restarts(const Matrix& points, std::size_t k, std::size_t restarts,
                             std::uint64_t seed, const KMeansOptions& options) {
  std::mt19937_64 rng(seed);
  KMeansResult best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KMeansResult run = kmeans(points, k, rng, options);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return best;
}

}  // namespace agcd
