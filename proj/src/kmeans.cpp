#include "pqlab/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pqlab/parallel.hpp"

namespace pqlab {

namespace {

constexpr std::size_t kChunk = 256;  // fixed reduction granularity

struct ChunkPartial {
  std::vector<double> sums;    // k * dim
  std::vector<int> counts;     // k
  double inertia = 0.0;
};

std::vector<Vec> init_random_points(const std::vector<Vec>& points, int k,
                                    Rng& rng) {
  // Partial Fisher-Yates over point indices.
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<Vec> centroids(k);
  for (int j = 0; j < k; ++j) {
    const std::size_t pick = j + rng.uniform_index(idx.size() - j);
    std::swap(idx[j], idx[pick]);
    centroids[j] = points[idx[j]];
  }
  return centroids;
}

std::vector<Vec> init_kmeanspp(const std::vector<Vec>& points, int k,
                               Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Vec> centroids;
  centroids.reserve(k);
  std::vector<bool> chosen(n, false);

  const std::size_t first = rng.uniform_index(n);
  centroids.push_back(points[first]);
  chosen[first] = true;

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_euclidean(points[i], centroids[0]);
  }

  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += d2[i];

    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {  // numeric edge: fall back to last positive-mass point
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    if (pick == n) {
      // All remaining mass is zero (duplicate-heavy input): take the lowest
      // unchosen index so the run still completes deterministically.
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = 0;
    }

    chosen[pick] = true;
    centroids.push_back(points[pick]);
    const Vec& c = centroids.back();
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_euclidean(points[i], c));
    }
  }
  return centroids;
}

// Assignment step over fixed chunks; partials are combined in chunk order so
// the reduction is independent of the thread count.
double assign_points(const std::vector<Vec>& points,
                     const std::vector<Vec>& centroids, int threads,
                     std::vector<int>& assignments,
                     std::vector<double>* sums, std::vector<int>* counts) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  const std::size_t k = centroids.size();
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;

  std::vector<ChunkPartial> partials(n_chunks);
  parallel_for(n_chunks, threads, [&](std::size_t c) {
    ChunkPartial& part = partials[c];
    if (sums != nullptr) {
      part.sums.assign(k * dim, 0.0);
      part.counts.assign(k, 0);
    }
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(begin + kChunk, n);
    for (std::size_t i = begin; i < end; ++i) {
      int best = 0;
      double best_d2 = squared_euclidean(points[i], centroids[0]);
      for (std::size_t j = 1; j < k; ++j) {
        const double d2 = squared_euclidean(points[i], centroids[j]);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = static_cast<int>(j);
        }
      }
      assignments[i] = best;
      part.inertia += best_d2;
      if (sums != nullptr) {
        double* dst = part.sums.data() + static_cast<std::size_t>(best) * dim;
        const double* src = points[i].data();
        for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
        part.counts[best] += 1;
      }
    }
  });

  double inertia = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    inertia += partials[c].inertia;
    if (sums != nullptr) {
      for (std::size_t j = 0; j < k * dim; ++j) (*sums)[j] += partials[c].sums[j];
      for (std::size_t j = 0; j < k; ++j) (*counts)[j] += partials[c].counts[j];
    }
  }
  return inertia;
}

}  // namespace

KMeansResult train_kmeans(const std::vector<Vec>& points,
                          const KMeansConfig& config) {
  if (points.empty()) {
    throw std::invalid_argument("train_kmeans: no points");
  }
  if (config.k < 1) {
    throw std::invalid_argument("train_kmeans: k must be >= 1");
  }
  if (static_cast<std::size_t>(config.k) > points.size()) {
    throw std::invalid_argument("train_kmeans: k (" +
                                std::to_string(config.k) +
                                ") exceeds number of points (" +
                                std::to_string(points.size()) + ")");
  }
  if (config.tol < 0.0) {
    throw std::invalid_argument("train_kmeans: tol must be >= 0");
  }
  const std::size_t dim = points[0].size();
  for (const Vec& p : points) {
    if (p.size() != dim) {
      throw std::invalid_argument("train_kmeans: inconsistent point dims");
    }
  }

  Rng rng(config.seed);
  KMeansResult result;
  result.centroids = config.init == KMeansInit::kPlusPlus
                         ? init_kmeanspp(points, config.k, rng)
                         : init_random_points(points, config.k, rng);
  result.assignments.assign(points.size(), 0);

  const std::size_t k = static_cast<std::size_t>(config.k);
  std::vector<double> sums(k * dim);
  std::vector<int> counts(k);

  for (int iter = 0; iter < config.max_iters; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    const double inertia = assign_points(points, result.centroids,
                                         config.threads, result.assignments,
                                         &sums, &counts);
    result.inertia_history.push_back(inertia);

    // Update step: means of members.
    double max_move2 = 0.0;
    std::vector<std::size_t> empties;
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        empties.push_back(j);
        continue;
      }
      const double inv = 1.0 / counts[j];
      double move2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double nv = sums[j * dim + d] * inv;
        const double delta = nv - result.centroids[j][d];
        move2 += delta * delta;
        result.centroids[j][d] = nv;
      }
      max_move2 = std::max(max_move2, move2);
    }

    // Reseed each empty cluster to the globally worst-fit point (largest
    // distance to its assigned centroid), one distinct point per cluster.
    if (!empties.empty()) {
      std::vector<std::pair<double, std::size_t>> fit(points.size());
      for (std::size_t i = 0; i < points.size(); ++i) {
        fit[i] = {squared_euclidean(points[i],
                                    result.centroids[result.assignments[i]]),
                  i};
      }
      std::sort(fit.begin(), fit.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::size_t next = 0;
      for (std::size_t j : empties) {
        if (next >= fit.size()) break;
        result.centroids[j] = points[fit[next].second];
        ++next;
      }
      max_move2 = std::numeric_limits<double>::infinity();  // force another pass
    }

    result.iters_run = iter + 1;
    if (max_move2 < config.tol * config.tol) break;
  }

  // Final consistency pass so assignments and inertia match the returned
  // centroids.
  result.inertia = assign_points(points, result.centroids, config.threads,
                                 result.assignments, nullptr, nullptr);
  result.inertia_history.push_back(result.inertia);
  return result;
}

int nearest_centroid(const Vec& point, const std::vector<Vec>& centroids) {
  if (centroids.empty()) {
    throw std::invalid_argument("nearest_centroid: empty centroid list");
  }
  int best = 0;
  double best_d2 = squared_euclidean(point, centroids[0]);
  for (std::size_t j = 1; j < centroids.size(); ++j) {
    const double d2 = squared_euclidean(point, centroids[j]);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace pqlab
