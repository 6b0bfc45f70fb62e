#pragma once

#include <cstdint>
#include <vector>

#include "pqlab/numkit.hpp"

namespace pqlab {

enum class KMeansInit { kPlusPlus, kRandomPoints };

struct KMeansConfig {
  int k = 8;
  int max_iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  KMeansInit init = KMeansInit::kPlusPlus;
  int threads = 0;  // <= 0: library default
};

struct KMeansResult {
  std::vector<Vec> centroids;
  std::vector<int> assignments;
  double inertia = 0.0;  // final sum of squared distances to assigned centroid
  int iters_run = 0;
  // Inertia recorded after each assignment step (including the final
  // consistency pass); non-increasing by construction of Lloyd's algorithm.
  std::vector<double> inertia_history;
};

// Lloyd's algorithm. The assignment step runs in parallel over fixed-size
// point chunks and centroid sums are reduced in chunk order, so the result is
// bit-identical for any thread count. Empty clusters are reseeded to the
// globally worst-fit point.
KMeansResult train_kmeans(const std::vector<Vec>& points,
                          const KMeansConfig& config);

// Argmin of squared Euclidean distance, ties broken toward the lowest index.
int nearest_centroid(const Vec& point, const std::vector<Vec>& centroids);

}  // namespace pqlab
