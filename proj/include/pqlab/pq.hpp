#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pqlab/kmeans.hpp"
#include "pqlab/numkit.hpp"

namespace pqlab {

// M sub-codebooks of K centroids each. Centroids are L2-normalized after
// k-means so that Euclidean argmin and cosine argmax agree on normalized
// features.
struct Codebook {
  int m = 0;
  int k = 0;
  int sub_dim = 0;
  std::vector<Vec> centroids;  // m*k entries, row-major (m outer)

  int dim() const { return m * sub_dim; }
  const Vec& centroid(int mi, int ki) const {
    return centroids[static_cast<std::size_t>(mi) * k + ki];
  }
  Vec& centroid(int mi, int ki) {
    return centroids[static_cast<std::size_t>(mi) * k + ki];
  }
};

// One sub-centroid index per subspace. K is bounded by 65536, so 16 bits
// always suffice in memory; files use one byte per index when K <= 256.
using PqCode = std::vector<std::uint16_t>;

struct CoarseQuantizer {
  std::vector<Vec> centroids;  // k' full-dimension centroids
};

// Per-query squared sub-distances, entries[m*k + j] = ||q_m - c_mj||^2.
struct AdcTable {
  int m = 0;
  int k = 0;
  std::vector<double> entries;
  double at(int mi, int ki) const {
    return entries[static_cast<std::size_t>(mi) * k + ki];
  }
};

// Inter-centroid squared distances, entries[(m*k + i)*k + j].
struct SdcTable {
  int m = 0;
  int k = 0;
  std::vector<double> entries;
  double at(int mi, int i, int j) const {
    return entries[(static_cast<std::size_t>(mi) * k + i) * k + j];
  }
};

struct PqIndex {
  Codebook codebook;
  std::vector<PqCode> codes;
  std::vector<std::uint32_t> ids;
  std::optional<std::vector<std::uint32_t>> labels;
  // Present iff the codes encode residuals against a coarse quantizer.
  std::optional<CoarseQuantizer> coarse;
  std::vector<std::uint32_t> coarse_ids;

  std::size_t size() const { return codes.size(); }
};

struct SearchHit {
  std::uint32_t id = 0;
  double distance = 0.0;
};

enum class DistanceMode { kSdc, kAdc };

struct CodebookTraining {
  Codebook codebook;
  std::vector<double> subspace_inertia;  // final k-means inertia per subspace
};

// Seed used for the k-means run of one subspace.
std::uint64_t subspace_seed(std::uint64_t seed, int subspace);

// Independent k-means per sub-vector slice; subspace s runs with
// subspace_seed(config.seed, s). Centroids are L2-normalized afterwards.
CodebookTraining train_codebooks(const std::vector<Vec>& vectors, int m, int k,
                                 const KMeansConfig& config);

PqCode encode(const Vec& vector, const Codebook& codebook);
Vec decode(const PqCode& code, const Codebook& codebook);

AdcTable build_adc_table(const Vec& query, const Codebook& codebook);
double adc_distance(const PqCode& code, const AdcTable& table);

SdcTable build_sdc_table(const Codebook& codebook);
double sdc_distance(const PqCode& a, const PqCode& b, const SdcTable& table);

// Exhaustive scan, ascending distance, ties broken by ascending id. The per
// record distance evaluations run in parallel; the ranking is identical for
// any thread count.
std::vector<SearchHit> search(const Vec& query, const PqIndex& index,
                              std::size_t top_n, DistanceMode mode,
                              int threads = 0);

// Coarse + residual encoding: q(x) = q_c(x) + q_p(x - q_c(x)).
std::pair<int, PqCode> encode_residual(const Vec& vector,
                                       const CoarseQuantizer& coarse,
                                       const Codebook& codebook);

struct StorageStats {
  std::size_t memory_floats = 0;
  std::size_t assign_ops = 0;
};

// M * K * sub_dim floats of codebook storage and the same count of
// multiply-accumulates per assignment.
StorageStats storage_stats(const Codebook& codebook);

PqIndex build_index(const std::vector<Vec>& vectors,
                    const std::vector<std::uint32_t>& ids,
                    const Codebook& codebook,
                    const std::optional<std::vector<std::uint32_t>>& labels,
                    int threads = 0);

// Codebook file: magic "PQCB", u16 version, u32 D/M/K, then centroids as
// 32-bit little-endian floats, row-major (m outer, k middle, dim inner).
void save_codebook(const Codebook& codebook, const std::string& path);
Codebook load_codebook(const std::string& path);

// Index file: magic "PQIX", u16 version, u32 N, u8 code_width, embedded
// codebook, code bytes, N u32 ids, u8 label flag + optional N u32 labels.
void save_index(const PqIndex& index, const std::string& path);
PqIndex load_index(const std::string& path);

}  // namespace pqlab
