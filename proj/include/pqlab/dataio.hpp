#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pqlab/numkit.hpp"

namespace pqlab {

struct LabeledDataset {
  std::vector<Vec> vectors;
  std::vector<std::vector<std::uint32_t>> labels;  // label set per record
  std::vector<std::uint32_t> ids;
  int dim = 0;

  std::size_t size() const { return vectors.size(); }
};

struct SyntheticSpec {
  int classes = 10;
  int per_class = 100;
  int dim = 32;
  double separation = 10.0;  // inter-mean distance in units of sigma
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

// Class means on a random orthonormal frame scaled so every pair of means is
// exactly separation * sigma apart; points are mean + N(0, sigma^2 I).
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

struct SplitResult {
  LabeledDataset database;
  LabeledDataset queries;
  // Set when some label has no representative left in the database.
  bool class_missing_warning = false;
};

// Disjoint seeded split preserving original ids. Stratified mode keeps the
// per-class query fraction within one record of the global fraction.
SplitResult split(const LabeledDataset& dataset, std::size_t n_queries,
                  std::uint64_t seed, bool stratified = false);

enum class VectorFormat { kFvecs, kCsv };

// fvecs-style record: i32 dim then dim f32, little-endian.
void save_fvecs(const std::vector<Vec>& vectors, const std::string& path);
std::vector<Vec> load_fvecs(const std::string& path);

// Single-label sidecar: N x u32. Multi-label sidecar: per record u8 count
// followed by count u32 labels.
void save_labels_single(const std::vector<std::vector<std::uint32_t>>& labels,
                        const std::string& path);
std::vector<std::vector<std::uint32_t>> load_labels_single(
    const std::string& path, std::size_t n);
void save_labels_multi(const std::vector<std::vector<std::uint32_t>>& labels,
                       const std::string& path);
std::vector<std::vector<std::uint32_t>> load_labels_multi(
    const std::string& path, std::size_t n);

// Dataset persistence. For fvecs the labels go to <path>.labels (single
// label per record) or <path>.mlabels (label sets); CSV is self-contained
// with header "id,label,v0..v{d-1}". Round trips preserve values at 32-bit
// precision and record order.
void save_vectors(const LabeledDataset& dataset, const std::string& path,
                  VectorFormat format);
LabeledDataset load_vectors(const std::string& path, VectorFormat format);

}  // namespace pqlab
