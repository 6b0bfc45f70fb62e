#pragma once

#include <cstdint>
#include <vector>

#include "pqlab/dataio.hpp"
#include "pqlab/featnet.hpp"
#include "pqlab/numkit.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/softpq.hpp"

namespace pqlab {

// Positions into the dataset arrays. The positive shares at least one label
// with the anchor; the negative shares none.
struct Triplet {
  std::uint32_t anchor_id = 0;
  std::uint32_t positive_id = 0;
  std::uint32_t negative_id = 0;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr_net = 0.05;
  double lr_codebook = 0.01;
  double alpha = 1.0;  // soft-quantizer temperature during training
  std::uint64_t seed = 0;
  int threads = 0;
};

// Normalized asymmetric triplet score 1 / (1 + e^(<x,s-> - <x,s+>)).
// The value increases toward 1 as the anchor moves toward the quantized
// positive; training therefore descends its complement (see train()).
double asymmetric_triplet_loss(const Vec& x_anchor, const Vec& s_pos,
                               const Vec& s_neg);

// Uniformly sampled valid triplets, deterministic for a given rng state.
std::vector<Triplet> sample_triplets(
    const std::vector<std::vector<std::uint32_t>>& labels, int count,
    Rng& rng);

struct TrainResult {
  FeatureNet net;
  Codebook codebook;
  // Mean per-epoch logistic loss sigma(<x,s-> - <x,s+>), the quantity the
  // SGD updates descend; decreases as retrieval quality improves.
  std::vector<double> loss_history;
  // Mean per-epoch raw margin <x,s-> - <x,s+>, kept as a diagnostic.
  std::vector<double> margin_history;
};

// Joint SGD on net parameters and codebook centroids through the soft
// quantizer. Anchors use the raw feature; positives/negatives are
// soft-quantized. Centroids are re-normalized to unit L2 after each update.
TrainResult train(const LabeledDataset& dataset, FeatureNet net,
                  Codebook codebook, const TrainConfig& config);

}  // namespace pqlab
