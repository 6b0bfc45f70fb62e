#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pqlab/attack.hpp"
#include "pqlab/dataio.hpp"
#include "pqlab/featnet.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/softpq.hpp"

namespace pqlab {

enum class RelevanceMode { kSingleLabel, kMultiLabel };

// Relevant iff the query and the record share at least one label.
struct RelevanceJudge {
  RelevanceMode mode = RelevanceMode::kSingleLabel;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> labels;

  static RelevanceJudge from_dataset(const LabeledDataset& dataset,
                                     RelevanceMode mode);
  const std::vector<std::uint32_t>& labels_for(std::uint32_t id) const;
  bool relevant(const std::vector<std::uint32_t>& query_labels,
                std::uint32_t id) const;
};

// AP = (1/R) * sum over relevant positions i of (relevant_up_to_i / i); 0
// when the list holds no relevant record.
double average_precision(const std::vector<std::uint32_t>& ranked_ids,
                         const RelevanceJudge& judge,
                         const std::vector<std::uint32_t>& query_labels);

// Mean AP over full-database rankings of the given query features.
double mean_average_precision(
    const std::vector<Vec>& query_features,
    const std::vector<std::vector<std::uint32_t>>& query_labels,
    const PqIndex& index, DistanceMode mode, const RelevanceJudge& judge,
    int threads = 0);

struct PrCurve {
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  bool no_relevant = false;
};

// Interpolated precision at equally spaced recall levels (11-point by
// default): precision(r) = max precision at any recall >= r.
PrCurve pr_curve(const std::vector<std::uint32_t>& ranked_ids,
                 const RelevanceJudge& judge,
                 const std::vector<std::uint32_t>& query_labels,
                 int points = 11);

std::vector<Vec> extract_features(const FeatureNet& net,
                                  const std::vector<Vec>& inputs,
                                  int threads = 0);

std::string mode_name(DistanceMode mode);

// ---- Experiment protocols -------------------------------------------------

struct WhiteboxModel {
  std::string name;
  FeatureNet net;
  std::vector<Codebook> codebooks;  // aligned with ExperimentGrid.bit_lengths
};

struct ExperimentGrid {
  std::vector<int> bit_lengths;
  std::vector<WhiteboxModel> models;
  std::vector<AttackConfig> attacks;
  std::vector<DistanceMode> modes;
  SoftPqConfig soft;
  int threads = 0;
};

struct WhiteboxCell {
  std::string model;
  int bits = 0;
  std::string mode;
  std::string attack;  // "clean" for the unattacked row
  double map = 0.0;
};

// Per cell: craft adversarial queries against that model/codebook pair and
// evaluate mAP in the requested mode; clean rows included.
std::vector<WhiteboxCell> whitebox_experiment(const ExperimentGrid& grid,
                                              const LabeledDataset& database,
                                              const LabeledDataset& queries);

struct BitsTransferCell {
  int source_bits = 0;
  int target_bits = 0;
  std::string mode;
  double clean_map = 0.0;
  double attacked_map = 0.0;
};

// Adversarial queries crafted against the source-bits codebook, evaluated
// against every target codebook of the same net in SDC and ADC modes.
std::vector<BitsTransferCell> bits_transfer_experiment(
    int source_bits, const std::vector<int>& target_bits_list,
    const FeatureNet& net,
    const std::vector<std::pair<int, Codebook>>& codebooks_by_bits,
    const AttackConfig& attack, const SoftPqConfig& soft,
    const LabeledDataset& database, const LabeledDataset& queries,
    int threads = 0);

struct TransferModel {
  std::string name;
  FeatureNet net;
  Codebook codebook;
};

struct ModelTransferCell {
  std::string source;  // "clean" for the unattacked row
  std::string target;
  std::string mode;
  double map = 0.0;
};

// Queries crafted on each source model, evaluated on every target model.
std::vector<ModelTransferCell> model_transfer_experiment(
    const std::vector<TransferModel>& source_models,
    const std::vector<TransferModel>& target_models,
    const AttackConfig& attack, const SoftPqConfig& soft,
    const LabeledDataset& database, const LabeledDataset& queries,
    int threads = 0);

// CSV emission, one header row naming the axes.
void write_whitebox_csv(const std::vector<WhiteboxCell>& cells,
                        const std::string& path);
void write_bits_transfer_csv(const std::vector<BitsTransferCell>& cells,
                             const std::string& path);
void write_model_transfer_csv(const std::vector<ModelTransferCell>& cells,
                              const std::string& path);
void write_pr_curve_csv(const PrCurve& curve, const std::string& path);

}  // namespace pqlab
