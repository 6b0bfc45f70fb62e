#include "pqlab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pqlab/parallel.hpp"

namespace pqlab {

namespace {

void write_csv_open(std::ofstream& os, const std::string& path,
                    const char* op) {
  os.open(path);
  if (!os) {
    throw std::runtime_error(std::string(op) + ": cannot open " + path);
  }
}

std::vector<std::uint32_t> ranked_ids_for(const Vec& feature,
                                          const PqIndex& index,
                                          DistanceMode mode) {
  const std::vector<SearchHit> hits =
      search(feature, index, index.size(), mode, 1);
  std::vector<std::uint32_t> ids(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) ids[i] = hits[i].id;
  return ids;
}

}  // namespace

RelevanceJudge RelevanceJudge::from_dataset(const LabeledDataset& dataset,
                                            RelevanceMode mode) {
  RelevanceJudge judge;
  judge.mode = mode;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    judge.labels[dataset.ids[i]] = dataset.labels[i];
  }
  return judge;
}

const std::vector<std::uint32_t>& RelevanceJudge::labels_for(
    std::uint32_t id) const {
  const auto it = labels.find(id);
  if (it == labels.end()) {
    throw std::invalid_argument("RelevanceJudge: unknown id " +
                                std::to_string(id));
  }
  return it->second;
}

bool RelevanceJudge::relevant(const std::vector<std::uint32_t>& query_labels,
                              std::uint32_t id) const {
  const std::vector<std::uint32_t>& record = labels_for(id);
  for (std::uint32_t ql : query_labels) {
    for (std::uint32_t rl : record) {
      if (ql == rl) return true;
    }
  }
  return false;
}

double average_precision(const std::vector<std::uint32_t>& ranked_ids,
                         const RelevanceJudge& judge,
                         const std::vector<std::uint32_t>& query_labels) {
  if (ranked_ids.empty()) {
    throw std::invalid_argument("average_precision: empty ranking");
  }
  std::size_t relevant_seen = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < ranked_ids.size(); ++i) {
    if (judge.relevant(query_labels, ranked_ids[i])) {
      ++relevant_seen;
      acc += static_cast<double>(relevant_seen) / static_cast<double>(i + 1);
    }
  }
  if (relevant_seen == 0) return 0.0;
  return acc / static_cast<double>(relevant_seen);
}

double mean_average_precision(
    const std::vector<Vec>& query_features,
    const std::vector<std::vector<std::uint32_t>>& query_labels,
    const PqIndex& index, DistanceMode mode, const RelevanceJudge& judge,
    int threads) {
  if (query_features.empty()) {
    throw std::invalid_argument("mean_average_precision: empty query set");
  }
  if (query_features.size() != query_labels.size()) {
    throw std::invalid_argument(
        "mean_average_precision: features/labels length mismatch");
  }
  std::vector<double> ap(query_features.size());
  std::vector<std::string> errors(query_features.size());
  parallel_for(query_features.size(), threads, [&](std::size_t q) {
    try {
      ap[q] = average_precision(ranked_ids_for(query_features[q], index, mode),
                                judge, query_labels[q]);
    } catch (const std::exception& e) {
      errors[q] = e.what();
    }
  });
  for (std::size_t q = 0; q < errors.size(); ++q) {
    if (!errors[q].empty()) {
      throw std::runtime_error("mean_average_precision: query " +
                               std::to_string(q) + ": " + errors[q]);
    }
  }
  double total = 0.0;
  for (double v : ap) total += v;
  return total / static_cast<double>(ap.size());
}

PrCurve pr_curve(const std::vector<std::uint32_t>& ranked_ids,
                 const RelevanceJudge& judge,
                 const std::vector<std::uint32_t>& query_labels, int points) {
  if (points < 2) {
    throw std::invalid_argument("pr_curve: points must be >= 2");
  }
  std::size_t total_relevant = 0;
  std::vector<double> precision(ranked_ids.size());
  std::vector<double> recall_count(ranked_ids.size());
  for (std::size_t i = 0; i < ranked_ids.size(); ++i) {
    if (judge.relevant(query_labels, ranked_ids[i])) ++total_relevant;
    recall_count[i] = static_cast<double>(total_relevant);
    precision[i] =
        static_cast<double>(total_relevant) / static_cast<double>(i + 1);
  }

  PrCurve curve;
  if (total_relevant == 0) {
    curve.no_relevant = true;
    return curve;
  }

  for (int j = 0; j < points; ++j) {
    const double level = static_cast<double>(j) / (points - 1);
    double best = 0.0;
    for (std::size_t i = 0; i < ranked_ids.size(); ++i) {
      const double recall = recall_count[i] / static_cast<double>(total_relevant);
      if (recall >= level - 1e-12) best = std::max(best, precision[i]);
    }
    curve.points.push_back({level, best});
  }
  return curve;
}

std::vector<Vec> extract_features(const FeatureNet& net,
                                  const std::vector<Vec>& inputs,
                                  int threads) {
  std::vector<Vec> features(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    features[i] = forward(net, inputs[i]);
  });
  return features;
}

std::string mode_name(DistanceMode mode) {
  return mode == DistanceMode::kSdc ? "sdc" : "adc";
}

std::vector<WhiteboxCell> whitebox_experiment(const ExperimentGrid& grid,
                                              const LabeledDataset& database,
                                              const LabeledDataset& queries) {
  if (grid.bit_lengths.empty() || grid.models.empty() || grid.modes.empty()) {
    throw std::invalid_argument("whitebox_experiment: empty grid axis");
  }
  const RelevanceJudge judge =
      RelevanceJudge::from_dataset(database, RelevanceMode::kSingleLabel);

  std::vector<WhiteboxCell> cells;
  for (const WhiteboxModel& model : grid.models) {
    if (model.codebooks.size() != grid.bit_lengths.size()) {
      throw std::invalid_argument("whitebox_experiment: model '" + model.name +
                                  "' codebooks do not match bit_lengths");
    }
    const std::vector<Vec> db_features =
        extract_features(model.net, database.vectors, grid.threads);
    const std::vector<Vec> clean_features =
        extract_features(model.net, queries.vectors, grid.threads);

    for (std::size_t bi = 0; bi < grid.bit_lengths.size(); ++bi) {
      const Codebook& cb = model.codebooks[bi];
      const PqIndex index = build_index(db_features, database.ids, cb,
                                        std::nullopt, grid.threads);
      for (DistanceMode mode : grid.modes) {
        cells.push_back({model.name, grid.bit_lengths[bi], mode_name(mode),
                         "clean",
                         mean_average_precision(clean_features, queries.labels,
                                                index, mode, judge,
                                                grid.threads)});
      }
      for (const AttackConfig& attack : grid.attacks) {
        std::vector<AttackReport> reports;
        try {
          reports = attack_batch(queries.vectors, model.net, cb, grid.soft,
                                 attack, grid.threads);
        } catch (const std::exception& e) {
          throw std::runtime_error(
              "whitebox_experiment: model '" + model.name + "', bits " +
              std::to_string(grid.bit_lengths[bi]) + ", attack " +
              attack_loss_name(attack.loss) + ": " + e.what());
        }
        std::vector<Vec> adv(reports.size());
        for (std::size_t i = 0; i < reports.size(); ++i) {
          adv[i] = std::move(reports[i].adversarial);
        }
        const std::vector<Vec> adv_features =
            extract_features(model.net, adv, grid.threads);
        for (DistanceMode mode : grid.modes) {
          cells.push_back({model.name, grid.bit_lengths[bi], mode_name(mode),
                           attack_loss_name(attack.loss),
                           mean_average_precision(adv_features, queries.labels,
                                                  index, mode, judge,
                                                  grid.threads)});
        }
      }
    }
  }
  return cells;
}

std::vector<BitsTransferCell> bits_transfer_experiment(
    int source_bits, const std::vector<int>& target_bits_list,
    const FeatureNet& net,
    const std::vector<std::pair<int, Codebook>>& codebooks_by_bits,
    const AttackConfig& attack, const SoftPqConfig& soft,
    const LabeledDataset& database, const LabeledDataset& queries,
    int threads) {
  auto find_codebook = [&](int bits) -> const Codebook& {
    for (const auto& [b, cb] : codebooks_by_bits) {
      if (b == bits) return cb;
    }
    throw std::invalid_argument("bits_transfer_experiment: no codebook for " +
                                std::to_string(bits) + " bits");
  };

  const RelevanceJudge judge =
      RelevanceJudge::from_dataset(database, RelevanceMode::kSingleLabel);
  const std::vector<Vec> db_features =
      extract_features(net, database.vectors, threads);
  const std::vector<Vec> clean_features =
      extract_features(net, queries.vectors, threads);

  const Codebook& source_cb = find_codebook(source_bits);
  std::vector<AttackReport> reports =
      attack_batch(queries.vectors, net, source_cb, soft, attack, threads);
  std::vector<Vec> adv(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    adv[i] = std::move(reports[i].adversarial);
  }
  const std::vector<Vec> adv_features = extract_features(net, adv, threads);

  std::vector<BitsTransferCell> cells;
  for (int target_bits : target_bits_list) {
    const Codebook& target_cb = find_codebook(target_bits);
    const PqIndex index =
        build_index(db_features, database.ids, target_cb, std::nullopt,
                    threads);
    for (DistanceMode mode : {DistanceMode::kSdc, DistanceMode::kAdc}) {
      BitsTransferCell cell;
      cell.source_bits = source_bits;
      cell.target_bits = target_bits;
      cell.mode = mode_name(mode);
      cell.clean_map = mean_average_precision(
          clean_features, queries.labels, index, mode, judge, threads);
      cell.attacked_map = mean_average_precision(
          adv_features, queries.labels, index, mode, judge, threads);
      cells.push_back(cell);
    }
  }
  return cells;
}

std::vector<ModelTransferCell> model_transfer_experiment(
    const std::vector<TransferModel>& source_models,
    const std::vector<TransferModel>& target_models,
    const AttackConfig& attack, const SoftPqConfig& soft,
    const LabeledDataset& database, const LabeledDataset& queries,
    int threads) {
  if (source_models.empty() || target_models.empty()) {
    throw std::invalid_argument("model_transfer_experiment: empty model list");
  }
  const RelevanceJudge judge =
      RelevanceJudge::from_dataset(database, RelevanceMode::kSingleLabel);

  // Target-side indexes and clean rows.
  std::vector<PqIndex> target_indexes;
  std::vector<ModelTransferCell> cells;
  for (const TransferModel& target : target_models) {
    const std::vector<Vec> db_features =
        extract_features(target.net, database.vectors, threads);
    target_indexes.push_back(build_index(db_features, database.ids,
                                         target.codebook, std::nullopt,
                                         threads));
    const std::vector<Vec> clean_features =
        extract_features(target.net, queries.vectors, threads);
    for (DistanceMode mode : {DistanceMode::kSdc, DistanceMode::kAdc}) {
      cells.push_back({"clean", target.name, mode_name(mode),
                       mean_average_precision(clean_features, queries.labels,
                                              target_indexes.back(), mode,
                                              judge, threads)});
    }
  }

  for (const TransferModel& source : source_models) {
    std::vector<AttackReport> reports = attack_batch(
        queries.vectors, source.net, source.codebook, soft, attack, threads);
    std::vector<Vec> adv(reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      adv[i] = std::move(reports[i].adversarial);
    }
    for (std::size_t ti = 0; ti < target_models.size(); ++ti) {
      const std::vector<Vec> adv_features =
          extract_features(target_models[ti].net, adv, threads);
      for (DistanceMode mode : {DistanceMode::kSdc, DistanceMode::kAdc}) {
        cells.push_back({source.name, target_models[ti].name, mode_name(mode),
                         mean_average_precision(adv_features, queries.labels,
                                                target_indexes[ti], mode,
                                                judge, threads)});
      }
    }
  }
  return cells;
}

void write_whitebox_csv(const std::vector<WhiteboxCell>& cells,
                        const std::string& path) {
  std::ofstream os;
  write_csv_open(os, path, "write_whitebox_csv");
  os << "model,bits,mode,attack,map\n";
  for (const WhiteboxCell& c : cells) {
    os << c.model << ',' << c.bits << ',' << c.mode << ',' << c.attack << ','
       << c.map << "\n";
  }
}

void write_bits_transfer_csv(const std::vector<BitsTransferCell>& cells,
                             const std::string& path) {
  std::ofstream os;
  write_csv_open(os, path, "write_bits_transfer_csv");
  os << "source_bits,target_bits,mode,clean_map,attacked_map\n";
  for (const BitsTransferCell& c : cells) {
    os << c.source_bits << ',' << c.target_bits << ',' << c.mode << ','
       << c.clean_map << ',' << c.attacked_map << "\n";
  }
}

void write_model_transfer_csv(const std::vector<ModelTransferCell>& cells,
                              const std::string& path) {
  std::ofstream os;
  write_csv_open(os, path, "write_model_transfer_csv");
  os << "source,target,mode,map\n";
  for (const ModelTransferCell& c : cells) {
    os << c.source << ',' << c.target << ',' << c.mode << ',' << c.map << "\n";
  }
}

void write_pr_curve_csv(const PrCurve& curve, const std::string& path) {
  std::ofstream os;
  write_csv_open(os, path, "write_pr_curve_csv");
  os << "recall,precision\n";
  for (const auto& [recall, precision] : curve.points) {
    os << recall << ',' << precision << "\n";
  }
}

}  // namespace pqlab
