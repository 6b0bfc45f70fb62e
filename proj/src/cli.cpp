#include "pqlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "pqlab/attack.hpp"
#include "pqlab/dataio.hpp"
#include "pqlab/dpqtrain.hpp"
#include "pqlab/evalkit.hpp"
#include "pqlab/featnet.hpp"
#include "pqlab/numkit.hpp"
#include "pqlab/parallel.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/softpq.hpp"

namespace pqlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;

  SyntheticSpec dataset;
  std::size_t n_queries = 100;
  bool stratified = true;

  std::vector<int> net_hidden = {64, 32};
  int feature_dim = 24;

  TrainConfig train;

  int codebook_m = 4;
  int codebook_k = 256;
  SoftPqConfig soft;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;

  AttackConfig attack;

  std::vector<std::string> eval_attacks = {"basic", "apd", "aod"};
  std::vector<std::string> eval_modes = {"sdc", "adc"};
  int pr_points = 11;

  int transfer_source_m = 2;
  std::vector<int> transfer_target_m = {3, 4};
  std::vector<std::uint64_t> transfer_net_seeds = {1, 2};
};

json manifest_to_json(const Manifest& m) {
  json j;
  j["seed"] = m.seed;
  j["out_dir"] = m.out_dir;
  j["threads"] = m.threads;
  j["dataset"] = {{"classes", m.dataset.classes},
                  {"per_class", m.dataset.per_class},
                  {"dim", m.dataset.dim},
                  {"separation", m.dataset.separation},
                  {"sigma", m.dataset.sigma},
                  {"n_queries", m.n_queries},
                  {"stratified", m.stratified}};
  j["net"] = {{"hidden", m.net_hidden}, {"feature_dim", m.feature_dim}};
  j["train"] = {{"epochs", m.train.epochs},
                {"batch_size", m.train.batch_size},
                {"lr_net", m.train.lr_net},
                {"lr_codebook", m.train.lr_codebook},
                {"alpha", m.train.alpha}};
  j["codebook"] = {{"m", m.codebook_m},
                   {"k", m.codebook_k},
                   {"alpha", m.soft.alpha},
                   {"normalize_subvectors", m.soft.normalize_subvectors},
                   {"kmeans_max_iters", m.kmeans_max_iters},
                   {"kmeans_tol", m.kmeans_tol}};
  j["attack"] = {{"loss", attack_loss_name(m.attack.loss)},
                 {"eta", m.attack.eta},
                 {"step_size", m.attack.step_size},
                 {"iterations", m.attack.iterations},
                 {"clip_min", m.attack.clip_min},
                 {"clip_max", m.attack.clip_max},
                 {"step_rule",
                  m.attack.step_rule == StepRule::kSign ? "sign" : "raw"}};
  j["eval"] = {{"attacks", m.eval_attacks},
               {"modes", m.eval_modes},
               {"pr_points", m.pr_points}};
  j["transfer_bits"] = {{"source_m", m.transfer_source_m},
                        {"target_m", m.transfer_target_m}};
  j["transfer_models"] = {{"net_seeds", m.transfer_net_seeds}};
  return j;
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    m.seed = j.value("seed", m.seed);
    m.out_dir = j.value("out_dir", m.out_dir);
    m.threads = j.value("threads", m.threads);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      m.dataset.classes = d.value("classes", m.dataset.classes);
      m.dataset.per_class = d.value("per_class", m.dataset.per_class);
      m.dataset.dim = d.value("dim", m.dataset.dim);
      m.dataset.separation = d.value("separation", m.dataset.separation);
      m.dataset.sigma = d.value("sigma", m.dataset.sigma);
      m.n_queries = d.value("n_queries", m.n_queries);
      m.stratified = d.value("stratified", m.stratified);
    }
    if (j.contains("net")) {
      const json& d = j["net"];
      m.net_hidden = d.value("hidden", m.net_hidden);
      m.feature_dim = d.value("feature_dim", m.feature_dim);
    }
    if (j.contains("train")) {
      const json& d = j["train"];
      m.train.epochs = d.value("epochs", m.train.epochs);
      m.train.batch_size = d.value("batch_size", m.train.batch_size);
      m.train.lr_net = d.value("lr_net", m.train.lr_net);
      m.train.lr_codebook = d.value("lr_codebook", m.train.lr_codebook);
      m.train.alpha = d.value("alpha", m.train.alpha);
    }
    if (j.contains("codebook")) {
      const json& d = j["codebook"];
      m.codebook_m = d.value("m", m.codebook_m);
      m.codebook_k = d.value("k", m.codebook_k);
      m.soft.alpha = d.value("alpha", m.soft.alpha);
      m.soft.normalize_subvectors =
          d.value("normalize_subvectors", m.soft.normalize_subvectors);
      m.kmeans_max_iters = d.value("kmeans_max_iters", m.kmeans_max_iters);
      m.kmeans_tol = d.value("kmeans_tol", m.kmeans_tol);
    }
    if (j.contains("attack")) {
      const json& d = j["attack"];
      m.attack.loss =
          attack_loss_from_name(d.value("loss", attack_loss_name(m.attack.loss)));
      m.attack.eta = d.value("eta", m.attack.eta);
      m.attack.step_size = d.value("step_size", m.attack.step_size);
      m.attack.iterations = d.value("iterations", m.attack.iterations);
      m.attack.clip_min = d.value("clip_min", m.attack.clip_min);
      m.attack.clip_max = d.value("clip_max", m.attack.clip_max);
      const std::string rule = d.value("step_rule", std::string("sign"));
      if (rule == "sign") {
        m.attack.step_rule = StepRule::kSign;
      } else if (rule == "raw") {
        m.attack.step_rule = StepRule::kRawGradient;
      } else {
        throw UsageError("manifest: unknown step_rule '" + rule + "'");
      }
    }
    if (j.contains("eval")) {
      const json& d = j["eval"];
      m.eval_attacks = d.value("attacks", m.eval_attacks);
      m.eval_modes = d.value("modes", m.eval_modes);
      m.pr_points = d.value("pr_points", m.pr_points);
    }
    if (j.contains("transfer_bits")) {
      const json& d = j["transfer_bits"];
      m.transfer_source_m = d.value("source_m", m.transfer_source_m);
      m.transfer_target_m = d.value("target_m", m.transfer_target_m);
    }
    if (j.contains("transfer_models")) {
      const json& d = j["transfer_models"];
      m.transfer_net_seeds = d.value("net_seeds", m.transfer_net_seeds);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("manifest: malformed field: ") + e.what());
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("missing manifest file " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw UsageError("manifest " + path + ": parse error: " + e.what());
  }
  return manifest_from_json(j);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

DistanceMode mode_from_name(const std::string& name) {
  if (name == "sdc") return DistanceMode::kSdc;
  if (name == "adc") return DistanceMode::kAdc;
  throw UsageError("unknown distance mode '" + name + "'");
}

struct Paths {
  fs::path out;
  explicit Paths(const std::string& out_dir) : out(out_dir) {}
  std::string manifest() const { return (out / "manifest.json").string(); }
  std::string database() const { return (out / "database.fvecs").string(); }
  std::string queries() const { return (out / "queries.fvecs").string(); }
  std::string net() const { return (out / "net.fnet").string(); }
  std::string codebook() const { return (out / "codebook.pqcb").string(); }
  std::string codebook_m(int m) const {
    return (out / ("codebook_m" + std::to_string(m) + ".pqcb")).string();
  }
  std::string net_seed(std::uint64_t s) const {
    return (out / ("net_s" + std::to_string(s) + ".fnet")).string();
  }
  std::string codebook_seed(std::uint64_t s) const {
    return (out / ("codebook_s" + std::to_string(s) + ".pqcb")).string();
  }
  std::string index() const { return (out / "index.pqix").string(); }
  std::string loss_csv() const { return (out / "loss.csv").string(); }
  std::string ranked_csv() const { return (out / "ranked.csv").string(); }
  std::string query_map_csv() const { return (out / "query_map.csv").string(); }
  std::string adversarial() const {
    return (out / "adversarial.fvecs").string();
  }
  std::string attack_csv() const {
    return (out / "attack_report.csv").string();
  }
  std::string eval_map_csv() const { return (out / "eval_map.csv").string(); }
  std::string pr_csv(const std::string& tag) const {
    return (out / ("pr_" + tag + ".csv")).string();
  }
  std::string bits_csv() const { return (out / "transfer_bits.csv").string(); }
  std::string models_csv() const {
    return (out / "transfer_models.csv").string();
  }
};

void require_artifact(const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) {
    throw MissingArtifact("missing artifact " + path + " (" + hint + ")");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Loads the (net, codebook) training inputs and runs the joint pipeline.
struct TrainedModel {
  FeatureNet net;
  Codebook codebook;
  std::vector<double> loss_history;
};

TrainedModel run_training(const Manifest& m, const LabeledDataset& database,
                          std::uint64_t net_seed) {
  if (m.feature_dim % m.codebook_m != 0) {
    throw UsageError("manifest: codebook m=" + std::to_string(m.codebook_m) +
                     " does not divide feature_dim=" +
                     std::to_string(m.feature_dim));
  }
  FeatureNet net = make_mlp(database.dim, m.net_hidden, m.feature_dim, true,
                            net_seed);

  std::vector<Vec> features = extract_features(net, database.vectors,
                                               m.threads);
  KMeansConfig kcfg;
  kcfg.k = m.codebook_k;
  kcfg.max_iters = m.kmeans_max_iters;
  kcfg.tol = m.kmeans_tol;
  kcfg.seed = stage_seed(m.seed, "codebook-init");
  kcfg.threads = m.threads;
  Codebook codebook =
      train_codebooks(features, m.codebook_m, m.codebook_k, kcfg).codebook;

  TrainConfig tcfg = m.train;
  tcfg.seed = stage_seed(m.seed, "train");
  tcfg.threads = m.threads;
  try {
    TrainResult result = train(database, std::move(net), std::move(codebook),
                               tcfg);
    return {std::move(result.net), std::move(result.codebook),
            std::move(result.loss_history)};
  } catch (const std::runtime_error& e) {
    throw NumericFailure(e.what());
  }
}

// ---- subcommands ----------------------------------------------------------

int cmd_gen_data(const Manifest& m) {
  const Paths paths(m.out_dir);
  fs::create_directories(paths.out);

  SyntheticSpec spec = m.dataset;
  spec.seed = stage_seed(m.seed, "gen-data");
  const LabeledDataset dataset = generate_synthetic(spec);
  if (m.n_queries >= dataset.size()) {
    throw UsageError("gen-data: n_queries (" + std::to_string(m.n_queries) +
                     ") must be smaller than the dataset (" +
                     std::to_string(dataset.size()) + ")");
  }
  const SplitResult parts =
      split(dataset, m.n_queries, stage_seed(m.seed, "split"), m.stratified);
  if (parts.class_missing_warning) {
    std::cerr << "gen-data: warning: some class is absent from the database"
              << std::endl;
  }
  save_vectors(parts.database, paths.database(), VectorFormat::kFvecs);
  save_vectors(parts.queries, paths.queries(), VectorFormat::kFvecs);

  std::ofstream os(paths.manifest());
  if (!os) throw std::runtime_error("gen-data: cannot write manifest");
  os << manifest_to_json(m).dump(2) << "\n";
  std::cout << "gen-data: wrote " << parts.database.size() << " database / "
            << parts.queries.size() << " query records to " << m.out_dir
            << std::endl;
  return 0;
}

int cmd_train(const Manifest& m) {
  const Paths paths(m.out_dir);
  require_artifact(paths.database(), "run gen-data first");
  const LabeledDataset database =
      load_vectors(paths.database(), VectorFormat::kFvecs);

  const TrainedModel model =
      run_training(m, database, stage_seed(m.seed, "net-init"));
  save_weights(model.net, paths.net());
  save_codebook(model.codebook, paths.codebook());

  std::ofstream os(paths.loss_csv());
  if (!os) throw std::runtime_error("train: cannot write loss csv");
  os << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < model.loss_history.size(); ++e) {
    os << e << ',' << fmt(model.loss_history[e]) << "\n";
  }
  std::cout << "train: wrote " << paths.net() << ", " << paths.codebook()
            << std::endl;
  return 0;
}

int cmd_build_index(const Manifest& m) {
  const Paths paths(m.out_dir);
  require_artifact(paths.database(), "run gen-data first");
  require_artifact(paths.net(), "run train first");
  require_artifact(paths.codebook(), "run train first");

  const LabeledDataset database =
      load_vectors(paths.database(), VectorFormat::kFvecs);
  const FeatureNet net = load_weights(paths.net());
  const Codebook codebook = load_codebook(paths.codebook());

  const std::vector<Vec> features =
      extract_features(net, database.vectors, m.threads);
  std::vector<std::uint32_t> flat_labels(database.size());
  for (std::size_t i = 0; i < database.size(); ++i) {
    flat_labels[i] = database.labels[i].empty() ? 0 : database.labels[i][0];
  }
  const PqIndex index =
      build_index(features, database.ids, codebook, flat_labels, m.threads);
  save_index(index, paths.index());
  std::cout << "build-index: wrote " << paths.index() << " (" << index.size()
            << " codes)" << std::endl;
  return 0;
}

int cmd_query(const Manifest& m, const std::string& mode_name_arg,
              std::size_t top_n, const std::string& input_override) {
  const Paths paths(m.out_dir);
  require_artifact(paths.index(), "run build-index first");
  require_artifact(paths.net(), "run train first");
  const std::string query_path =
      input_override.empty() ? paths.queries() : input_override;
  require_artifact(query_path, "run gen-data first");

  const PqIndex index = load_index(paths.index());
  const FeatureNet net = load_weights(paths.net());
  const LabeledDataset queries =
      load_vectors(query_path, VectorFormat::kFvecs);
  const DistanceMode mode = mode_from_name(mode_name_arg);

  const std::vector<Vec> features =
      extract_features(net, queries.vectors, m.threads);
  const std::size_t n = top_n == 0 ? index.size() : top_n;

  std::ofstream os(paths.ranked_csv());
  if (!os) throw std::runtime_error("query: cannot write ranked csv");
  os << "query_id,rank,id,distance\n";
  std::vector<std::vector<SearchHit>> all_hits(features.size());
  for (std::size_t q = 0; q < features.size(); ++q) {
    all_hits[q] = search(features[q], index, n, mode, m.threads);
  }
  for (std::size_t q = 0; q < features.size(); ++q) {
    for (std::size_t r = 0; r < all_hits[q].size(); ++r) {
      os << queries.ids[q] << ',' << r << ',' << all_hits[q][r].id << ','
         << fmt(all_hits[q][r].distance) << "\n";
    }
  }

  // mAP against the index labels when both sides carry labels.
  if (index.labels &&
      !queries.labels.empty() && !queries.labels[0].empty()) {
    LabeledDataset index_side;
    index_side.ids = index.ids;
    for (std::uint32_t l : *index.labels) index_side.labels.push_back({l});
    index_side.vectors.resize(index.ids.size());
    const RelevanceJudge judge =
        RelevanceJudge::from_dataset(index_side, RelevanceMode::kSingleLabel);
    const double map = mean_average_precision(features, queries.labels, index,
                                              mode, judge, m.threads);
    std::ofstream ms(paths.query_map_csv());
    ms << "mode,map\n" << mode_name_arg << ',' << fmt(map) << "\n";
    std::cout << "query: mAP(" << mode_name_arg << ") = " << map << std::endl;
  }
  std::cout << "query: wrote " << paths.ranked_csv() << std::endl;
  return 0;
}

int cmd_attack(const Manifest& m) {
  const Paths paths(m.out_dir);
  require_artifact(paths.net(), "run train first");
  require_artifact(paths.codebook(), "run train first");
  require_artifact(paths.queries(), "run gen-data first");

  const FeatureNet net = load_weights(paths.net());
  const Codebook codebook = load_codebook(paths.codebook());
  const LabeledDataset queries =
      load_vectors(paths.queries(), VectorFormat::kFvecs);

  AttackConfig acfg = m.attack;
  acfg.seed = stage_seed(m.seed, "attack");
  std::vector<AttackReport> reports;
  try {
    reports = attack_batch(queries.vectors, net, codebook, m.soft, acfg,
                           m.threads);
  } catch (const std::runtime_error& e) {
    throw NumericFailure(e.what());
  }

  LabeledDataset adv = queries;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    adv.vectors[i] = reports[i].adversarial;
  }
  save_vectors(adv, paths.adversarial(), VectorFormat::kFvecs);

  std::ofstream os(paths.attack_csv());
  if (!os) throw std::runtime_error("attack: cannot write report csv");
  os << "id,loss_init,loss_final,kl_to_clean,linf_norm\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    os << queries.ids[i] << ',' << fmt(reports[i].loss_trace.front()) << ','
       << fmt(reports[i].loss_trace.back()) << ','
       << fmt(reports[i].kl_to_clean) << ',' << fmt(reports[i].linf_norm)
       << "\n";
  }
  std::cout << "attack: wrote " << paths.adversarial() << " and "
            << paths.attack_csv() << std::endl;
  return 0;
}

PrCurve mean_pr_curve(const std::vector<Vec>& features,
                      const LabeledDataset& queries, const PqIndex& index,
                      DistanceMode mode, const RelevanceJudge& judge,
                      int points, int threads) {
  std::vector<PrCurve> curves(features.size());
  parallel_for(features.size(), threads, [&](std::size_t q) {
    const std::vector<SearchHit> hits =
        search(features[q], index, index.size(), mode, 1);
    std::vector<std::uint32_t> ids(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) ids[i] = hits[i].id;
    curves[q] = pr_curve(ids, judge, queries.labels[q], points);
  });
  PrCurve mean;
  std::size_t contributing = 0;
  for (const PrCurve& c : curves) {
    if (c.no_relevant) continue;
    if (mean.points.empty()) {
      mean.points = c.points;
    } else {
      for (std::size_t i = 0; i < mean.points.size(); ++i) {
        mean.points[i].second += c.points[i].second;
      }
    }
    ++contributing;
  }
  if (contributing == 0) {
    mean.no_relevant = true;
    return mean;
  }
  for (auto& [recall, precision] : mean.points) {
    precision /= static_cast<double>(contributing);
  }
  return mean;
}

int cmd_eval(const Manifest& m) {
  const Paths paths(m.out_dir);
  require_artifact(paths.database(), "run gen-data first");
  require_artifact(paths.queries(), "run gen-data first");
  require_artifact(paths.net(), "run train first");
  require_artifact(paths.codebook(), "run train first");

  const LabeledDataset database =
      load_vectors(paths.database(), VectorFormat::kFvecs);
  const LabeledDataset queries =
      load_vectors(paths.queries(), VectorFormat::kFvecs);

  ExperimentGrid grid;
  grid.bit_lengths = {8 * m.codebook_m};
  grid.soft = m.soft;
  grid.threads = m.threads;
  for (const std::string& mode : m.eval_modes) {
    grid.modes.push_back(mode_from_name(mode));
  }
  WhiteboxModel model;
  model.name = "net";
  model.net = load_weights(paths.net());
  model.codebooks = {load_codebook(paths.codebook())};
  grid.models.push_back(std::move(model));
  for (const std::string& name : m.eval_attacks) {
    AttackConfig acfg = m.attack;
    acfg.loss = attack_loss_from_name(name);
    acfg.seed = stage_seed(m.seed, "attack-" + name);
    grid.attacks.push_back(acfg);
  }

  std::vector<WhiteboxCell> cells;
  try {
    cells = whitebox_experiment(grid, database, queries);
  } catch (const std::runtime_error& e) {
    throw NumericFailure(e.what());
  }
  write_whitebox_csv(cells, paths.eval_map_csv());

  // Mean PR curves for the clean queries and each attack.
  const FeatureNet& net = grid.models[0].net;
  const Codebook& codebook = grid.models[0].codebooks[0];
  const RelevanceJudge judge =
      RelevanceJudge::from_dataset(database, RelevanceMode::kSingleLabel);
  const std::vector<Vec> db_features =
      extract_features(net, database.vectors, m.threads);
  const PqIndex index =
      build_index(db_features, database.ids, codebook, std::nullopt,
                  m.threads);
  const DistanceMode pr_mode = grid.modes[0];

  const std::vector<Vec> clean_features =
      extract_features(net, queries.vectors, m.threads);
  write_pr_curve_csv(mean_pr_curve(clean_features, queries, index, pr_mode,
                                   judge, m.pr_points, m.threads),
                     paths.pr_csv("clean"));
  for (const AttackConfig& acfg : grid.attacks) {
    std::vector<AttackReport> reports =
        attack_batch(queries.vectors, net, codebook, m.soft, acfg, m.threads);
    std::vector<Vec> adv(reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      adv[i] = std::move(reports[i].adversarial);
    }
    const std::vector<Vec> adv_features =
        extract_features(net, adv, m.threads);
    write_pr_curve_csv(mean_pr_curve(adv_features, queries, index, pr_mode,
                                     judge, m.pr_points, m.threads),
                       paths.pr_csv(attack_loss_name(acfg.loss)));
  }

  std::cout << "eval: wrote " << paths.eval_map_csv() << std::endl;
  return 0;
}

int cmd_transfer_bits(const Manifest& m) {
  const Paths paths(m.out_dir);
  require_artifact(paths.database(), "run gen-data first");
  require_artifact(paths.queries(), "run gen-data first");
  require_artifact(paths.net(), "run train first");

  const LabeledDataset database =
      load_vectors(paths.database(), VectorFormat::kFvecs);
  const LabeledDataset queries =
      load_vectors(paths.queries(), VectorFormat::kFvecs);
  const FeatureNet net = load_weights(paths.net());

  std::vector<int> all_m = m.transfer_target_m;
  if (std::find(all_m.begin(), all_m.end(), m.transfer_source_m) ==
      all_m.end()) {
    all_m.insert(all_m.begin(), m.transfer_source_m);
  }

  const std::vector<Vec> features =
      extract_features(net, database.vectors, m.threads);
  std::vector<std::pair<int, Codebook>> codebooks;
  for (int mm : all_m) {
    if (m.feature_dim % mm != 0) {
      throw UsageError("transfer-bits: m=" + std::to_string(mm) +
                       " does not divide feature_dim=" +
                       std::to_string(m.feature_dim));
    }
    KMeansConfig kcfg;
    kcfg.k = m.codebook_k;
    kcfg.max_iters = m.kmeans_max_iters;
    kcfg.tol = m.kmeans_tol;
    kcfg.seed = stage_seed(m.seed, "codebook-m" + std::to_string(mm));
    kcfg.threads = m.threads;
    Codebook cb = train_codebooks(features, mm, m.codebook_k, kcfg).codebook;
    save_codebook(cb, paths.codebook_m(mm));
    codebooks.push_back({8 * mm, std::move(cb)});
  }

  AttackConfig acfg = m.attack;
  acfg.seed = stage_seed(m.seed, "attack-transfer-bits");
  std::vector<int> target_bits;
  for (int mm : m.transfer_target_m) target_bits.push_back(8 * mm);

  std::vector<BitsTransferCell> cells;
  try {
    cells = bits_transfer_experiment(8 * m.transfer_source_m, target_bits, net,
                                     codebooks, acfg, m.soft, database,
                                     queries, m.threads);
  } catch (const std::runtime_error& e) {
    throw NumericFailure(e.what());
  }
  write_bits_transfer_csv(cells, paths.bits_csv());
  std::cout << "transfer-bits: wrote " << paths.bits_csv() << std::endl;
  return 0;
}

int cmd_transfer_models(const Manifest& m) {
  const Paths paths(m.out_dir);
  require_artifact(paths.database(), "run gen-data first");
  require_artifact(paths.queries(), "run gen-data first");

  const LabeledDataset database =
      load_vectors(paths.database(), VectorFormat::kFvecs);
  const LabeledDataset queries =
      load_vectors(paths.queries(), VectorFormat::kFvecs);

  std::vector<TransferModel> models;
  for (std::uint64_t s : m.transfer_net_seeds) {
    const TrainedModel trained = run_training(
        m, database, stage_seed(m.seed, "net-init-" + std::to_string(s)) ^ s);
    save_weights(trained.net, paths.net_seed(s));
    save_codebook(trained.codebook, paths.codebook_seed(s));
    models.push_back({"net_s" + std::to_string(s), trained.net,
                      trained.codebook});
  }

  AttackConfig acfg = m.attack;
  acfg.seed = stage_seed(m.seed, "attack-transfer-models");
  std::vector<ModelTransferCell> cells;
  try {
    cells = model_transfer_experiment(models, models, acfg, m.soft, database,
                                      queries, m.threads);
  } catch (const std::runtime_error& e) {
    throw NumericFailure(e.what());
  }
  write_model_transfer_csv(cells, paths.models_csv());
  std::cout << "transfer-models: wrote " << paths.models_csv() << std::endl;
  return 0;
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage) {
  return mix64(global_seed ^ fnv1a64(stage));
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("pqlab");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Product-quantization retrieval with an adversarial-query lab"};
  app.require_subcommand(1);

  std::string manifest_path;
  std::string out_dir;
  std::int64_t seed_flag = -1;
  int threads_flag = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest_path, "Manifest JSON path");
    cmd->add_option("--out", out_dir, "Output directory (overrides manifest)");
    cmd->add_option("--seed", seed_flag, "Global seed (overrides manifest)");
    cmd->add_option("--threads", threads_flag,
                    "Worker cap (overrides manifest)");
  };

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic split");
  int classes = -1, per_class = -1, dim = -1;
  double separation = -1.0, sigma = -1.0;
  std::int64_t n_queries = -1;
  bool stratified_on = false, stratified_off = false;
  gen->add_option("--classes", classes, "Number of classes");
  gen->add_option("--per-class", per_class, "Records per class");
  gen->add_option("--dim", dim, "Vector dimension");
  gen->add_option("--separation", separation, "Inter-mean distance in sigmas");
  gen->add_option("--sigma", sigma, "Within-class standard deviation");
  gen->add_option("--n-queries", n_queries, "Query split size");
  gen->add_flag("--stratified", stratified_on, "Stratified split");
  gen->add_flag("--uniform-split", stratified_off, "Plain uniform split");
  add_common(gen);

  CLI::App* train_cmd = app.add_subcommand("train", "Train net and codebook");
  add_common(train_cmd);

  CLI::App* build = app.add_subcommand("build-index", "Encode the database");
  add_common(build);

  CLI::App* query = app.add_subcommand("query", "Rank the database per query");
  std::string query_mode = "adc";
  std::size_t top_n = 0;
  std::string query_input;
  query->add_option("--mode", query_mode, "sdc or adc");
  query->add_option("--top", top_n, "Results per query (0 = all)");
  query->add_option("--input", query_input, "Query vector file override");
  add_common(query);

  CLI::App* attack_cmd =
      app.add_subcommand("attack", "Generate adversarial queries");
  std::string attack_loss;
  attack_cmd->add_option("--loss", attack_loss, "basic, apd or aod");
  add_common(attack_cmd);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "White-box mAP table and PR curves");
  add_common(eval_cmd);

  CLI::App* tbits = app.add_subcommand("transfer-bits",
                                       "Cross-code-length transfer table");
  add_common(tbits);

  CLI::App* tmodels = app.add_subcommand("transfer-models",
                                         "Cross-model transfer table");
  add_common(tmodels);

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Manifest m;
    if (!manifest_path.empty()) {
      m = load_manifest(manifest_path);
    }
    if (!out_dir.empty()) m.out_dir = out_dir;
    if (seed_flag >= 0) m.seed = static_cast<std::uint64_t>(seed_flag);
    if (threads_flag >= 0) m.threads = threads_flag;

    if (gen->parsed()) {
      if (classes > 0) m.dataset.classes = classes;
      if (per_class > 0) m.dataset.per_class = per_class;
      if (dim > 0) m.dataset.dim = dim;
      if (separation > 0.0) m.dataset.separation = separation;
      if (sigma > 0.0) m.dataset.sigma = sigma;
      if (n_queries >= 0) m.n_queries = static_cast<std::size_t>(n_queries);
      if (stratified_on) m.stratified = true;
      if (stratified_off) m.stratified = false;
      return cmd_gen_data(m);
    }
    if (train_cmd->parsed()) return cmd_train(m);
    if (build->parsed()) return cmd_build_index(m);
    if (query->parsed()) return cmd_query(m, query_mode, top_n, query_input);
    if (attack_cmd->parsed()) {
      if (!attack_loss.empty()) {
        m.attack.loss = attack_loss_from_name(attack_loss);
      }
      return cmd_attack(m);
    }
    if (eval_cmd->parsed()) return cmd_eval(m);
    if (tbits->parsed()) return cmd_transfer_bits(m);
    if (tmodels->parsed()) return cmd_transfer_models(m);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << std::endl;
    return 3;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace pqlab::cli
