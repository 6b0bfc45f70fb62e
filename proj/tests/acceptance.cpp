// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion; exits non-zero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pqlab/attack.hpp"
#include "pqlab/dataio.hpp"
#include "pqlab/dpqtrain.hpp"
#include "pqlab/evalkit.hpp"
#include "pqlab/featnet.hpp"
#include "pqlab/kmeans.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/reference.hpp"
#include "pqlab/softpq.hpp"
#include "support/oracles.hpp"

using namespace pqlab;
using oracles::fd_gradient;
using oracles::rel_err;

namespace {

using Clock = std::chrono::steady_clock;

struct Failure {
  std::string reason;
};

using Result = std::optional<Failure>;

#define REQUIRE_OK(cond, msg)                 \
  do {                                        \
    if (!(cond)) return Failure{msg};         \
  } while (0)

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared desk-scale protocol (criteria 4-7): 10-class synthetic dataset,
// dim 64, 2000 database / 200 queries, separation 20 sigma; nets trained 30
// epochs; feature dim 24 so 16/24/32-bit codebooks share the feature space.
// ---------------------------------------------------------------------------

struct Protocol {
  LabeledDataset database;
  LabeledDataset queries;

  FeatureNet net;                 // primary model
  Codebook codebook;              // jointly refined, M=4, K=256
  FeatureNet net_b;               // independently seeded second model
  Codebook codebook_b;

  SoftPqConfig soft{0.5, true};   // attack-side distribution
  AttackConfig attack_template;

  std::map<std::string, double> clean_map;     // mode -> mAP
  std::map<std::string, double> attacked_map;  // "loss/mode" -> mAP
  std::vector<AttackReport> aod_reports;
  std::size_t constraint_violations = 0;
  double max_linf = 0.0;

  bool built = false;
};

Protocol g_protocol;

constexpr int kProtocolFeatureDim = 24;
constexpr double kProtocolEta = 2.0;
constexpr int kProtocolAttackIters = 10;
constexpr double kProtocolClipMin = -40.0;
constexpr double kProtocolClipMax = 40.0;

struct TrainedPair {
  FeatureNet net;
  Codebook codebook;
};

TrainedPair train_protocol_model(const LabeledDataset& database,
                                 std::uint64_t seed) {
  FeatureNet net = make_mlp(64, {64, 32}, kProtocolFeatureDim, true, seed);

  const std::vector<Vec> features = extract_features(net, database.vectors);
  KMeansConfig kcfg;
  kcfg.k = 256;
  kcfg.max_iters = 50;
  kcfg.tol = 1e-4;
  kcfg.seed = seed + 1;
  Codebook codebook = train_codebooks(features, 4, 256, kcfg).codebook;

  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.batch_size = 32;
  tcfg.lr_net = 0.05;
  tcfg.lr_codebook = 0.01;
  tcfg.alpha = 2.0;
  tcfg.seed = seed + 2;
  TrainResult result = train(database, std::move(net), std::move(codebook),
                             tcfg);
  return {std::move(result.net), std::move(result.codebook)};
}

const Protocol& protocol() {
  if (g_protocol.built) return g_protocol;

  SyntheticSpec spec;
  spec.classes = 10;
  spec.per_class = 220;
  spec.dim = 64;
  spec.separation = 20.0;
  spec.sigma = 1.0;
  spec.seed = 20240001;
  const LabeledDataset data = generate_synthetic(spec);
  const SplitResult parts = split(data, 200, 20240002, true);
  g_protocol.database = parts.database;
  g_protocol.queries = parts.queries;

  TrainedPair a = train_protocol_model(g_protocol.database, 1001);
  g_protocol.net = std::move(a.net);
  g_protocol.codebook = std::move(a.codebook);
  TrainedPair b = train_protocol_model(g_protocol.database, 7707);
  g_protocol.net_b = std::move(b.net);
  g_protocol.codebook_b = std::move(b.codebook);

  AttackConfig acfg;
  acfg.eta = kProtocolEta;
  acfg.iterations = kProtocolAttackIters;
  acfg.clip_min = kProtocolClipMin;
  acfg.clip_max = kProtocolClipMax;
  acfg.seed = 5;
  g_protocol.attack_template = acfg;

  // White-box table on the primary model.
  const RelevanceJudge judge = RelevanceJudge::from_dataset(
      g_protocol.database, RelevanceMode::kSingleLabel);
  const std::vector<Vec> db_features =
      extract_features(g_protocol.net, g_protocol.database.vectors);
  const PqIndex index = build_index(db_features, g_protocol.database.ids,
                                    g_protocol.codebook, std::nullopt);
  const std::vector<Vec> clean_features =
      extract_features(g_protocol.net, g_protocol.queries.vectors);
  for (DistanceMode mode : {DistanceMode::kSdc, DistanceMode::kAdc}) {
    g_protocol.clean_map[mode_name(mode)] = mean_average_precision(
        clean_features, g_protocol.queries.labels, index, mode, judge);
  }

  for (AttackLoss loss :
       {AttackLoss::kBasic, AttackLoss::kApd, AttackLoss::kAod}) {
    AttackConfig cfg = acfg;
    cfg.loss = loss;
    std::vector<AttackReport> reports =
        attack_batch(g_protocol.queries.vectors, g_protocol.net,
                     g_protocol.codebook, g_protocol.soft, cfg);
    std::vector<Vec> adv(reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      adv[i] = reports[i].adversarial;
      const Vec& y = g_protocol.queries.vectors[i];
      double linf = 0.0;
      bool in_box = true;
      for (std::size_t d = 0; d < y.size(); ++d) {
        linf = std::max(linf, std::abs(adv[i][d] - y[d]));
        in_box = in_box && adv[i][d] >= cfg.clip_min &&
                 adv[i][d] <= cfg.clip_max;
      }
      g_protocol.max_linf = std::max(g_protocol.max_linf, linf);
      if (linf > cfg.eta || !in_box) ++g_protocol.constraint_violations;
    }
    const std::vector<Vec> adv_features =
        extract_features(g_protocol.net, adv);
    for (DistanceMode mode : {DistanceMode::kSdc, DistanceMode::kAdc}) {
      g_protocol.attacked_map[attack_loss_name(loss) + "/" + mode_name(mode)] =
          mean_average_precision(adv_features, g_protocol.queries.labels,
                                 index, mode, judge);
    }
    if (loss == AttackLoss::kAod) g_protocol.aod_reports = std::move(reports);
  }

  g_protocol.built = true;
  return g_protocol;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Result criterion_1_oracle_equivalence(std::string&) {
  const auto start = Clock::now();
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng(9000 + inst);
    std::vector<Vec> vectors;
    for (int i = 0; i < 1000; ++i) {
      vectors.push_back(oracles::random_vec(rng, 32));
    }
    KMeansConfig cfg;
    cfg.k = 16;
    cfg.max_iters = 8;
    cfg.seed = inst;
    const Codebook cb = train_codebooks(vectors, 4, 16, cfg).codebook;
    std::vector<std::uint32_t> ids(vectors.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const PqIndex index = build_index(vectors, ids, cb, std::nullopt);

    for (int q = 0; q < 3; ++q) {
      const Vec query = oracles::random_vec(rng, 32);
      for (DistanceMode mode : {DistanceMode::kAdc, DistanceMode::kSdc}) {
        const auto got = search(query, index, index.size(), mode);
        const auto want = mode == DistanceMode::kAdc
                              ? reference::scan_adc(query, index)
                              : reference::scan_sdc(query, index);
        REQUIRE_OK(got.size() == want.size(), "ranking size mismatch");
        for (std::size_t i = 0; i < got.size(); ++i) {
          REQUIRE_OK(got[i].id == want[i].id,
                     "ranking differs from the decode oracle at position " +
                         std::to_string(i) + " (instance " +
                         std::to_string(inst) + ")");
          REQUIRE_OK(std::abs(got[i].distance - want[i].distance) < 1e-9,
                     "distance disagrees with the oracle beyond 1e-9");
        }
      }
    }
  }
  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  REQUIRE_OK(secs < 10.0,
             "runtime " + fmt_double(secs) + "s exceeds the 10s budget");
  return std::nullopt;
}

Result criterion_2_soft_hard_limit(std::string&) {
  Rng rng(9100);
  const Codebook cb = oracles::random_codebook(rng, 2, 8, 8);

  int tested = 0;
  while (tested < 100) {
    const Vec z = oracles::random_unit_vec(rng, 16);
    // Keep instances whose top-two inner-product gap exceeds 0.01 in every
    // subspace (computed on the normalized sub-vectors the soft path uses).
    double min_gap = 1e300;
    for (int mi = 0; mi < cb.m; ++mi) {
      Vec zm(z.begin() + mi * cb.sub_dim, z.begin() + (mi + 1) * cb.sub_dim);
      zm = l2_normalize(zm);
      double best = -1e300, second = -1e300;
      for (int ki = 0; ki < cb.k; ++ki) {
        const double ip = inner_product(zm, cb.centroid(mi, ki));
        if (ip > best) {
          second = best;
          best = ip;
        } else if (ip > second) {
          second = ip;
        }
      }
      min_gap = std::min(min_gap, best - second);
    }
    if (min_gap <= 0.01) continue;
    ++tested;

    const PqCode hard = hard_assign_cosine(z, cb);
    for (double alpha : {0.5, 1.0, 10.0, 100.0}) {
      const CentroidDistribution dist =
          soft_distribution(z, cb, SoftPqConfig{alpha, true});
      for (int mi = 0; mi < cb.m; ++mi) {
        int arg = 0;
        for (int ki = 1; ki < cb.k; ++ki) {
          if (dist.at(mi, ki) > dist.at(mi, arg)) arg = ki;
        }
        REQUIRE_OK(arg == hard[mi],
                   "soft argmax deviates from the hard assignment at alpha " +
                       fmt_double(alpha));
      }
    }

    const Vec hard_decode = decode(hard, cb);
    double prev = 1e300;
    double last = 0.0;
    for (double alpha : {1.0, 10.0, 100.0, 1000.0}) {
      const Vec soft = soft_quantize(z, cb, SoftPqConfig{alpha, true});
      const double gap = std::sqrt(squared_euclidean(soft, hard_decode));
      REQUIRE_OK(gap <= prev + 1e-12,
                 "soft-to-hard gap increased between alpha steps");
      prev = gap;
      last = gap;
    }
    REQUIRE_OK(last < 1e-3, "gap at alpha=1000 is " + fmt_double(last));
  }
  return std::nullopt;
}

Result criterion_3_gradient_suite(std::string&) {
  const auto start = Clock::now();
  Rng rng(9200);

  auto check_grad = [&](const Vec& analytic, const Vec& numeric,
                        double tol, const std::string& what) -> Result {
    if (rel_err(analytic, numeric) > tol) {
      return Failure{what + " finite-difference error " +
                     fmt_double(rel_err(analytic, numeric))};
    }
    return std::nullopt;
  };

  for (int t = 0; t < 20; ++t) {
    FeatureNet net = make_mlp(6, {10}, 8, true, 9300 + t);
    for (Layer& layer : net.layers) {
      for (double& b : layer.bias) b = 0.05 + 0.05 * rng.uniform();
    }
    const Codebook cb = oracles::random_codebook(rng, 2, 4, 4);
    const SoftPqConfig soft{0.5, true};
    const Vec y = oracles::random_vec(rng, 6);
    const Vec y_hat = oracles::random_vec(rng, 6);

    {
      const LossGrad lg = basic_loss(y, y_hat, net);
      const Vec fd = fd_gradient(
          [&](const Vec& p) { return basic_loss(y, p, net).loss; }, y_hat);
      if (auto r = check_grad(lg.grad, fd, 1e-4, "basic_loss")) return r;
    }
    {
      const LossGrad lg = apd_loss(y, y_hat, net, cb, soft);
      const Vec fd = fd_gradient(
          [&](const Vec& p) { return apd_loss(y, p, net, cb, soft).loss; },
          y_hat);
      if (auto r = check_grad(lg.grad, fd, 1e-4, "apd_loss")) return r;
    }
    {
      const LossGrad lg = aod_loss(y, y_hat, net, cb, soft);
      const Vec fd = fd_gradient(
          [&](const Vec& p) { return aod_loss(y, p, net, cb, soft).loss; },
          y_hat);
      if (auto r = check_grad(lg.grad, fd, 1e-4, "aod_loss")) return r;
    }
    {
      const Vec z = oracles::random_vec(rng, 8);
      std::vector<double> upstream(8);
      for (double& u : upstream) u = rng.normal();
      const Vec analytic = input_gradient(z, cb, soft, upstream);
      const Vec fd = fd_gradient(
          [&](const Vec& p) {
            const CentroidDistribution d = soft_distribution(p, cb, soft);
            double acc = 0.0;
            for (std::size_t i = 0; i < d.probs.size(); ++i) {
              acc += upstream[i] * d.probs[i];
            }
            return acc;
          },
          z);
      if (auto r = check_grad(analytic, fd, 1e-4, "softpq.input_gradient")) {
        return r;
      }
    }
    {
      const Vec x = oracles::random_vec(rng, 8);
      Vec upstream(8);
      for (double& u : upstream) u = rng.normal();
      const std::vector<Vec> analytic =
          centroid_gradient(x, cb, SoftPqConfig{1.0, true}, upstream);
      const int mi = static_cast<int>(rng.uniform_index(2));
      const int ki = static_cast<int>(rng.uniform_index(4));
      const Vec fd = fd_gradient(
          [&](const Vec& probe) {
            Codebook perturbed = cb;
            perturbed.centroid(mi, ki) = probe;
            const Vec s =
                soft_quantize(x, perturbed, SoftPqConfig{1.0, true});
            double acc = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) acc += upstream[i] * s[i];
            return acc;
          },
          cb.centroid(mi, ki));
      if (auto r = check_grad(analytic[mi * 4 + ki], fd, 1e-4,
                              "softpq.centroid_gradient")) {
        return r;
      }
    }
    {
      const Vec x = oracles::random_vec(rng, 6);
      Vec upstream(8);
      for (double& u : upstream) u = rng.normal();
      ForwardCache cache;
      forward(net, x, &cache);
      const Vec analytic = backward_input(net, cache, upstream);
      const Vec fd = fd_gradient(
          [&](const Vec& p) {
            const Vec f = forward(net, p);
            double acc = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) acc += upstream[i] * f[i];
            return acc;
          },
          x);
      if (auto r = check_grad(analytic, fd, 1e-4, "featnet.backward_input")) {
        return r;
      }

      const ParamGrads grads = backward_params(net, cache, upstream);
      const std::size_t li = rng.uniform_index(net.layers.size());
      const std::size_t wi = rng.uniform_index(net.layers[li].weights.size());
      const double h = 1e-5;
      FeatureNet probe = net;
      probe.layers[li].weights[wi] += h;
      Vec f = forward(probe, x);
      double up_v = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) up_v += upstream[i] * f[i];
      probe.layers[li].weights[wi] -= 2 * h;
      f = forward(probe, x);
      double down_v = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) down_v += upstream[i] * f[i];
      const double fd_w = (up_v - down_v) / (2 * h);
      if (rel_err(grads[li].weights[wi], fd_w, 1e-8) > 1e-4) {
        return Failure{"featnet.backward_params finite-difference error"};
      }
    }
  }

  // End-to-end training composition at the looser 1e-3 tolerance.
  {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.per_class = 12;
    spec.dim = 6;
    spec.separation = 12.0;
    spec.seed = 4;
    const LabeledDataset data = generate_synthetic(spec);
    const FeatureNet net = make_mlp(6, {8}, 6, true, 21);
    std::vector<Vec> features;
    for (const Vec& v : data.vectors) features.push_back(forward(net, v));
    KMeansConfig kcfg;
    kcfg.k = 4;
    kcfg.seed = 3;
    const Codebook cb = train_codebooks(features, 2, 4, kcfg).codebook;
    const SoftPqConfig soft{1.0, true};
    const Triplet t{0, 5, 30};

    auto full_loss = [&](const FeatureNet& n, const Codebook& c) {
      const Vec x = forward(n, data.vectors[t.anchor_id]);
      const Vec sp = soft_quantize(forward(n, data.vectors[t.positive_id]), c,
                                   soft);
      const Vec sn = soft_quantize(forward(n, data.vectors[t.negative_id]), c,
                                   soft);
      const double margin = inner_product(x, sn) - inner_product(x, sp);
      return 1.0 / (1.0 + std::exp(-margin));
    };

    // Analytic chain (as wired in training).
    ForwardCache ca, cp, cn;
    const Vec x = forward(net, data.vectors[t.anchor_id], &ca);
    const Vec zp = forward(net, data.vectors[t.positive_id], &cp);
    const Vec zn = forward(net, data.vectors[t.negative_id], &cn);
    const Vec sp = soft_quantize(zp, cb, soft);
    const Vec sn = soft_quantize(zn, cb, soft);
    const double margin = inner_product(x, sn) - inner_product(x, sp);
    const double sig = 1.0 / (1.0 + std::exp(-margin));
    const double w = sig * (1.0 - sig);
    Vec up_sp(x.size()), up_sn(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      up_sp[i] = -w * x[i];
      up_sn[i] = w * x[i];
    }
    std::vector<Vec> cgrad = centroid_gradient(zp, cb, soft, up_sp);
    {
      const std::vector<Vec> cg2 = centroid_gradient(zn, cb, soft, up_sn);
      for (std::size_t i = 0; i < cgrad.size(); ++i) {
        for (std::size_t d = 0; d < cgrad[i].size(); ++d) {
          cgrad[i][d] += cg2[i][d];
        }
      }
    }
    const double h = 1e-5;
    for (int probe = 0; probe < 10; ++probe) {
      const std::size_t ci = rng.uniform_index(cb.centroids.size());
      const std::size_t di = rng.uniform_index(cb.sub_dim);
      Codebook perturbed = cb;
      perturbed.centroids[ci][di] += h;
      const double up_v = full_loss(net, perturbed);
      perturbed.centroids[ci][di] -= 2 * h;
      const double down_v = full_loss(net, perturbed);
      const double fd = (up_v - down_v) / (2 * h);
      REQUIRE_OK(rel_err(cgrad[ci][di], fd, 1e-8) <= 1e-3,
                 "end-to-end centroid gradient exceeds 1e-3");
    }
  }

  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  REQUIRE_OK(secs < 60.0,
             "runtime " + fmt_double(secs) + "s exceeds the 60s budget");
  return std::nullopt;
}

Result criterion_4_attack_effectiveness(std::string& detail) {
  const auto start = Clock::now();
  const Protocol& p = protocol();

  detail = "clean sdc/adc " + fmt_double(p.clean_map.at("sdc")) + "/" +
           fmt_double(p.clean_map.at("adc")) + ", basic " +
           fmt_double(p.attacked_map.at("basic/sdc")) + "/" +
           fmt_double(p.attacked_map.at("basic/adc")) + ", apd " +
           fmt_double(p.attacked_map.at("apd/sdc")) + "/" +
           fmt_double(p.attacked_map.at("apd/adc")) + ", aod " +
           fmt_double(p.attacked_map.at("aod/sdc")) + "/" +
           fmt_double(p.attacked_map.at("aod/adc"));

  for (const std::string mode : {"sdc", "adc"}) {
    const double clean = p.clean_map.at(mode);
    REQUIRE_OK(clean >= 0.80, "clean mAP(" + mode + ") = " +
                                  fmt_double(clean) + " below 0.80");
    const double aod = p.attacked_map.at("aod/" + mode);
    const double apd = p.attacked_map.at("apd/" + mode);
    const double basic = p.attacked_map.at("basic/" + mode);
    REQUIRE_OK(aod <= 0.5 * clean,
               "AOD mAP(" + mode + ") = " + fmt_double(aod) +
                   " not below half of clean " + fmt_double(clean));
    REQUIRE_OK(aod <= apd + 0.05, "AOD " + fmt_double(aod) +
                                      " above APD " + fmt_double(apd) +
                                      " + 0.05 (" + mode + ")");
    REQUIRE_OK(apd <= basic + 0.05, "APD " + fmt_double(apd) +
                                        " above Basic " + fmt_double(basic) +
                                        " + 0.05 (" + mode + ")");
  }

  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  REQUIRE_OK(secs < 300.0,
             "runtime " + fmt_double(secs) + "s exceeds the 5min budget");
  return std::nullopt;
}

Result criterion_5_constraint_compliance(std::string&) {
  const Protocol& p = protocol();
  REQUIRE_OK(p.constraint_violations == 0,
             std::to_string(p.constraint_violations) +
                 " attacks violate the eta/box constraints (max linf " +
                 fmt_double(p.max_linf) + ")");

  std::size_t positive_kl = 0;
  for (const AttackReport& r : p.aod_reports) {
    if (r.kl_to_clean > 0.0) ++positive_kl;
  }
  const double frac =
      static_cast<double>(positive_kl) / p.aod_reports.size();
  REQUIRE_OK(frac >= 0.95, "only " + fmt_double(100 * frac) +
                               "% of AOD attacks shifted the distribution");
  return std::nullopt;
}

Result criterion_6_bits_transfer(std::string& detail) {
  const Protocol& p = protocol();

  // Per-bit codebooks on the shared trained feature space.
  const std::vector<Vec> features =
      extract_features(p.net, p.database.vectors);
  std::vector<std::pair<int, Codebook>> codebooks;
  for (int m : {2, 3, 4}) {
    KMeansConfig kcfg;
    kcfg.k = 256;
    kcfg.max_iters = 50;
    kcfg.tol = 1e-4;
    kcfg.seed = 600 + m;
    codebooks.push_back(
        {8 * m, train_codebooks(features, m, 256, kcfg).codebook});
  }

  AttackConfig acfg = p.attack_template;
  acfg.loss = AttackLoss::kAod;
  const std::vector<BitsTransferCell> cells = bits_transfer_experiment(
      16, {24, 32}, p.net, codebooks, acfg, p.soft, p.database, p.queries);

  REQUIRE_OK(cells.size() == 4, "expected 4 transfer cells");
  for (const BitsTransferCell& cell : cells) {
    if (!detail.empty()) detail += ", ";
    detail += std::to_string(cell.target_bits) + "b/" + cell.mode + " " +
              fmt_double(cell.clean_map) + "->" +
              fmt_double(cell.attacked_map);
  }
  for (const BitsTransferCell& cell : cells) {
    REQUIRE_OK(
        cell.attacked_map <= 0.7 * cell.clean_map,
        "16-bit AOD queries on the " + std::to_string(cell.target_bits) +
            "-bit target (" + cell.mode + ") kept mAP " +
            fmt_double(cell.attacked_map) + " vs clean " +
            fmt_double(cell.clean_map) + " (needs a 30% drop)");
  }
  return std::nullopt;
}

Result criterion_7_model_transfer(std::string& detail) {
  const Protocol& p = protocol();

  std::vector<TransferModel> models;
  models.push_back({"model_a", p.net, p.codebook});
  models.push_back({"model_b", p.net_b, p.codebook_b});

  AttackConfig acfg = p.attack_template;
  acfg.loss = AttackLoss::kAod;
  const std::vector<ModelTransferCell> cells = model_transfer_experiment(
      models, models, acfg, p.soft, p.database, p.queries);

  std::map<std::string, double> table;  // "source/target/mode"
  for (const ModelTransferCell& cell : cells) {
    table[cell.source + "/" + cell.target + "/" + cell.mode] = cell.map;
  }
  for (const std::string mode : {"sdc", "adc"}) {
    const double aa = table.at("model_a/model_a/" + mode);
    const double bb = table.at("model_b/model_b/" + mode);
    const double ab = table.at("model_a/model_b/" + mode);
    const double ba = table.at("model_b/model_a/" + mode);
    if (!detail.empty()) detail += "; ";
    detail += mode + " diag " + fmt_double(aa) + "/" + fmt_double(bb) +
              " off " + fmt_double(ab) + "/" + fmt_double(ba);
    for (double diag : {aa, bb}) {
      for (double off : {ab, ba}) {
        REQUIRE_OK(diag < off,
                   "white-box mAP " + fmt_double(diag) +
                       " not strictly below transfer mAP " + fmt_double(off) +
                       " (" + mode + ")");
      }
    }
  }
  return std::nullopt;
}

Result criterion_8_lloyd_monotonicity(std::string&) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(7000 + seed);
    std::vector<Vec> points;
    for (int i = 0; i < 200; ++i) points.push_back(oracles::random_vec(rng, 8));
    KMeansConfig cfg;
    cfg.k = 10;
    cfg.seed = seed;
    const KMeansResult res = train_kmeans(points, cfg);
    for (std::size_t i = 1; i < res.inertia_history.size(); ++i) {
      REQUIRE_OK(res.inertia_history[i] <= res.inertia_history[i - 1],
                 "inertia increased at iteration " + std::to_string(i) +
                     " (seed " + std::to_string(seed) + ")");
    }

    if (seed < 5) {
      cfg.threads = 1;
      const KMeansResult serial = train_kmeans(points, cfg);
      for (int threads : {2, 4, 8}) {
        cfg.threads = threads;
        const KMeansResult par = train_kmeans(points, cfg);
        REQUIRE_OK(par.inertia == serial.inertia &&
                       par.assignments == serial.assignments &&
                       par.centroids == serial.centroids,
                   "results differ at " + std::to_string(threads) +
                       " threads (seed " + std::to_string(seed) + ")");
      }
    }
  }
  return std::nullopt;
}

Result criterion_9_metric_correctness(std::string&) {
  Rng rng(9900);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.uniform_index(10);
    LabeledDataset ds;
    ds.dim = 1;
    for (std::size_t i = 0; i < n; ++i) {
      ds.ids.push_back(static_cast<std::uint32_t>(i));
      ds.labels.push_back(
          {static_cast<std::uint32_t>(rng.uniform_index(3))});
      ds.vectors.push_back({0.0});
    }
    const RelevanceJudge judge =
        RelevanceJudge::from_dataset(ds, RelevanceMode::kSingleLabel);

    std::vector<std::uint32_t> ranking(n);
    for (std::size_t i = 0; i < n; ++i) ranking[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      std::swap(ranking[i], ranking[i + rng.uniform_index(n - i)]);
    }
    std::vector<int> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = ds.labels[ranking[i]][0] == 1 ? 1 : 0;
    }
    const double got = average_precision(ranking, judge, {1});
    const double want = oracles::ap_from_mask(mask);
    REQUIRE_OK(got == want, "AP " + fmt_double(got) +
                                " differs from the brute-force oracle " +
                                fmt_double(want));
  }

  // AP(1, 0, 1) = (1/2)(1 + 2/3).
  LabeledDataset ds;
  ds.dim = 1;
  ds.ids = {0, 1, 2};
  ds.labels = {{1}, {0}, {1}};
  ds.vectors = {{0.0}, {0.0}, {0.0}};
  const RelevanceJudge judge =
      RelevanceJudge::from_dataset(ds, RelevanceMode::kSingleLabel);
  const double ap = average_precision({0, 1, 2}, judge, {1});
  REQUIRE_OK(std::abs(ap - 5.0 / 6.0) < 1e-9,
             "AP(1,0,1) = " + fmt_double(ap) + ", expected 0.8333...");
  return std::nullopt;
}

Result criterion_10_algebraic_identities(std::string&) {
  Rng rng(9800);
  FeatureNet net = make_mlp(6, {10}, 8, true, 50);
  const Codebook cb = oracles::random_codebook(rng, 2, 4, 4);
  const SoftPqConfig soft{0.5, true};

  for (int t = 0; t < 50; ++t) {
    const Vec y = oracles::random_vec(rng, 6);
    const Vec y_hat = oracles::random_vec(rng, 6);

    const double aod = aod_loss(y, y_hat, net, cb, soft).loss;
    const CentroidDistribution p =
        soft_distribution(forward(net, y), cb, soft);
    const CentroidDistribution p_hat =
        soft_distribution(forward(net, y_hat), cb, soft);
    double neg_entropy = 0.0;
    for (double v : p.probs) neg_entropy += v * std::log(v);
    const double kl = kl_divergence(p, p_hat);
    REQUIRE_OK(std::abs(aod - (neg_entropy - kl)) < 1e-9,
               "aod != -entropy - KL (gap " +
                   fmt_double(std::abs(aod - (neg_entropy - kl))) + ")");

    // APD is AOD with p replaced by the one-hot of the hard indices.
    const double apd = apd_loss(y, y_hat, net, cb, soft).loss;
    const PqCode b = hard_assign_cosine(forward(net, y), cb);
    double onehot = 0.0;
    for (int mi = 0; mi < cb.m; ++mi) onehot += std::log(p_hat.at(mi, b[mi]));
    REQUIRE_OK(std::abs(apd - onehot) < 1e-9,
               "apd differs from one-hot aod");
  }
  return std::nullopt;
}

Result criterion_11_persistence(std::string&) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pqlab_acceptance_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(9700);

  auto bytes_of = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
  };

  // Codebook.
  const Codebook cb = oracles::random_codebook(rng, 3, 6, 4);
  const std::string cb_path = (dir / "cb.pqcb").string();
  save_codebook(cb, cb_path);
  save_codebook(load_codebook(cb_path), cb_path + ".rt");
  REQUIRE_OK(bytes_of(cb_path) == bytes_of(cb_path + ".rt"),
             "codebook round trip not byte-identical");

  // Index.
  std::vector<Vec> vectors;
  for (int i = 0; i < 40; ++i) vectors.push_back(oracles::random_vec(rng, 12));
  std::vector<std::uint32_t> ids(40);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  PqIndex index = build_index(vectors, ids, cb, std::nullopt);
  index.labels = std::vector<std::uint32_t>(40, 1);
  const std::string ix_path = (dir / "ix.pqix").string();
  save_index(index, ix_path);
  save_index(load_index(ix_path), ix_path + ".rt");
  REQUIRE_OK(bytes_of(ix_path) == bytes_of(ix_path + ".rt"),
             "index round trip not byte-identical");

  // Weights.
  const FeatureNet net = make_mlp(5, {7}, 4, true, 3);
  const std::string net_path = (dir / "net.fnet").string();
  save_weights(net, net_path);
  save_weights(load_weights(net_path), net_path + ".rt");
  REQUIRE_OK(bytes_of(net_path) == bytes_of(net_path + ".rt"),
             "weights round trip not byte-identical");

  // Dataset.
  SyntheticSpec spec;
  spec.classes = 3;
  spec.per_class = 5;
  spec.dim = 4;
  spec.seed = 8;
  const LabeledDataset data = generate_synthetic(spec);
  const std::string ds_path = (dir / "ds.fvecs").string();
  save_vectors(data, ds_path, VectorFormat::kFvecs);
  save_vectors(load_vectors(ds_path, VectorFormat::kFvecs), ds_path + ".rt",
               VectorFormat::kFvecs);
  REQUIRE_OK(bytes_of(ds_path) == bytes_of(ds_path + ".rt"),
             "dataset round trip not byte-identical");
  REQUIRE_OK(bytes_of(ds_path + ".labels") == bytes_of(ds_path + ".rt.labels"),
             "label sidecar round trip not byte-identical");

  // Corrupted headers raise named errors instead of crashing.
  const std::string bad = (dir / "bad.bin").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os << "XXXXGARBAGE";
  }
  auto expect_named_error = [&](auto&& fn, const char* what) -> Result {
    try {
      fn();
      return Failure{std::string(what) + " accepted a corrupted header"};
    } catch (const std::exception& e) {
      if (std::string(e.what()).empty()) {
        return Failure{std::string(what) + " threw an unnamed error"};
      }
      return std::nullopt;
    }
  };
  if (auto r = expect_named_error([&] { load_codebook(bad); }, "load_codebook"))
    return r;
  if (auto r = expect_named_error([&] { load_index(bad); }, "load_index"))
    return r;
  if (auto r = expect_named_error([&] { load_weights(bad); }, "load_weights"))
    return r;

  fs::remove_all(dir);
  return std::nullopt;
}

}  // namespace

int main() {
  struct Entry {
    int number;
    const char* title;
    std::function<Result(std::string&)> body;
  };
  const std::vector<Entry> criteria = {
      {1, "oracle equivalence (ADC/SDC vs decode-then-distance)",
       criterion_1_oracle_equivalence},
      {2, "soft-to-hard quantizer limit", criterion_2_soft_hard_limit},
      {3, "gradient suite (finite differences)", criterion_3_gradient_suite},
      {4, "attack effectiveness protocol", criterion_4_attack_effectiveness},
      {5, "attack constraint compliance", criterion_5_constraint_compliance},
      {6, "bits transferability", criterion_6_bits_transfer},
      {7, "model transferability", criterion_7_model_transfer},
      {8, "Lloyd monotonicity and thread determinism",
       criterion_8_lloyd_monotonicity},
      {9, "metric correctness (average precision)",
       criterion_9_metric_correctness},
      {10, "algebraic identities (AOD/APD/KL)",
       criterion_10_algebraic_identities},
      {11, "persistence round trips and corrupt-header errors",
       criterion_11_persistence},
  };

  int failures = 0;
  for (const Entry& entry : criteria) {
    const auto start = Clock::now();
    Result result;
    std::string detail;
    try {
      result = entry.body(detail);
    } catch (const std::exception& e) {
      result = Failure{std::string("unexpected exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(Clock::now() - start).count();
    if (!result) {
      std::printf("[PASS] criterion %2d: %s (%.1fs)%s%s\n", entry.number,
                  entry.title, secs, detail.empty() ? "" : " -- ",
                  detail.c_str());
    } else {
      std::printf("[FAIL] criterion %2d: %s (%.1fs) -- %s\n", entry.number,
                  entry.title, secs, result->reason.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
