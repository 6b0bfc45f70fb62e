#include "pqlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pqlab/parallel.hpp"

namespace pqlab {

namespace {

// Clean-query context frozen before the PGD iterations: Eq-style objectives
// treat the clean feature, its hard indices and its soft distribution as
// constants.
struct CleanContext {
  Vec feature;
  PqCode hard;
  CentroidDistribution dist;
};

CleanContext make_clean_context(const Vec& y, const FeatureNet& net,
                                const Codebook& cb, const SoftPqConfig& cfg) {
  CleanContext ctx;
  ctx.feature = forward(net, y);
  ctx.hard = hard_assign_cosine(ctx.feature, cb);
  ctx.dist = soft_distribution(ctx.feature, cb, cfg);
  return ctx;
}

LossGrad basic_from_context(const CleanContext& ctx, const Vec& y_hat,
                            const FeatureNet& net) {
  ForwardCache cache;
  const Vec feat = forward(net, y_hat, &cache);
  LossGrad out;
  out.loss = -squared_euclidean(ctx.feature, feat);
  Vec upstream(feat.size());
  for (std::size_t i = 0; i < feat.size(); ++i) {
    upstream[i] = 2.0 * (ctx.feature[i] - feat[i]);
  }
  out.grad = backward_input(net, cache, upstream);
  return out;
}

LossGrad apd_from_context(const CleanContext& ctx, const Vec& y_hat,
                          const FeatureNet& net, const Codebook& cb,
                          const SoftPqConfig& cfg) {
  ForwardCache cache;
  const Vec feat = forward(net, y_hat, &cache);
  const CentroidDistribution p_hat = soft_distribution(feat, cb, cfg);

  LossGrad out;
  out.loss = 0.0;
  std::vector<double> up_probs(p_hat.probs.size(), 0.0);
  for (int mi = 0; mi < cb.m; ++mi) {
    const std::size_t idx =
        static_cast<std::size_t>(mi) * cb.k + ctx.hard[mi];
    out.loss += std::log(p_hat.probs[idx]);
    up_probs[idx] = 1.0 / p_hat.probs[idx];
  }
  const Vec dz = input_gradient(feat, cb, cfg, up_probs);
  out.grad = backward_input(net, cache, dz);
  return out;
}

LossGrad aod_from_context(const CleanContext& ctx, const Vec& y_hat,
                          const FeatureNet& net, const Codebook& cb,
                          const SoftPqConfig& cfg) {
  ForwardCache cache;
  const Vec feat = forward(net, y_hat, &cache);
  const CentroidDistribution p_hat = soft_distribution(feat, cb, cfg);

  LossGrad out;
  out.loss = 0.0;
  std::vector<double> up_probs(p_hat.probs.size(), 0.0);
  for (std::size_t i = 0; i < p_hat.probs.size(); ++i) {
    out.loss += ctx.dist.probs[i] * std::log(p_hat.probs[i]);
    up_probs[i] = ctx.dist.probs[i] / p_hat.probs[i];
  }
  const Vec dz = input_gradient(feat, cb, cfg, up_probs);
  out.grad = backward_input(net, cache, dz);
  return out;
}

LossGrad loss_from_context(AttackLoss loss, const CleanContext& ctx,
                           const Vec& y_hat, const FeatureNet& net,
                           const Codebook& cb, const SoftPqConfig& cfg) {
  switch (loss) {
    case AttackLoss::kBasic:
      return basic_from_context(ctx, y_hat, net);
    case AttackLoss::kApd:
      return apd_from_context(ctx, y_hat, net, cb, cfg);
    case AttackLoss::kAod:
      return aod_from_context(ctx, y_hat, net, cb, cfg);
  }
  throw std::logic_error("loss_from_context: unknown loss");
}

}  // namespace

std::string attack_loss_name(AttackLoss loss) {
  switch (loss) {
    case AttackLoss::kBasic:
      return "basic";
    case AttackLoss::kApd:
      return "apd";
    case AttackLoss::kAod:
      return "aod";
  }
  return "unknown";
}

AttackLoss attack_loss_from_name(const std::string& name) {
  if (name == "basic") return AttackLoss::kBasic;
  if (name == "apd") return AttackLoss::kApd;
  if (name == "aod") return AttackLoss::kAod;
  throw std::invalid_argument("unknown attack loss '" + name + "'");
}

LossGrad basic_loss(const Vec& y, const Vec& y_hat, const FeatureNet& net) {
  if (y.size() != y_hat.size()) {
    throw std::invalid_argument("basic_loss: dimension mismatch");
  }
  CleanContext ctx;
  ctx.feature = forward(net, y);
  return basic_from_context(ctx, y_hat, net);
}

LossGrad apd_loss(const Vec& y, const Vec& y_hat, const FeatureNet& net,
                  const Codebook& codebook, const SoftPqConfig& config) {
  if (y.size() != y_hat.size()) {
    throw std::invalid_argument("apd_loss: dimension mismatch");
  }
  return apd_from_context(make_clean_context(y, net, codebook, config), y_hat,
                          net, codebook, config);
}

LossGrad aod_loss(const Vec& y, const Vec& y_hat, const FeatureNet& net,
                  const Codebook& codebook, const SoftPqConfig& config) {
  if (y.size() != y_hat.size()) {
    throw std::invalid_argument("aod_loss: dimension mismatch");
  }
  return aod_from_context(make_clean_context(y, net, codebook, config), y_hat,
                          net, codebook, config);
}

double kl_divergence(const CentroidDistribution& p,
                     const CentroidDistribution& p_hat) {
  if (p.m != p_hat.m || p.k != p_hat.k ||
      p.probs.size() != p_hat.probs.size()) {
    throw std::invalid_argument("kl_divergence: shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (!(p.probs[i] > 0.0) || !(p_hat.probs[i] > 0.0)) {
      throw std::invalid_argument("kl_divergence: non-positive entry");
    }
    acc += p.probs[i] * std::log(p.probs[i] / p_hat.probs[i]);
  }
  return acc;
}

AttackReport pgd_attack(const Vec& y, const FeatureNet& net,
                        const Codebook& codebook,
                        const SoftPqConfig& soft_config,
                        const AttackConfig& attack_config) {
  const AttackConfig& cfg = attack_config;
  if (!(cfg.clip_min < cfg.clip_max)) {
    throw std::invalid_argument("pgd_attack: clip_min must be < clip_max");
  }
  if (!(cfg.eta > 0.0)) {
    throw std::invalid_argument("pgd_attack: eta must be positive");
  }
  if (cfg.eta > cfg.clip_max - cfg.clip_min) {
    throw std::invalid_argument("pgd_attack: eta exceeds the input box");
  }
  if (cfg.iterations < 0) {
    throw std::invalid_argument("pgd_attack: negative iteration count");
  }
  for (double v : y) {
    if (v < cfg.clip_min || v > cfg.clip_max) {
      throw std::invalid_argument("pgd_attack: query outside the input box");
    }
  }

  const double step = cfg.step_size > 0.0
                          ? cfg.step_size
                          : cfg.eta / std::max(1, cfg.iterations) * 1.25;

  const CleanContext ctx =
      make_clean_context(y, net, codebook, soft_config);

  auto project = [&](Vec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = std::clamp(v[i], y[i] - cfg.eta, y[i] + cfg.eta);
      v[i] = std::clamp(v[i], cfg.clip_min, cfg.clip_max);
      // y + eta can round outward; nudge toward y until the recomputed
      // difference satisfies the budget exactly.
      while (std::abs(v[i] - y[i]) > cfg.eta) {
        v[i] = std::nextafter(v[i], y[i]);
      }
    }
  };

  Vec y_hat = y;
  if (cfg.random_start) {
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < y_hat.size(); ++i) {
      y_hat[i] += rng.uniform(-cfg.eta, cfg.eta);
    }
    project(y_hat);
  }

  AttackReport report;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const LossGrad lg =
        loss_from_context(cfg.loss, ctx, y_hat, net, codebook, soft_config);
    report.loss_trace.push_back(lg.loss);
    bool all_zero = true;
    for (double g : lg.grad) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("pgd_attack: non-finite gradient at iteration " +
                                 std::to_string(iter));
      }
      all_zero = all_zero && g == 0.0;
    }
    if (all_zero) {
      // The clean query is a stationary point of the Basic and AOD
      // objectives (it maximizes the cross-entropy term), where every
      // direction descends. Take one seeded sign step to leave it.
      Rng kick(mix64(cfg.seed ^ (0x51ED2701ULL + iter)));
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        y_hat[i] -= step * (kick.uniform() < 0.5 ? 1.0 : -1.0);
      }
    } else {
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        const double direction =
            cfg.step_rule == StepRule::kSign
                ? (lg.grad[i] > 0.0 ? 1.0 : (lg.grad[i] < 0.0 ? -1.0 : 0.0))
                : lg.grad[i];
        y_hat[i] -= step * direction;
      }
    }
    project(y_hat);
  }
  report.loss_trace.push_back(
      loss_from_context(cfg.loss, ctx, y_hat, net, codebook, soft_config)
          .loss);

  report.adversarial = y_hat;
  double linf = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    linf = std::max(linf, std::abs(y_hat[i] - y[i]));
  }
  report.linf_norm = linf;
  const CentroidDistribution p_adv =
      soft_distribution(forward(net, y_hat), codebook, soft_config);
  report.kl_to_clean = kl_divergence(ctx.dist, p_adv);
  return report;
}

std::vector<AttackReport> attack_batch(const std::vector<Vec>& queries,
                                       const FeatureNet& net,
                                       const Codebook& codebook,
                                       const SoftPqConfig& soft_config,
                                       const AttackConfig& attack_config,
                                       int threads) {
  std::vector<AttackReport> reports(queries.size());
  // Exceptions cannot leave an OpenMP region; collect and rethrow.
  std::vector<std::string> errors(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    try {
      AttackConfig cfg = attack_config;
      cfg.seed = mix64(attack_config.seed ^ mix64(i + 1));
      reports[i] = pgd_attack(queries[i], net, codebook, soft_config, cfg);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      throw std::runtime_error("attack_batch: query " + std::to_string(i) +
                               ": " + errors[i]);
    }
  }
  return reports;
}

}  // namespace pqlab
