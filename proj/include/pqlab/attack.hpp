#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pqlab/featnet.hpp"
#include "pqlab/numkit.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/softpq.hpp"

namespace pqlab {

enum class AttackLoss { kBasic, kApd, kAod };
enum class StepRule { kSign, kRawGradient };

std::string attack_loss_name(AttackLoss loss);
AttackLoss attack_loss_from_name(const std::string& name);

struct AttackConfig {
  AttackLoss loss = AttackLoss::kAod;
  double eta = 8.0;        // L-infinity budget
  double step_size = 0.0;  // <= 0: eta / iterations * 1.25
  int iterations = 5;
  double clip_min = 0.0;
  double clip_max = 255.0;
  StepRule step_rule = StepRule::kSign;
  bool random_start = false;
  std::uint64_t seed = 0;
};

struct AttackReport {
  Vec adversarial;
  // Loss evaluated at the start of every iteration plus once at the final
  // iterate; iterations + 1 entries.
  std::vector<double> loss_trace;
  double kl_to_clean = 0.0;
  double linf_norm = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  Vec grad;  // with respect to the adversarial input
};

// L = -||F(y) - F(y_hat)||^2.
LossGrad basic_loss(const Vec& y, const Vec& y_hat, const FeatureNet& net);

// Type I: L = sum_m log p_hat[m][b_m] with b from the clean query's hard
// cosine assignment.
LossGrad apd_loss(const Vec& y, const Vec& y_hat, const FeatureNet& net,
                  const Codebook& codebook, const SoftPqConfig& config);

// Type II: L = sum_m sum_k p_mk log p_hat_mk with p from the clean query,
// held fixed.
LossGrad aod_loss(const Vec& y, const Vec& y_hat, const FeatureNet& net,
                  const Codebook& codebook, const SoftPqConfig& config);

double kl_divergence(const CentroidDistribution& p,
                     const CentroidDistribution& p_hat);

// Projected gradient descent inside the eta L-infinity ball intersected with
// the [clip_min, clip_max] box. Clean-query quantities are computed once and
// frozen across iterations.
AttackReport pgd_attack(const Vec& y, const FeatureNet& net,
                        const Codebook& codebook,
                        const SoftPqConfig& soft_config,
                        const AttackConfig& attack_config);

// Independent attacks over a query batch; parallel and deterministic.
std::vector<AttackReport> attack_batch(const std::vector<Vec>& queries,
                                       const FeatureNet& net,
                                       const Codebook& codebook,
                                       const SoftPqConfig& soft_config,
                                       const AttackConfig& attack_config,
                                       int threads = 0);

}  // namespace pqlab
