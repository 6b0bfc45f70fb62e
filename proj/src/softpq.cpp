#include "pqlab/softpq.hpp"

#include <cmath>
#include <stdexcept>

namespace pqlab {

namespace {

void check_dims(const Vec& z, const Codebook& cb, const char* op) {
  if (cb.m < 1 || cb.k < 1 || cb.sub_dim < 1) {
    throw std::invalid_argument(std::string(op) + ": empty codebook");
  }
  if (static_cast<int>(z.size()) != cb.dim()) {
    throw std::invalid_argument(std::string(op) + ": vector dim " +
                                std::to_string(z.size()) +
                                " does not match codebook dim " +
                                std::to_string(cb.dim()));
  }
}

void check_config(const SoftPqConfig& cfg, const char* op) {
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) {
    throw std::invalid_argument(std::string(op) +
                                ": alpha must be finite and positive");
  }
}

Vec sub_vector(const Vec& z, int mi, int sub_dim) {
  const std::size_t off = static_cast<std::size_t>(mi) * sub_dim;
  return Vec(z.begin() + off, z.begin() + off + sub_dim);
}

}  // namespace

PqCode hard_assign_cosine(const Vec& z, const Codebook& codebook) {
  check_dims(z, codebook, "hard_assign_cosine");
  PqCode code(codebook.m);
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    int best = 0;
    double best_ip = 0.0;
    for (int ki = 0; ki < codebook.k; ++ki) {
      const Vec& c = codebook.centroid(mi, ki);
      double ip = 0.0;
      for (int d = 0; d < codebook.sub_dim; ++d) ip += z[off + d] * c[d];
      if (ki == 0 || ip > best_ip) {
        best_ip = ip;
        best = ki;
      }
    }
    code[mi] = static_cast<std::uint16_t>(best);
  }
  return code;
}

CentroidDistribution soft_distribution(const Vec& z, const Codebook& codebook,
                                       const SoftPqConfig& config) {
  check_dims(z, codebook, "soft_distribution");
  check_config(config, "soft_distribution");
  CentroidDistribution dist;
  dist.m = codebook.m;
  dist.k = codebook.k;
  dist.temperature = config.alpha;
  dist.probs.resize(static_cast<std::size_t>(codebook.m) * codebook.k);

  Vec logits(codebook.k);
  for (int mi = 0; mi < codebook.m; ++mi) {
    Vec zm = sub_vector(z, mi, codebook.sub_dim);
    if (config.normalize_subvectors) zm = l2_normalize(zm);
    for (int ki = 0; ki < codebook.k; ++ki) {
      logits[ki] =
          2.0 * config.alpha * inner_product(zm, codebook.centroid(mi, ki));
    }
    const Vec row = softmax(logits);
    for (int ki = 0; ki < codebook.k; ++ki) {
      dist.probs[static_cast<std::size_t>(mi) * codebook.k + ki] = row[ki];
    }
  }
  return dist;
}

Vec soft_quantize(const Vec& z, const Codebook& codebook,
                  const SoftPqConfig& config) {
  const CentroidDistribution dist = soft_distribution(z, codebook, config);
  Vec out(codebook.dim(), 0.0);
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    for (int ki = 0; ki < codebook.k; ++ki) {
      const double p = dist.at(mi, ki);
      const Vec& c = codebook.centroid(mi, ki);
      for (int d = 0; d < codebook.sub_dim; ++d) out[off + d] += p * c[d];
    }
  }
  return out;
}

Vec input_gradient(const Vec& z, const Codebook& codebook,
                   const SoftPqConfig& config,
                   const std::vector<double>& upstream) {
  check_dims(z, codebook, "input_gradient");
  check_config(config, "input_gradient");
  if (upstream.size() !=
      static_cast<std::size_t>(codebook.m) * codebook.k) {
    throw std::invalid_argument("input_gradient: upstream shape mismatch");
  }
  const CentroidDistribution dist = soft_distribution(z, codebook, config);

  Vec grad(codebook.dim(), 0.0);
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t row = static_cast<std::size_t>(mi) * codebook.k;
    // Softmax JVP: dL/dlogit_k = p_k (u_k - sum_j u_j p_j).
    double dot = 0.0;
    for (int ki = 0; ki < codebook.k; ++ki) {
      dot += upstream[row + ki] * dist.probs[row + ki];
    }
    Vec g_zhat(codebook.sub_dim, 0.0);
    for (int ki = 0; ki < codebook.k; ++ki) {
      const double g_logit = dist.probs[row + ki] * (upstream[row + ki] - dot);
      const double coef = 2.0 * config.alpha * g_logit;
      const Vec& c = codebook.centroid(mi, ki);
      for (int d = 0; d < codebook.sub_dim; ++d) g_zhat[d] += coef * c[d];
    }

    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    if (config.normalize_subvectors) {
      // Backprop through z_m / max(||z_m||, eps).
      const Vec zm = sub_vector(z, mi, codebook.sub_dim);
      const double r = l2_norm(zm);
      if (r >= kNormEps) {
        const double inv = 1.0 / r;
        double proj = 0.0;
        for (int d = 0; d < codebook.sub_dim; ++d) {
          proj += g_zhat[d] * zm[d] * inv;
        }
        for (int d = 0; d < codebook.sub_dim; ++d) {
          grad[off + d] = (g_zhat[d] - proj * zm[d] * inv) * inv;
        }
      } else {
        for (int d = 0; d < codebook.sub_dim; ++d) {
          grad[off + d] = g_zhat[d] / kNormEps;
        }
      }
    } else {
      for (int d = 0; d < codebook.sub_dim; ++d) grad[off + d] = g_zhat[d];
    }
  }
  return grad;
}

std::vector<Vec> centroid_gradient(const Vec& x, const Codebook& codebook,
                                   const SoftPqConfig& config,
                                   const Vec& upstream) {
  check_dims(x, codebook, "centroid_gradient");
  check_config(config, "centroid_gradient");
  if (upstream.size() != static_cast<std::size_t>(codebook.dim())) {
    throw std::invalid_argument("centroid_gradient: upstream shape mismatch");
  }
  const CentroidDistribution dist = soft_distribution(x, codebook, config);

  std::vector<Vec> grads(static_cast<std::size_t>(codebook.m) * codebook.k,
                         Vec(codebook.sub_dim, 0.0));
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t row = static_cast<std::size_t>(mi) * codebook.k;
    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    const Vec um(upstream.begin() + off,
                 upstream.begin() + off + codebook.sub_dim);
    Vec xm = sub_vector(x, mi, codebook.sub_dim);
    if (config.normalize_subvectors) xm = l2_normalize(xm);

    // t_k = <c_mk, u_m>; S = sum_k a_mk t_k. Summing the k == k' and k != k'
    // branches of da_mk'/dc_mk collapses to 2*alpha*a_mk*(t_k - S)*x_m.
    Vec t(codebook.k);
    double s = 0.0;
    for (int ki = 0; ki < codebook.k; ++ki) {
      t[ki] = inner_product(codebook.centroid(mi, ki), um);
      s += dist.probs[row + ki] * t[ki];
    }
    for (int ki = 0; ki < codebook.k; ++ki) {
      const double a = dist.probs[row + ki];
      const double through_probs = 2.0 * config.alpha * a * (t[ki] - s);
      Vec& g = grads[row + ki];
      for (int d = 0; d < codebook.sub_dim; ++d) {
        g[d] = a * um[d] + through_probs * xm[d];
      }
    }
  }
  return grads;
}

}  // namespace pqlab
