#include "pqlab/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pqlab::reference {

namespace {

std::vector<SearchHit> rank_by_distance(const std::vector<double>& d2,
                                        const std::vector<std::uint32_t>& ids) {
  std::vector<std::size_t> order(d2.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d2[a] != d2[b]) return d2[a] < d2[b];
    return ids[a] < ids[b];
  });
  std::vector<SearchHit> hits(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    hits[r] = {ids[order[r]], std::sqrt(d2[order[r]])};
  }
  return hits;
}

Vec reconstruct(const PqIndex& index, std::size_t i) {
  Vec rec = decode(index.codes[i], index.codebook);
  if (index.coarse) {
    const Vec& cc = index.coarse->centroids[index.coarse_ids[i]];
    for (std::size_t d = 0; d < rec.size(); ++d) rec[d] += cc[d];
  }
  return rec;
}

}  // namespace

std::pair<std::vector<int>, double> assign_and_inertia(
    const std::vector<Vec>& points, const std::vector<Vec>& centroids) {
  if (centroids.empty()) {
    throw std::invalid_argument("assign_and_inertia: no centroids");
  }
  std::vector<int> assignments(points.size(), 0);
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    int best = 0;
    double best_d2 = squared_euclidean(points[i], centroids[0]);
    for (std::size_t j = 1; j < centroids.size(); ++j) {
      const double d2 = squared_euclidean(points[i], centroids[j]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = static_cast<int>(j);
      }
    }
    assignments[i] = best;
    inertia += best_d2;
  }
  return {assignments, inertia};
}

std::vector<SearchHit> scan_adc(const Vec& query, const PqIndex& index) {
  std::vector<double> d2(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    d2[i] = squared_euclidean(query, reconstruct(index, i));
  }
  return rank_by_distance(d2, index.ids);
}

std::vector<SearchHit> scan_sdc(const Vec& query, const PqIndex& index) {
  Vec query_side;
  if (index.coarse) {
    const auto [ci, code] =
        encode_residual(query, *index.coarse, index.codebook);
    query_side = decode(code, index.codebook);
    const Vec& cc = index.coarse->centroids[ci];
    for (std::size_t d = 0; d < query_side.size(); ++d) query_side[d] += cc[d];
  } else {
    query_side = decode(encode(query, index.codebook), index.codebook);
  }
  std::vector<double> d2(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    d2[i] = squared_euclidean(query_side, reconstruct(index, i));
  }
  return rank_by_distance(d2, index.ids);
}

std::vector<Vec> centroid_gradient_quadratic(const Vec& x,
                                             const Codebook& codebook,
                                             const SoftPqConfig& config,
                                             const Vec& upstream) {
  if (upstream.size() != static_cast<std::size_t>(codebook.dim())) {
    throw std::invalid_argument(
        "centroid_gradient_quadratic: upstream shape mismatch");
  }
  const CentroidDistribution dist = soft_distribution(x, codebook, config);

  std::vector<Vec> grads(static_cast<std::size_t>(codebook.m) * codebook.k,
                         Vec(codebook.sub_dim, 0.0));
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t row = static_cast<std::size_t>(mi) * codebook.k;
    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    const Vec um(upstream.begin() + off,
                 upstream.begin() + off + codebook.sub_dim);
    Vec xm(x.begin() + off, x.begin() + off + codebook.sub_dim);
    if (config.normalize_subvectors) xm = l2_normalize(xm);

    for (int ki = 0; ki < codebook.k; ++ki) {
      Vec& g = grads[row + ki];
      const double a_k = dist.probs[row + ki];
      // Direct term a_mk * dL/ds_m.
      for (int d = 0; d < codebook.sub_dim; ++d) g[d] = a_k * um[d];
      // sum_k' (da_mk'/dc_mk) <c_mk', dL/ds_m> with the two-branch form.
      for (int kp = 0; kp < codebook.k; ++kp) {
        const double a_kp = dist.probs[row + kp];
        const double coupling = inner_product(codebook.centroid(mi, kp), um);
        double da;  // scalar factor of da_mk'/dc_mk along 2*alpha*x_m
        if (kp == ki) {
          da = a_k * (1.0 - a_k);
        } else {
          da = -a_kp * a_k;
        }
        const double scale = 2.0 * config.alpha * da * coupling;
        for (int d = 0; d < codebook.sub_dim; ++d) g[d] += scale * xm[d];
      }
    }
  }
  return grads;
}

}  // namespace pqlab::reference
