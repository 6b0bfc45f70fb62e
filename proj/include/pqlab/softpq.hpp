#pragma once

#include <vector>

#include "pqlab/numkit.hpp"
#include "pqlab/pq.hpp"

namespace pqlab {

// Row-stochastic M x K matrix of centroid-assignment probabilities.
struct CentroidDistribution {
  int m = 0;
  int k = 0;
  std::vector<double> probs;  // row-major, row per subspace
  double temperature = 0.5;   // the alpha that produced it

  double at(int mi, int ki) const {
    return probs[static_cast<std::size_t>(mi) * k + ki];
  }
};

struct SoftPqConfig {
  // Logit is 2 * alpha * <z_m, c_mk>; alpha = 0.5 gives the plain
  // inner-product softmax, large alpha approaches the hard assignment.
  double alpha = 0.5;
  // Normalize each sub-vector before computing inner products.
  bool normalize_subvectors = true;
};

// b_m = argmax_k <z_m, c_mk>, ties to the lowest index. Assumes unit-norm
// centroids (scale of z_m does not change the argmax).
PqCode hard_assign_cosine(const Vec& z, const Codebook& codebook);

CentroidDistribution soft_distribution(const Vec& z, const Codebook& codebook,
                                       const SoftPqConfig& config);

// Concatenation over m of sum_k p_mk * c_mk.
Vec soft_quantize(const Vec& z, const Codebook& codebook,
                  const SoftPqConfig& config);

// Jacobian-vector product through soft_distribution: upstream is dL/dprobs
// (M x K row-major), the result is dL/dz.
Vec input_gradient(const Vec& z, const Codebook& codebook,
                   const SoftPqConfig& config,
                   const std::vector<double>& upstream);

// dL/dc_mk for every centroid given dL/d(soft_quantize output). Both the
// direct path through the weighted sum and the path through the assignment
// probabilities are included.
std::vector<Vec> centroid_gradient(const Vec& x, const Codebook& codebook,
                                   const SoftPqConfig& config,
                                   const Vec& upstream);

}  // namespace pqlab
