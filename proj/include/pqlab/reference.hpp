#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pqlab/numkit.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/softpq.hpp"

// Plain serial implementations kept alongside the table-based and
// OpenMP-parallel kernels. Tests check the fast paths against these; the
// bench tool compares their throughput.
namespace pqlab::reference {

// One naive assignment pass: per-point linear scan, linear accumulation.
std::pair<std::vector<int>, double> assign_and_inertia(
    const std::vector<Vec>& points, const std::vector<Vec>& centroids);

// Exhaustive scans that decode every record and compute the exact distance,
// no lookup tables. Ties broken by ascending id, like search().
std::vector<SearchHit> scan_adc(const Vec& query, const PqIndex& index);
std::vector<SearchHit> scan_sdc(const Vec& query, const PqIndex& index);

// Centroid gradient evaluated with the explicit K x K two-branch sum over
// da_mk'/dc_mk (the k == k' and k != k' cases written out separately)
// instead of the collapsed O(K) form.
std::vector<Vec> centroid_gradient_quadratic(const Vec& x,
                                             const Codebook& codebook,
                                             const SoftPqConfig& config,
                                             const Vec& upstream);

}  // namespace pqlab::reference
