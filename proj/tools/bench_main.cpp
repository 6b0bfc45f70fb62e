// Compares the table-based OpenMP kernels against the plain serial reference
// implementations on synthetic data.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pqlab/attack.hpp"
#include "pqlab/dataio.hpp"
#include "pqlab/evalkit.hpp"
#include "pqlab/featnet.hpp"
#include "pqlab/kmeans.hpp"
#include "pqlab/parallel.hpp"
#include "pqlab/pq.hpp"
#include "pqlab/reference.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int repeats) {
  // One warm-up, then best of `repeats`.
  fn();
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double ref_ms, double kernel_ms) {
  std::printf("%-28s %10.2f ms %10.2f ms %8.2fx\n", name, ref_ms, kernel_ms,
              ref_ms / kernel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pqlab kernel benchmark: serial reference vs parallel kernels"};
  int n = 20000;
  int dim = 64;
  int m = 8;
  int k = 64;
  int queries = 20;
  int threads = 0;
  int repeats = 3;
  app.add_option("--n", n, "Database size");
  app.add_option("--dim", dim, "Vector dimension");
  app.add_option("--m", m, "Subspaces");
  app.add_option("--k", k, "Centroids per subspace");
  app.add_option("--queries", queries, "Query count");
  app.add_option("--threads", threads, "Worker cap (0 = all)");
  app.add_option("--repeats", repeats, "Timing repetitions");
  CLI11_PARSE(app, argc, argv);

  pqlab::SyntheticSpec spec;
  spec.classes = 10;
  spec.per_class = n / 10;
  spec.dim = dim;
  spec.separation = 10.0;
  spec.seed = 42;
  const pqlab::LabeledDataset data = pqlab::generate_synthetic(spec);

  std::printf("n=%zu dim=%d m=%d k=%d threads=%d\n", data.size(), dim, m, k,
              pqlab::resolve_threads(threads));
  std::printf("%-28s %13s %13s %9s\n", "kernel", "reference", "parallel",
              "speedup");

  // k-means assignment step.
  pqlab::KMeansConfig kcfg;
  kcfg.k = k;
  kcfg.max_iters = 1;
  kcfg.seed = 7;
  kcfg.threads = threads;
  {
    pqlab::Rng rng(1);
    std::vector<pqlab::Vec> centroids(k, pqlab::Vec(dim));
    for (auto& c : centroids) {
      for (double& v : c) v = rng.normal();
    }
    const double ref_ms = time_ms(
        [&] { pqlab::reference::assign_and_inertia(data.vectors, centroids); },
        repeats);
    kcfg.max_iters = 1;
    const double kernel_ms = time_ms(
        [&] {
          pqlab::KMeansConfig one = kcfg;
          one.init = pqlab::KMeansInit::kRandomPoints;
          one.max_iters = 1;
          pqlab::train_kmeans(data.vectors, one);
        },
        repeats);
    report("lloyd iteration", ref_ms, kernel_ms);
  }

  // Codebook for the scan benchmarks.
  pqlab::KMeansConfig cb_cfg;
  cb_cfg.k = k;
  cb_cfg.max_iters = 10;
  cb_cfg.seed = 7;
  cb_cfg.threads = threads;
  const pqlab::Codebook codebook =
      pqlab::train_codebooks(data.vectors, m, k, cb_cfg).codebook;
  std::vector<std::uint32_t> ids(data.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = data.ids[i];
  const pqlab::PqIndex index =
      pqlab::build_index(data.vectors, ids, codebook, std::nullopt, threads);

  {
    const double ref_ms = time_ms(
        [&] {
          for (int q = 0; q < queries; ++q) {
            pqlab::reference::scan_adc(data.vectors[q], index);
          }
        },
        repeats);
    const double kernel_ms = time_ms(
        [&] {
          for (int q = 0; q < queries; ++q) {
            pqlab::search(data.vectors[q], index, index.size(),
                          pqlab::DistanceMode::kAdc, threads);
          }
        },
        repeats);
    report("adc full scan", ref_ms, kernel_ms);
  }
  {
    const double ref_ms = time_ms(
        [&] {
          for (int q = 0; q < queries; ++q) {
            pqlab::reference::scan_sdc(data.vectors[q], index);
          }
        },
        repeats);
    const double kernel_ms = time_ms(
        [&] {
          for (int q = 0; q < queries; ++q) {
            pqlab::search(data.vectors[q], index, index.size(),
                          pqlab::DistanceMode::kSdc, threads);
          }
        },
        repeats);
    report("sdc full scan", ref_ms, kernel_ms);
  }

  // Centroid gradient: quadratic two-branch reference vs collapsed kernel.
  {
    pqlab::Rng rng(3);
    pqlab::Vec x(codebook.dim());
    pqlab::Vec upstream(codebook.dim());
    for (double& v : x) v = rng.normal();
    for (double& v : upstream) v = rng.normal();
    const pqlab::SoftPqConfig soft{1.0, true};
    const double ref_ms = time_ms(
        [&] {
          pqlab::reference::centroid_gradient_quadratic(x, codebook, soft,
                                                        upstream);
        },
        repeats);
    const double kernel_ms = time_ms(
        [&] { pqlab::centroid_gradient(x, codebook, soft, upstream); },
        repeats);
    report("centroid gradient", ref_ms, kernel_ms);
  }

  // Attack batch: per-query parallelism.
  {
    pqlab::FeatureNet net =
        pqlab::make_mlp(dim, {64, 32}, codebook.dim(), true, 11);
    pqlab::AttackConfig acfg;
    acfg.loss = pqlab::AttackLoss::kAod;
    acfg.eta = 1.0;
    acfg.iterations = 5;
    acfg.clip_min = -64.0;
    acfg.clip_max = 64.0;
    const pqlab::SoftPqConfig soft;
    std::vector<pqlab::Vec> qs(data.vectors.begin(),
                               data.vectors.begin() + queries);
    const double ref_ms = time_ms(
        [&] { pqlab::attack_batch(qs, net, codebook, soft, acfg, 1); },
        repeats);
    const double kernel_ms = time_ms(
        [&] { pqlab::attack_batch(qs, net, codebook, soft, acfg, threads); },
        repeats);
    report("pgd attack batch", ref_ms, kernel_ms);
  }

  return 0;
}
