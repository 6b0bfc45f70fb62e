#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pqlab/reference.hpp"
#include "pqlab/softpq.hpp"
#include "support/oracles.hpp"

using pqlab::Codebook;
using pqlab::CentroidDistribution;
using pqlab::PqCode;
using pqlab::Rng;
using pqlab::SoftPqConfig;
using pqlab::Vec;

TEST_CASE("hard_assign_cosine picks the max inner product") {
  Rng rng(51);
  const Codebook cb = oracles::random_codebook(rng, 2, 6, 4);

  // A sub-vector equal to one centroid selects it.
  Vec z = cb.centroid(0, 5);
  const Vec& c2 = cb.centroid(1, 2);
  z.insert(z.end(), c2.begin(), c2.end());
  CHECK(pqlab::hard_assign_cosine(z, cb) == PqCode{5, 2});

  // All-tie geometry (zero vector) resolves to index 0.
  CHECK(pqlab::hard_assign_cosine(Vec(8, 0.0), cb) == PqCode{0, 0});

  // Random oracle agreement.
  for (int t = 0; t < 20; ++t) {
    const Vec v = oracles::random_unit_vec(rng, 8);
    const PqCode got = pqlab::hard_assign_cosine(v, cb);
    for (int mi = 0; mi < 2; ++mi) {
      const Vec sub(v.begin() + mi * 4, v.begin() + (mi + 1) * 4);
      int best = 0;
      double best_ip = pqlab::inner_product(sub, cb.centroid(mi, 0));
      for (int ki = 1; ki < 6; ++ki) {
        const double ip = pqlab::inner_product(sub, cb.centroid(mi, ki));
        if (ip > best_ip) {
          best_ip = ip;
          best = ki;
        }
      }
      CHECK(got[mi] == best);
    }
  }

  CHECK_THROWS_AS(pqlab::hard_assign_cosine(Vec(7, 0.0), cb),
                  std::invalid_argument);
}

TEST_CASE("soft_distribution rows are stochastic and match Eq-by-hand values") {
  Rng rng(52);
  const Codebook cb = oracles::random_codebook(rng, 3, 5, 4);
  const SoftPqConfig cfg{0.5, true};

  const Vec z = oracles::random_unit_vec(rng, 12);
  const CentroidDistribution dist = pqlab::soft_distribution(z, cb, cfg);
  CHECK(dist.m == 3);
  CHECK(dist.k == 5);
  CHECK(dist.temperature == 0.5);
  for (int mi = 0; mi < 3; ++mi) {
    double sum = 0.0;
    for (int ki = 0; ki < 5; ++ki) {
      CHECK(dist.at(mi, ki) > 0.0);
      sum += dist.at(mi, ki);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Two orthonormal centroids, z on the first: softmax(1, 0) at alpha=0.5.
  Codebook tiny;
  tiny.m = 1;
  tiny.k = 2;
  tiny.sub_dim = 2;
  tiny.centroids = {{1.0, 0.0}, {0.0, 1.0}};
  const CentroidDistribution d2 =
      pqlab::soft_distribution({1.0, 0.0}, tiny, cfg);
  const double e = std::exp(1.0);
  CHECK(d2.at(0, 0) == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
  CHECK(d2.at(0, 1) == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));

  // K=1 is a point mass.
  const Codebook single = oracles::random_codebook(rng, 2, 1, 3);
  const CentroidDistribution d1 =
      pqlab::soft_distribution(oracles::random_vec(rng, 6), single, cfg);
  CHECK(d1.at(0, 0) == 1.0);
  CHECK(d1.at(1, 0) == 1.0);
}

TEST_CASE("soft distribution argmax matches the hard assignment") {
  Rng rng(53);
  const Codebook cb = oracles::random_codebook(rng, 2, 8, 5);
  for (double alpha : {0.5, 1.0, 10.0}) {
    const SoftPqConfig cfg{alpha, true};
    for (int t = 0; t < 20; ++t) {
      const Vec z = oracles::random_unit_vec(rng, 10);
      const PqCode hard = pqlab::hard_assign_cosine(z, cb);
      const CentroidDistribution dist = pqlab::soft_distribution(z, cb, cfg);
      for (int mi = 0; mi < 2; ++mi) {
        int arg = 0;
        for (int ki = 1; ki < 8; ++ki) {
          if (dist.at(mi, ki) > dist.at(mi, arg)) arg = ki;
        }
        CHECK(arg == hard[mi]);
      }
    }
  }
}

TEST_CASE("soft_quantize approaches the hard decode as alpha grows") {
  Rng rng(54);
  const Codebook cb = oracles::random_codebook(rng, 2, 6, 4);
  const Vec z = oracles::random_unit_vec(rng, 8);
  const Vec hard = pqlab::decode(pqlab::hard_assign_cosine(z, cb), cb);

  double prev = 1e300;
  for (double alpha : {1.0, 10.0, 100.0, 1000.0}) {
    const Vec soft = pqlab::soft_quantize(z, cb, SoftPqConfig{alpha, true});
    const double gap = std::sqrt(pqlab::squared_euclidean(soft, hard));
    CHECK(gap <= prev + 1e-12);
    prev = gap;
  }
  CHECK(prev < 1e-3);

  // K=1 reduces to the concatenated centroids.
  const Codebook single = oracles::random_codebook(rng, 3, 1, 2);
  Vec expect;
  for (int mi = 0; mi < 3; ++mi) {
    const Vec& c = single.centroid(mi, 0);
    expect.insert(expect.end(), c.begin(), c.end());
  }
  const Vec got =
      pqlab::soft_quantize(oracles::random_vec(rng, 6), single,
                           SoftPqConfig{0.5, true});
  CHECK(oracles::rel_err(got, expect) < 1e-12);
}

TEST_CASE("input_gradient matches finite differences") {
  Rng rng(55);
  for (int t = 0; t < 20; ++t) {
    const int m = 2, k = 4, sub = 3;
    const Codebook cb = oracles::random_codebook(rng, m, k, sub);
    const SoftPqConfig cfg{t % 2 == 0 ? 0.5 : 2.0, t % 3 != 0};
    const Vec z = oracles::random_vec(rng, m * sub);
    std::vector<double> upstream(m * k);
    for (double& u : upstream) u = rng.normal();

    const Vec analytic = pqlab::input_gradient(z, cb, cfg, upstream);
    const Vec numeric = oracles::fd_gradient(
        [&](const Vec& probe) {
          const CentroidDistribution d = pqlab::soft_distribution(probe, cb, cfg);
          double acc = 0.0;
          for (std::size_t i = 0; i < d.probs.size(); ++i) {
            acc += upstream[i] * d.probs[i];
          }
          return acc;
        },
        z);
    CHECK(oracles::rel_err(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("input_gradient edge cases") {
  Rng rng(56);
  const Codebook cb = oracles::random_codebook(rng, 2, 4, 3);
  const Vec z = oracles::random_vec(rng, 6);

  const Vec zero = pqlab::input_gradient(z, cb, SoftPqConfig{},
                                         std::vector<double>(8, 0.0));
  for (double g : zero) CHECK(g == 0.0);

  // K=1: probabilities are constant, so the gradient vanishes.
  const Codebook single = oracles::random_codebook(rng, 2, 1, 3);
  const Vec g1 = pqlab::input_gradient(z, single, SoftPqConfig{},
                                       std::vector<double>{1.0, -2.0});
  for (double g : g1) CHECK(g == doctest::Approx(0.0).epsilon(1e-15));

  CHECK_THROWS_AS(
      pqlab::input_gradient(z, cb, SoftPqConfig{}, std::vector<double>(5, 0.0)),
      std::invalid_argument);
}

TEST_CASE("centroid_gradient matches finite differences") {
  Rng rng(57);
  for (int t = 0; t < 20; ++t) {
    const int m = 2, k = 4, sub = 3;
    const Codebook cb = oracles::random_codebook(rng, m, k, sub);
    const SoftPqConfig cfg{1.0, true};
    const Vec x = oracles::random_vec(rng, m * sub);
    Vec upstream(m * sub);
    for (double& u : upstream) u = rng.normal();

    const std::vector<Vec> analytic =
        pqlab::centroid_gradient(x, cb, cfg, upstream);

    for (int mi = 0; mi < m; ++mi) {
      for (int ki = 0; ki < k; ++ki) {
        const Vec numeric = oracles::fd_gradient(
            [&](const Vec& probe) {
              Codebook perturbed = cb;
              perturbed.centroid(mi, ki) = probe;
              const Vec s = pqlab::soft_quantize(x, perturbed, cfg);
              double acc = 0.0;
              for (std::size_t i = 0; i < s.size(); ++i) {
                acc += upstream[i] * s[i];
              }
              return acc;
            },
            cb.centroid(mi, ki));
        CHECK(oracles::rel_err(analytic[mi * k + ki], numeric) < 1e-4);
      }
    }
  }
}

TEST_CASE("centroid_gradient equals the explicit two-branch reference") {
  Rng rng(58);
  for (int t = 0; t < 10; ++t) {
    const Codebook cb = oracles::random_codebook(rng, 3, 6, 4);
    const SoftPqConfig cfg{t % 2 == 0 ? 0.5 : 3.0, true};
    const Vec x = oracles::random_vec(rng, 12);
    Vec upstream(12);
    for (double& u : upstream) u = rng.normal();

    const std::vector<Vec> fast = pqlab::centroid_gradient(x, cb, cfg, upstream);
    const std::vector<Vec> ref =
        pqlab::reference::centroid_gradient_quadratic(x, cb, cfg, upstream);
    REQUIRE(fast.size() == ref.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(oracles::rel_err(fast[i], ref[i]) < 1e-12);
    }
  }
}

TEST_CASE("centroid_gradient limits") {
  Rng rng(59);
  const int m = 2, k = 4, sub = 3;
  const Codebook cb = oracles::random_codebook(rng, m, k, sub);
  Vec upstream(m * sub);
  for (double& u : upstream) u = rng.normal();
  const Vec x = oracles::random_vec(rng, m * sub);

  // Tiny alpha: the through-probability term carries the 2*alpha factor, so
  // the gradient collapses to a_mk * upstream_m with near-uniform a.
  const std::vector<Vec> grads =
      pqlab::centroid_gradient(x, cb, SoftPqConfig{1e-12, true}, upstream);
  for (int mi = 0; mi < m; ++mi) {
    for (int ki = 0; ki < k; ++ki) {
      for (int d = 0; d < sub; ++d) {
        CHECK(grads[mi * k + ki][d] ==
              doctest::Approx(upstream[mi * sub + d] / k).epsilon(1e-6));
      }
    }
  }

  // K=1: constant probability 1, gradient equals the upstream slice.
  const Codebook single = oracles::random_codebook(rng, 2, 1, 3);
  const std::vector<Vec> g1 =
      pqlab::centroid_gradient(x, single, SoftPqConfig{1.0, true}, upstream);
  for (int mi = 0; mi < 2; ++mi) {
    for (int d = 0; d < 3; ++d) {
      CHECK(g1[mi][d] == doctest::Approx(upstream[mi * 3 + d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("uniform rows for equidistant geometry") {
  // Orthonormal centroids and a z orthogonal to all of them: every inner
  // product ties at zero, the row is uniform.
  Codebook cb;
  cb.m = 1;
  cb.k = 3;
  cb.sub_dim = 4;
  cb.centroids = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}};
  const CentroidDistribution dist = pqlab::soft_distribution(
      {0, 0, 0, 1}, cb, SoftPqConfig{0.5, true});
  for (int ki = 0; ki < 3; ++ki) {
    CHECK(dist.at(0, ki) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }

  // Mean of centroids under an all-tie row.
  const Vec s = pqlab::soft_quantize({0, 0, 0, 1}, cb, SoftPqConfig{0.5, true});
  CHECK(s[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(s[3] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("alpha scaling never changes the row argmax") {
  Rng rng(60);
  const Codebook cb = oracles::random_codebook(rng, 2, 6, 4);
  for (int t = 0; t < 20; ++t) {
    const Vec z = oracles::random_unit_vec(rng, 8);
    int prev_arg[2] = {-1, -1};
    for (double alpha : {0.1, 0.5, 2.0, 25.0}) {
      const CentroidDistribution d =
          pqlab::soft_distribution(z, cb, SoftPqConfig{alpha, true});
      for (int mi = 0; mi < 2; ++mi) {
        int arg = 0;
        for (int ki = 1; ki < 6; ++ki) {
          if (d.at(mi, ki) > d.at(mi, arg)) arg = ki;
        }
        if (prev_arg[mi] >= 0) CHECK(arg == prev_arg[mi]);
        prev_arg[mi] = arg;
      }
    }
  }
}
