#include "pqlab/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pqlab {

namespace {

void check_same_dim(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

}  // namespace

double squared_euclidean(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "squared_euclidean");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double inner_product(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "inner_product");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double l2_norm(const Vec& a) { return std::sqrt(inner_product(a, a)); }

Vec l2_normalize(const Vec& a, double eps) {
  if (eps <= 0.0) {
    throw std::invalid_argument("l2_normalize: eps must be positive");
  }
  const double scale = 1.0 / std::max(l2_norm(a), eps);
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * scale;
  return out;
}

Vec softmax(const Vec& logits) {
  if (logits.empty()) {
    throw std::invalid_argument("softmax: empty input");
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (double& v : out) v *= inv;
  return out;
}

void check_finite(const Vec& a, const std::string& what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) {
      throw std::invalid_argument(what + ": non-finite entry at index " +
                                  std::to_string(i));
    }
  }
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
  state_ = mix64(seed ^ mix64(stream * 0x9E3779B97F4A7C15ULL + 1));
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on u1 in (0,1], u2 in [0,1).
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("uniform_index: n must be positive");
  }
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % static_cast<std::uint64_t>(n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % n);
}

Rng Rng::child(std::uint64_t stream) const {
  return Rng(seed_, stream_ * 0x9E3779B97F4A7C15ULL + stream + 1);
}

}  // namespace pqlab
