#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pqlab {

// Dense vector of 64-bit reals. All internal arithmetic is double precision;
// on-disk formats store 32-bit floats.
using Vec = std::vector<double>;

// Guard for L2 normalization of (near-)zero vectors.
inline constexpr double kNormEps = 1e-12;

double squared_euclidean(const Vec& a, const Vec& b);
double inner_product(const Vec& a, const Vec& b);
double l2_norm(const Vec& a);

// a / max(||a||, eps). Unit norm whenever ||a|| >= eps; the zero vector maps
// to itself.
Vec l2_normalize(const Vec& a, double eps = kNormEps);

// Max-subtracted stable softmax. Entries positive, sum to 1, argmax preserved.
Vec softmax(const Vec& logits);

// Throws std::invalid_argument if any entry is non-finite.
void check_finite(const Vec& a, const std::string& what);

// Deterministic splittable generator (splitmix64 core). A stream is fully
// determined by (seed, stream index), so parallel workers can derive
// independent child streams that are reproducible regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);
  double normal();                         // standard normal (Box-Muller)
  double normal(double mean, double stddev);
  std::size_t uniform_index(std::size_t n);  // unbiased draw from [0, n)

  // Child stream i of this stream. Children of distinct (stream, i) differ.
  Rng child(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; also used to fan a global seed out to stage seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace pqlab
