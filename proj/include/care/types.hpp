#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

namespace care {

using Scalar = double;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Batch layout convention: one sample per column.
//   features   d_in  x N
//   embeddings d_emb x N
//   logits     C     x N

// Deterministic RNG. The mt19937_64 output sequence is fully specified by
// the standard; the distribution mappings are hand-rolled because
// std::uniform_*_distribution is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  Scalar uniform() { return static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller (no cached second value).
  Scalar normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Derive an independent stream seed from a master seed and a stream tag.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace care
