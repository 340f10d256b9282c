#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace inv {

// Batch-major layout throughout: rows are samples, columns are features.
using MatRX = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecX = Eigen::VectorXf;
using Vec3 = Eigen::Vector3f;
using Mat3 = Eigen::Matrix3f;

// Deterministic RNG. mt19937 has a standard-pinned output sequence and the
// float mappings below avoid std::uniform_real_distribution, whose results
// are implementation-defined. Same seed -> same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return gen_(); }

  // [0, 1)
  float uniform() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0
  int uniform_int(int n) {
    return static_cast<int>(
        (static_cast<std::uint64_t>(next_u32()) * static_cast<std::uint64_t>(n)) >> 32);
  }

 private:
  std::mt19937 gen_;
};

// Stable seed derivation for per-frame sampling streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base ^ (0x9e3779b97f4a7c15ull * (stream + 1));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

}  // namespace inv
