#pragma once

#include <cstdint>
#include <cmath>

#include <Eigen/Dense>

namespace srgeo {

// Counter-based generator: every draw is a pure function of (seed, stream,
// counter), so sampling loops are reproducible regardless of evaluation
// order and can be split across streams without coordination.
class Rng {
public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix(mix(mix(seed_) ^ stream_) ^ counter);
  }

  // Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller on two sub-draws of the counter.
  double normal(std::uint64_t counter) const {
    double u1 = static_cast<double>(bits(counter * 2) >> 11) * 0x1.0p-53;
    double u2 = static_cast<double>(bits(counter * 2 + 1) >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Uniform point in an axis box given per-coordinate [lo, hi] rows.
  Eigen::VectorXd in_box(std::uint64_t counter, const Eigen::MatrixX2d& box) const {
    Eigen::VectorXd p(box.rows());
    for (int i = 0; i < box.rows(); ++i)
      p[i] = uniform(counter * 64 + static_cast<std::uint64_t>(i), box(i, 0), box(i, 1));
    return p;
  }

  // Uniform direction on the unit sphere in R^n.
  Eigen::VectorXd unit_vector(std::uint64_t counter, int n) const {
    Eigen::VectorXd v(n);
    for (;;) {
      for (int i = 0; i < n; ++i) v[i] = normal(counter * 64 + 32 + static_cast<std::uint64_t>(i));
      double norm = v.norm();
      if (norm > 1e-12) return v / norm;
      counter = mix(counter) | 1;
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace srgeo
