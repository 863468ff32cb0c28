#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace t3sr {

/// Seeded standard-normal sampler: mt19937_64 driving a Box-Muller
/// transform. The transform is spelled out here instead of using
/// std::normal_distribution, whose algorithm is implementation-defined;
/// a recorded seed must replay to the same stream on any build of the
/// same binary. The algorithm name goes into run manifests.
class GaussianSampler {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/box-muller";

  explicit GaussianSampler(std::uint64_t seed) : eng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite, u2 in [0,1).
    const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = kTwoPi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925287;

  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace t3sr
