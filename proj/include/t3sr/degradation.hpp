#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>

#include "t3sr/errors.hpp"
#include "t3sr/operators.hpp"
#include "t3sr/rng.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

/// Parameters of the forward model: separable Gaussian blur, r-fold
/// decimation, optional white Gaussian noise at a prescribed SNR.
struct DegradationSpec {
  std::array<double, 3> sigmas{8.0, 8.0, 8.0};
  Index rate = 2;
  std::optional<double> snr_db;  // absent = noiseless
  std::uint64_t seed = 0;
};

/// Blur + decimate + noise. The SNR reference is the mean squared value
/// of the *noiseless low-resolution* volume, so a stated level can be
/// re-measured from the output alone. Deterministic given the seed:
/// samples are drawn in buffer order from GaussianSampler.
inline Volume3 degrade(const Volume3& x_hr, const DegradationSpec& spec,
                       const std::array<ModeOperator, 3>& ops) {
  for (int m = 0; m < 3; ++m) {
    if (ops[m].hr_len != x_hr.extent(m + 1))
      throw DimensionError("degrade: operator extent does not match volume");
    if (ops[m].rate != spec.rate)
      throw DimensionError("degrade: operator rate does not match spec");
  }

  Volume3 lr = mode_product(x_hr, ops[0].composite, 1);
  lr = mode_product(lr, ops[1].composite, 2);
  lr = mode_product(lr, ops[2].composite, 3);

  if (spec.snr_db) {
    const double signal_power =
        lr.data().squaredNorm() / static_cast<double>(lr.size());
    const double noise_power =
        signal_power / std::pow(10.0, *spec.snr_db / 10.0);
    const double scale = std::sqrt(noise_power);
    GaussianSampler gauss(spec.seed);
    for (Index i = 0; i < lr.size(); ++i) lr.data()[i] += scale * gauss();
  }
  return lr;
}

/// 10 log10(||clean||^2 / ||noisy - clean||^2), capped when the volumes
/// coincide.
inline double measure_snr(const Volume3& clean, const Volume3& noisy) {
  check_same_dims(clean, noisy, "measure_snr");
  const double noise = (noisy.data() - clean.data()).squaredNorm();
  if (noise == 0.0) return kDbCap;
  const double snr = 10.0 * std::log10(clean.data().squaredNorm() / noise);
  return std::min(snr, kDbCap);
}

}  // namespace t3sr
