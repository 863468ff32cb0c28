#pragma once

#include <array>
#include <cmath>

#include "t3sr/errors.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

/// Trilinear upsampling baseline. Output extent is rate * extent per
/// mode; low-resolution sample l maps to high-resolution index l * rate,
/// so kept decimation indices reproduce exactly. Edges clamp.
inline Volume3 upsample_trilinear(const Volume3& y,
                                  const std::array<Index, 3>& rates) {
  for (Index r : rates)
    if (r < 1) throw ParameterError("upsample_trilinear: rate must be >= 1");
  const Dims3 in = y.dims();
  const Dims3 out_dims = {in[0] * rates[0], in[1] * rates[1],
                          in[2] * rates[2]};
  Volume3 out(out_dims);

  auto split = [](Index idx, Index rate, Index n) {
    const double pos = static_cast<double>(idx) / static_cast<double>(rate);
    Index lo = static_cast<Index>(std::floor(pos));
    if (lo > n - 1) lo = n - 1;
    const Index hi = (lo + 1 < n) ? lo + 1 : lo;
    return std::pair<std::pair<Index, Index>, double>{{lo, hi},
                                                      pos - static_cast<double>(lo)};
  };

  for (Index k = 0; k < out_dims[2]; ++k) {
    const auto [kk, fk] = split(k, rates[2], in[2]);
    for (Index j = 0; j < out_dims[1]; ++j) {
      const auto [jj, fj] = split(j, rates[1], in[1]);
      for (Index i = 0; i < out_dims[0]; ++i) {
        const auto [ii, fi] = split(i, rates[0], in[0]);
        const double c00 = (1 - fi) * y(ii.first, jj.first, kk.first) +
                           fi * y(ii.second, jj.first, kk.first);
        const double c10 = (1 - fi) * y(ii.first, jj.second, kk.first) +
                           fi * y(ii.second, jj.second, kk.first);
        const double c01 = (1 - fi) * y(ii.first, jj.first, kk.second) +
                           fi * y(ii.second, jj.first, kk.second);
        const double c11 = (1 - fi) * y(ii.first, jj.second, kk.second) +
                           fi * y(ii.second, jj.second, kk.second);
        out(i, j, k) =
            (1 - fk) * ((1 - fj) * c00 + fj * c10) +
            fk * ((1 - fj) * c01 + fj * c11);
      }
    }
  }
  return out;
}

inline Volume3 upsample_trilinear(const Volume3& y, Index rate) {
  return upsample_trilinear(y, {rate, rate, rate});
}

}  // namespace t3sr
