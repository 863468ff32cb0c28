#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "t3sr/errors.hpp"
#include "t3sr/operators.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

/// Boolean voxel grid with the same layout as Volume3.
class VoxelMask {
 public:
  explicit VoxelMask(const Dims3& dims)
      : dims_(dims),
        flags_(static_cast<std::size_t>(element_count(dims)), 0) {}

  const Dims3& dims() const { return dims_; }
  Index size() const { return static_cast<Index>(flags_.size()); }

  bool operator()(Index i, Index j, Index k) const {
    return flags_[index(i, j, k)] != 0;
  }
  void set(Index i, Index j, Index k, bool on) {
    flags_[index(i, j, k)] = on ? 1 : 0;
  }

  Index count() const {
    Index n = 0;
    for (auto f : flags_) n += f;
    return n;
  }

 private:
  std::size_t index(Index i, Index j, Index k) const {
    return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k));
  }

  Dims3 dims_;
  std::vector<std::uint8_t> flags_;
};

struct MetricReport {
  double psnr_db = 0.0;
  double ssi = 0.0;
  std::optional<double> dice;
  double runtime_s = 0.0;
  std::map<std::string, std::string> params;
};

/// Histogram threshold maximizing between-class variance on 256 bins.
/// The returned value is a bin edge, so `x >= threshold` reproduces the
/// chosen split exactly.
inline double otsu_threshold(const Volume3& x) {
  constexpr int kBins = 256;
  const double lo = x.data().minCoeff();
  const double hi = x.data().maxCoeff();
  if (!(hi > lo))
    throw ParameterError("otsu_threshold: volume has no dynamic range");

  const double width = (hi - lo) / kBins;
  std::array<std::int64_t, kBins> hist{};
  for (Index n = 0; n < x.size(); ++n) {
    auto bin = static_cast<int>((x.data()[n] - lo) / width);
    hist[std::clamp(bin, 0, kBins - 1)]++;
  }

  const auto total = static_cast<double>(x.size());
  double total_mean = 0.0;
  for (int b = 0; b < kBins; ++b) total_mean += b * double(hist[b]);
  total_mean /= total;

  int best_split = 0;
  double best_var = -1.0;
  double w0 = 0.0, sum0 = 0.0;
  for (int b = 0; b + 1 < kBins; ++b) {
    w0 += double(hist[b]);
    sum0 += b * double(hist[b]);
    if (w0 == 0.0 || w0 == total) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (total_mean * total - sum0) / (total - w0);
    const double var = w0 * (total - w0) * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_split = b;
    }
  }
  return lo + width * (best_split + 1);
}

struct FixedThreshold {
  double value = 0.0;
};
struct OtsuThreshold {};
using SegmentMethod = std::variant<FixedThreshold, OtsuThreshold>;

/// Voxels at or above the threshold.
inline VoxelMask threshold_segment(const Volume3& x,
                                   const SegmentMethod& method) {
  const double t = std::holds_alternative<FixedThreshold>(method)
                       ? std::get<FixedThreshold>(method).value
                       : otsu_threshold(x);
  VoxelMask mask(x.dims());
  const auto [ni, nj, nk] = x.dims();
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) mask.set(i, j, k, x(i, j, k) >= t);
  return mask;
}

/// One-voxel box dilation (26-neighborhood).
inline VoxelMask dilate(const VoxelMask& m) {
  const auto [ni, nj, nk] = m.dims();
  VoxelMask out(m.dims());
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) {
        if (!m(i, j, k)) continue;
        for (Index dk = -1; dk <= 1; ++dk)
          for (Index dj = -1; dj <= 1; ++dj)
            for (Index di = -1; di <= 1; ++di) {
              const Index a = i + di, b = j + dj, c = k + dk;
              if (a >= 0 && a < ni && b >= 0 && b < nj && c >= 0 && c < nk)
                out.set(a, b, c, true);
            }
      }
  return out;
}

/// The evaluation mask used for experiments: bright-object segmentation
/// of the reference, widened by one voxel so boundary voxels count.
inline VoxelMask otsu_dilate1_mask(const Volume3& ref) {
  return dilate(threshold_segment(ref, OtsuThreshold{}));
}

inline VoxelMask full_mask(const Dims3& dims) {
  VoxelMask m(dims);
  for (Index k = 0; k < dims[2]; ++k)
    for (Index j = 0; j < dims[1]; ++j)
      for (Index i = 0; i < dims[0]; ++i) m.set(i, j, k, true);
  return m;
}

inline double dice(const VoxelMask& a, const VoxelMask& b) {
  if (a.dims() != b.dims())
    throw DimensionError("dice: mask dims differ");
  const auto [ni, nj, nk] = a.dims();
  Index both = 0, total = 0;
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) {
        const bool va = a(i, j, k), vb = b(i, j, k);
        both += va && vb;
        total += va;
        total += vb;
      }
  if (total == 0) return 1.0;  // two empty segmentations agree
  return 2.0 * static_cast<double>(both) / static_cast<double>(total);
}

/// Peak signal-to-noise ratio over the masked voxels, with the peak
/// taken as the reference's full-volume dynamic range. Zero error hits
/// the +200 dB sentinel; the value is clamped symmetrically.
inline double psnr(const Volume3& ref, const Volume3& test,
                   const VoxelMask& mask) {
  check_same_dims(ref, test, "psnr");
  if (mask.dims() != ref.dims())
    throw DimensionError("psnr: mask dims differ from volumes");
  if (mask.count() == 0) throw ParameterError("psnr: empty mask");

  const auto [ni, nj, nk] = ref.dims();
  double acc = 0.0;
  Index n = 0;
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) {
        if (!mask(i, j, k)) continue;
        const double d = ref(i, j, k) - test(i, j, k);
        acc += d * d;
        ++n;
      }
  const double mse = acc / static_cast<double>(n);
  if (mse == 0.0) return kDbCap;
  const double peak = ref.data().maxCoeff() - ref.data().minCoeff();
  if (peak == 0.0) return -kDbCap;
  return std::clamp(10.0 * std::log10(peak * peak / mse), -kDbCap, kDbCap);
}

inline constexpr double kSsiWindowSigma = 1.5;
inline constexpr Index kSsiWindowRadius = 5;

namespace detail {

// Gaussian smoothing along one axis. Windows overhanging the volume are
// cut at the boundary and the remaining taps renormalized.
inline Volume3 smooth_axis(const Volume3& x, int mode, const Vector& taps) {
  const Index radius = (taps.size() - 1) / 2;
  const auto [ni, nj, nk] = x.dims();
  const Index len = x.extent(mode);

  Vector wsum = Vector::Zero(len);
  for (Index p = 0; p < len; ++p)
    for (Index t = -radius; t <= radius; ++t)
      if (p + t >= 0 && p + t < len) wsum[p] += taps[t + radius];

  Volume3 out(x.dims());
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) {
        const Index p = mode == 1 ? i : mode == 2 ? j : k;
        double acc = 0.0;
        for (Index t = -radius; t <= radius; ++t) {
          const Index q = p + t;
          if (q < 0 || q >= len) continue;
          acc += taps[t + radius] * (mode == 1   ? x(q, j, k)
                                     : mode == 2 ? x(i, q, k)
                                                 : x(i, j, q));
        }
        out(i, j, k) = acc / wsum[p];
      }
  return out;
}

inline Volume3 smooth3(const Volume3& x, const Vector& taps) {
  return smooth_axis(smooth_axis(smooth_axis(x, 1, taps), 2, taps), 3, taps);
}

inline Volume3 hadamard(const Volume3& a, const Volume3& b) {
  return Volume3(a.dims(), a.data().cwiseProduct(b.data()));
}

}  // namespace detail

/// Mean local structural similarity over the masked voxels, clamped to
/// [0,1]. Local statistics come from a separable 3D Gaussian window; the
/// stabilizing constants scale with the reference's dynamic range. Both
/// volumes are expressed relative to the reference minimum, which makes
/// the measure invariant to a shared offset and maps the data onto the
/// nonnegative range the similarity formula assumes.
inline double ssi(const Volume3& ref, const Volume3& test,
                  const VoxelMask& mask) {
  check_same_dims(ref, test, "ssi");
  if (mask.dims() != ref.dims())
    throw DimensionError("ssi: mask dims differ from volumes");
  if (mask.count() == 0) throw ParameterError("ssi: empty mask");
  const Index window = 2 * kSsiWindowRadius + 1;
  for (int mode = 1; mode <= 3; ++mode)
    if (ref.extent(mode) < window)
      throw ParameterError("ssi: volume smaller than the filter window");

  const double lo = ref.data().minCoeff();
  const double range = ref.data().maxCoeff() - lo;
  if (range == 0.0)
    throw ParameterError("ssi: reference has no dynamic range");
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  const Vector taps = gaussian_kernel(kSsiWindowSigma).taps;
  const Volume3 x(ref.dims(), (ref.data().array() - lo).matrix());
  const Volume3 y(test.dims(), (test.data().array() - lo).matrix());
  const Volume3 mu_x = detail::smooth3(x, taps);
  const Volume3 mu_y = detail::smooth3(y, taps);
  const Volume3 xx = detail::smooth3(detail::hadamard(x, x), taps);
  const Volume3 yy = detail::smooth3(detail::hadamard(y, y), taps);
  const Volume3 xy = detail::smooth3(detail::hadamard(x, y), taps);

  const auto [ni, nj, nk] = ref.dims();
  double acc = 0.0;
  Index n = 0;
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) {
        if (!mask(i, j, k)) continue;
        const double mx = mu_x(i, j, k), my = mu_y(i, j, k);
        const double vx = xx(i, j, k) - mx * mx;
        const double vy = yy(i, j, k) - my * my;
        const double cov = xy(i, j, k) - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++n;
      }
  return std::clamp(acc / static_cast<double>(n), 0.0, 1.0);
}

}  // namespace t3sr
