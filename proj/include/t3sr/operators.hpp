#pragma once

#include <array>
#include <cmath>
#include <utility>

#include "t3sr/errors.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

/// Odd-length, unit-sum, symmetric 1D blur kernel sampled from a
/// Gaussian. The centre tap is at index radius().
struct GaussianKernel1D {
  double sigma = 0.0;
  Vector taps;

  Index radius() const { return (taps.size() - 1) / 2; }
};

// Samples exp(-t^2 / 2 sigma^2) at integer offsets out to
// ceil(radius_in_sigmas * sigma), then normalizes to unit sum.
inline GaussianKernel1D gaussian_kernel(double sigma,
                                        double radius_in_sigmas = 3.0) {
  if (!(sigma > 0.0))
    throw ParameterError("gaussian_kernel: sigma must be positive");
  if (!(radius_in_sigmas > 0.0))
    throw ParameterError("gaussian_kernel: radius must be positive");
  const Index radius =
      static_cast<Index>(std::ceil(radius_in_sigmas * sigma));
  Vector taps(2 * radius + 1);
  for (Index t = -radius; t <= radius; ++t)
    taps[t + radius] =
        std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
  taps /= taps.sum();
  return GaussianKernel1D{sigma, std::move(taps)};
}

/// (A^T A + eps I)^-1 A^T, computed through a symmetric solve rather
/// than an explicit inverse.
inline Matrix tikhonov_pseudoinverse(const Matrix& a, double epsilon) {
  if (epsilon < 0.0)
    throw ParameterError("tikhonov_pseudoinverse: epsilon must be >= 0");
  Matrix gram = a.transpose() * a;
  gram.diagonal().array() += epsilon;
  return gram.ldlt().solve(Matrix(a.transpose()));
}

/// One axis of the degradation model: circulant blur followed by r-fold
/// decimation, with the Tikhonov pseudoinverse of the composite cached
/// since solvers reuse it every iteration.
struct ModeOperator {
  int mode = 1;  // 1..3
  Index hr_len = 0;
  Index rate = 1;
  double epsilon = 0.0;
  Matrix blur;       // hr_len x hr_len, rows are circular shifts of the taps
  Matrix down;       // (hr_len/rate) x hr_len, row i selects index i*rate
  Matrix composite;  // down * blur
  Matrix pinv;       // hr_len x (hr_len/rate)

  Index lr_len() const { return hr_len / rate; }
};

inline ModeOperator build_mode_operator(Index hr_len, Index rate,
                                        const GaussianKernel1D& kernel,
                                        double epsilon, int mode = 1) {
  check_mode(mode);
  if (hr_len < 1 || rate < 1)
    throw ParameterError("build_mode_operator: lengths must be positive");
  if (hr_len % rate != 0)
    throw ParameterError(
        "build_mode_operator: rate must divide the high-resolution extent");
  if (kernel.taps.size() > hr_len)
    throw ParameterError(
        "build_mode_operator: kernel is longer than the axis");

  ModeOperator op;
  op.mode = mode;
  op.hr_len = hr_len;
  op.rate = rate;
  op.epsilon = epsilon;

  const Index radius = kernel.radius();
  op.blur = Matrix::Zero(hr_len, hr_len);
  for (Index i = 0; i < hr_len; ++i)
    for (Index t = -radius; t <= radius; ++t) {
      const Index col = ((i + t) % hr_len + hr_len) % hr_len;
      op.blur(i, col) += kernel.taps[t + radius];
    }

  const Index lr_len = hr_len / rate;
  op.down = Matrix::Zero(lr_len, hr_len);
  for (Index i = 0; i < lr_len; ++i) op.down(i, i * rate) = 1.0;

  op.composite = op.down * op.blur;
  op.pinv = tikhonov_pseudoinverse(op.composite, epsilon);
  return op;
}

/// Block-averaging alternative to pure decimation. Kept behind a flag;
/// the pure-decimation operator is the reference configuration.
inline ModeOperator build_mode_operator_averaging(
    Index hr_len, Index rate, const GaussianKernel1D& kernel, double epsilon,
    int mode = 1) {
  ModeOperator op = build_mode_operator(hr_len, rate, kernel, epsilon, mode);
  const Index lr_len = hr_len / rate;
  op.down = Matrix::Zero(lr_len, hr_len);
  for (Index i = 0; i < lr_len; ++i)
    for (Index t = 0; t < rate; ++t)
      op.down(i, i * rate + t) = 1.0 / static_cast<double>(rate);
  op.composite = op.down * op.blur;
  op.pinv = tikhonov_pseudoinverse(op.composite, epsilon);
  return op;
}

/// Builds the three per-mode operators for a volume of extents hr_dims.
inline std::array<ModeOperator, 3> make_mode_operators(
    const Dims3& hr_dims, const std::array<double, 3>& sigmas, Index rate,
    double epsilon, double kernel_radius_sigmas = 3.0,
    bool average_downsample = false) {
  std::array<ModeOperator, 3> ops;
  for (int m = 0; m < 3; ++m) {
    GaussianKernel1D kernel =
        gaussian_kernel(sigmas[m], kernel_radius_sigmas);
    ops[m] = average_downsample
                 ? build_mode_operator_averaging(hr_dims[m], rate, kernel,
                                                 epsilon, m + 1)
                 : build_mode_operator(hr_dims[m], rate, kernel, epsilon,
                                       m + 1);
  }
  return ops;
}

/// Tikhonov-regularized deconvolution separated over the three modes:
/// y ×_1 pinv_1 ×_2 pinv_2 ×_3 pinv_3.
inline Volume3 apply_pinv_all_modes(const Volume3& y,
                                    const std::array<ModeOperator, 3>& ops) {
  for (int m = 0; m < 3; ++m)
    if (y.extent(m + 1) != ops[m].lr_len())
      throw DimensionError(
          "apply_pinv_all_modes: volume extents do not match the operators");
  Volume3 out = mode_product(y, ops[0].pinv, 1);
  out = mode_product(out, ops[1].pinv, 2);
  return mode_product(out, ops[2].pinv, 3);
}

}  // namespace t3sr
