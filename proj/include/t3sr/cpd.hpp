#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "t3sr/errors.hpp"
#include "t3sr/operators.hpp"
#include "t3sr/resample.hpp"
#include "t3sr/rng.hpp"
#include "t3sr/tucker.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

/// Canonical polyadic factors: the tensor is the sum of rank() rank-1
/// terms u1(:,r) outer u2(:,r) outer u3(:,r).
struct CpdFactors {
  Matrix u1, u2, u3;

  Index rank() const { return u1.cols(); }
};

enum class CpdInit {
  seeded_random,     // Gaussian entries, deterministic for a given seed
  hosvd_upsampled,   // leading singular vectors of the upsampled input
};

struct CpdConfig {
  Index rank = 500;
  int max_sweeps = 10;
  double rel_tol = 1e-4;
  double epsilon = 1.0;  // Tikhonov term in every pseudoinverse
  CpdInit init = CpdInit::seeded_random;
  std::uint64_t seed = 0;
};

/// Evaluates the factor model densely. The flattened form
/// u1 * khatri_rao(u3, u2)^T is the mode-1 unfolding of the sum of
/// rank-1 terms.
inline Volume3 cpd_reconstruct(const CpdFactors& f) {
  if (f.u2.cols() != f.rank() || f.u3.cols() != f.rank())
    throw DimensionError("cpd_reconstruct: factor column counts differ");
  const Dims3 dims{f.u1.rows(), f.u2.rows(), f.u3.rows()};
  if (f.rank() == 0) return Volume3(dims);
  return fold(f.u1 * khatri_rao(f.u3, f.u2).transpose(), 1, dims);
}

/// Largest admissible factor rank for a volume of these dims: each
/// unfolding must have at least as many columns as rank-1 terms.
inline Index cpd_rank_limit(const Dims3& dims) {
  const auto [ni, nj, nk] = dims;
  return std::min({nj * nk, ni * nk, ni * nj});
}

struct TfSisrResult {
  Volume3 x_hat;
  CpdFactors factors;
  std::vector<double> residual_trace;  // [0] is the pre-sweep residual
  int sweeps = 0;
  double seconds = 0.0;
};

namespace detail {

inline Matrix seeded_factor(Index rows, Index rank, double scale,
                            GaussianSampler& g) {
  Matrix m(rows, rank);
  for (Index c = 0; c < rank; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = scale * g();
  return m;
}

// Gram of a Khatri-Rao product without forming it: columnwise products
// multiply, so the Gram is the Hadamard product of the factor Grams.
inline Matrix kr_gram(const Matrix& p, const Matrix& q) {
  return ((p.transpose() * p).array() * (q.transpose() * q).array()).matrix();
}

}  // namespace detail

/// Factor-based super-resolution: alternating least squares over the
/// rank-R factors of the unknown HR volume, with the blur/decimation
/// operators folded into every update so the fit happens in the LR
/// domain. Each update is
///   u_n = pinv_n * Y_(n) * B_n * (gram(B_n) + eps I)^{-1}
/// where B_n is the Khatri-Rao product of the other two LR-projected
/// factors. Sweeps stop when the relative change of the LR residual
/// falls below rel_tol.
inline TfSisrResult tf_sisr(const Volume3& y,
                            const std::array<ModeOperator, 3>& ops,
                            const CpdConfig& cfg) {
  if (cfg.rank < 1) throw ParameterError("tf_sisr: rank must be >= 1");
  if (cfg.rel_tol <= 0.0)
    throw ParameterError("tf_sisr: rel_tol must be > 0");
  if (cfg.max_sweeps < 1)
    throw ParameterError("tf_sisr: max_sweeps must be >= 1");
  if (cfg.epsilon < 0.0)
    throw ParameterError("tf_sisr: epsilon must be >= 0");
  for (int m = 0; m < 3; ++m)
    if (y.extent(m + 1) != ops[m].lr_len())
      throw DimensionError("tf_sisr: volume extents do not match operators");
  if (cfg.rank > cpd_rank_limit(y.dims()))
    throw ParameterError(
        "tf_sisr: rank " + std::to_string(cfg.rank) +
        " exceeds the smallest unfolding width " +
        std::to_string(cpd_rank_limit(y.dims())));

  const auto start = std::chrono::steady_clock::now();
  const Dims3 hr_dims{ops[0].hr_len, ops[1].hr_len, ops[2].hr_len};
  const double y_norm = frobenius_norm(y);

  TfSisrResult res;
  if (y_norm == 0.0) {
    res.factors = {Matrix::Zero(hr_dims[0], cfg.rank),
                   Matrix::Zero(hr_dims[1], cfg.rank),
                   Matrix::Zero(hr_dims[2], cfg.rank)};
    res.x_hat = Volume3(hr_dims);
    res.residual_trace = {0.0};
    return res;
  }

  CpdFactors f;
  const double scale = std::cbrt(
      y_norm / std::sqrt(static_cast<double>(cfg.rank) *
                         static_cast<double>(element_count(hr_dims))));
  if (cfg.init == CpdInit::seeded_random) {
    GaussianSampler g(cfg.seed);
    f.u1 = detail::seeded_factor(hr_dims[0], cfg.rank, scale, g);
    f.u2 = detail::seeded_factor(hr_dims[1], cfg.rank, scale, g);
    f.u3 = detail::seeded_factor(hr_dims[2], cfg.rank, scale, g);
  } else {
    const std::array<Index, 3> rates{ops[0].rate, ops[1].rate, ops[2].rate};
    const TuckerModel m = hosvd(upsample_trilinear(y, rates));
    GaussianSampler g(cfg.seed);
    Matrix* us[3] = {&f.u1, &f.u2, &f.u3};
    for (int n = 0; n < 3; ++n) {
      Matrix& u = *us[n];
      u = detail::seeded_factor(hr_dims[n], cfg.rank, scale, g);
      const Index lead = std::min(cfg.rank, m.factors[n].cols());
      u.leftCols(lead) =
          m.factors[n].leftCols(lead) * (scale * std::sqrt(double(hr_dims[n])));
    }
  }

  const std::array<Matrix, 3> yn{unfold(y, 1), unfold(y, 2), unfold(y, 3)};
  const Matrix eps_eye =
      cfg.epsilon * Matrix::Identity(cfg.rank, cfg.rank);

  const auto lr_residual = [&](const Matrix& p1, const Matrix& p2,
                               const Matrix& p3) {
    return (yn[0] - p1 * khatri_rao(p3, p2).transpose()).norm();
  };
  const auto check_finite = [&res](double r) {
    if (!std::isfinite(r))
      throw DivergenceError("tf_sisr: residual is not finite",
                            res.residual_trace);
    return r;
  };

  Matrix p1 = ops[0].composite * f.u1;
  Matrix p2 = ops[1].composite * f.u2;
  Matrix p3 = ops[2].composite * f.u3;
  res.residual_trace.push_back(check_finite(lr_residual(p1, p2, p3)));

  // One factor update: u = pinv * Yn * B * (gram + eps I)^{-1}, computed
  // as a solve against (Yn * B)^T rather than an explicit inverse.
  const auto update = [&eps_eye](const Matrix& pinv, const Matrix& yn_mode,
                                 const Matrix& pa, const Matrix& pb) {
    const Matrix proj = (yn_mode * khatri_rao(pa, pb)).transpose();
    return Matrix(pinv * (detail::kr_gram(pa, pb) + eps_eye)
                             .ldlt()
                             .solve(proj)
                             .transpose());
  };

  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    f.u1 = update(ops[0].pinv, yn[0], p3, p2);
    p1 = ops[0].composite * f.u1;
    f.u2 = update(ops[1].pinv, yn[1], p3, p1);
    p2 = ops[1].composite * f.u2;
    f.u3 = update(ops[2].pinv, yn[2], p2, p1);
    p3 = ops[2].composite * f.u3;

    const double prev = res.residual_trace.back();
    const double cur = check_finite(lr_residual(p1, p2, p3));
    res.residual_trace.push_back(cur);
    res.sweeps = sweep + 1;
    if (prev == 0.0 || std::abs(prev - cur) / prev < cfg.rel_tol) break;
  }

  res.x_hat = cpd_reconstruct(f);
  if (!res.x_hat.all_finite())
    throw DivergenceError("tf_sisr: reconstruction is not finite",
                          res.residual_trace);
  res.factors = std::move(f);
  const auto stop = std::chrono::steady_clock::now();
  res.seconds = std::chrono::duration<double>(stop - start).count();
  return res;
}

}  // namespace t3sr
