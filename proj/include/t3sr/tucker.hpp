#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <utility>
#include <variant>

#include "t3sr/errors.hpp"
#include "t3sr/operators.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

/// Tucker model of a tensor: core with orthonormal factor matrices, plus
/// the mode-wise singular values of the source tensor. sv[n] keeps the
/// full pre-truncation spectrum so truncated models can still report it.
struct TuckerModel {
  Volume3 core;
  std::array<Matrix, 3> factors;
  std::array<Vector, 3> sv;  // descending, length min(extent, other extents)
  bool truncation_clamped = false;
};

struct KeepCount {
  Index value = 1;
};
struct SvThreshold {
  double value = 0.0;
};
using ModeRule = std::variant<KeepCount, SvThreshold>;

/// Per-mode truncation rule: keep a fixed number of leading components,
/// or keep components whose singular value clears a threshold.
struct TruncationRule {
  std::array<ModeRule, 3> mode_rule;

  static TruncationRule counts(Index r1, Index r2, Index r3) {
    return {{ModeRule{KeepCount{r1}}, ModeRule{KeepCount{r2}},
             ModeRule{KeepCount{r3}}}};
  }
  static TruncationRule thresholds(double t1, double t2, double t3) {
    return {{ModeRule{SvThreshold{t1}}, ModeRule{SvThreshold{t2}},
             ModeRule{SvThreshold{t3}}}};
  }
};

namespace detail {

// Deterministic sign convention: the first entry of each column whose
// magnitude is non-negligible is made nonnegative.
inline void fix_column_signs(Matrix& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    const double big = m.col(c).cwiseAbs().maxCoeff();
    if (big == 0.0) continue;
    for (Index r = 0; r < m.rows(); ++r) {
      const double v = m(r, c);
      if (std::abs(v) > 1e-12 * big) {
        if (v < 0.0) m.col(c) = -m.col(c);
        break;
      }
    }
  }
}

// All min(rows, cols) left singular vectors of m, descending by singular
// value. Large wide unfoldings go through the Gram matrix (rows^2 storage
// instead of an SVD of the full matrix); small ones take a direct SVD,
// which resolves tiny singular values the squared spectrum cannot.
inline Matrix left_singular_basis(const Matrix& m) {
  const bool use_gram = m.rows() >= 128 && m.cols() >= 4 * m.rows();
  Matrix u;
  if (use_gram) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m * m.transpose());
    u = eig.eigenvectors().rowwise().reverse();  // descending eigenvalues
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
    u = svd.matrixU();
  }
  fix_column_signs(u);
  return u;
}

// Frobenius norms of the mode-n slices of the core.
inline Vector mode_slice_norms(const Volume3& core, int mode) {
  Vector out = Vector::Zero(core.extent(mode));
  const auto [ni, nj, nk] = core.dims();
  for (Index k = 0; k < nk; ++k)
    for (Index j = 0; j < nj; ++j)
      for (Index i = 0; i < ni; ++i) {
        const double v = core(i, j, k);
        const Index s = mode == 1 ? i : mode == 2 ? j : k;
        out[s] += v * v;
      }
  return out.cwiseSqrt();
}

}  // namespace detail

/// Full (untruncated) higher-order SVD: factors are the left singular
/// vectors of each unfolding, the core is the projection of y onto them,
/// and sv[n] holds the slice norms of the core, which coincide with the
/// singular values of unfold(y, n+1).
inline TuckerModel hosvd(const Volume3& y) {
  TuckerModel m;
  for (int mode = 1; mode <= 3; ++mode)
    m.factors[mode - 1] = detail::left_singular_basis(unfold(y, mode));
  m.core = mode_product(y, m.factors[0].transpose(), 1);
  m.core = mode_product(m.core, m.factors[1].transpose(), 2);
  m.core = mode_product(m.core, m.factors[2].transpose(), 3);
  for (int mode = 1; mode <= 3; ++mode)
    m.sv[mode - 1] = detail::mode_slice_norms(m.core, mode);
  return m;
}

/// Keeps the leading components selected by the rule. Columns are already
/// ordered by descending singular value, so the truncated core is the
/// leading block of the full core, identical to re-projecting the source
/// tensor onto the kept columns. A threshold that would discard every
/// component keeps one and sets truncation_clamped.
inline TuckerModel truncate(const TuckerModel& m, const TruncationRule& rule) {
  Dims3 keep{};
  bool clamped = false;
  for (int n = 0; n < 3; ++n) {
    const Index avail = m.factors[n].cols();  // <= sv[n].size() always
    if (const auto* count = std::get_if<KeepCount>(&rule.mode_rule[n])) {
      if (count->value < 1 || count->value > m.factors[n].rows())
        throw ParameterError(
            "truncate: kept count must be in [1, mode length]");
      keep[n] = std::min(count->value, avail);
    } else {
      const double tau = std::get<SvThreshold>(rule.mode_rule[n]).value;
      if (tau < 0.0)
        throw ParameterError("truncate: threshold must be >= 0");
      Index k = 0;
      while (k < avail && m.sv[n][k] >= tau) ++k;
      if (k == 0) {
        k = 1;
        clamped = true;
      }
      keep[n] = k;
    }
  }

  TuckerModel out;
  out.sv = m.sv;
  out.truncation_clamped = clamped;
  for (int n = 0; n < 3; ++n)
    out.factors[n] = m.factors[n].leftCols(keep[n]);
  out.core = Volume3(keep);
  for (Index k = 0; k < keep[2]; ++k)
    for (Index j = 0; j < keep[1]; ++j)
      for (Index i = 0; i < keep[0]; ++i) out.core(i, j, k) = m.core(i, j, k);
  return out;
}

/// Expands the model back to a full tensor.
inline Volume3 tucker_reconstruct(const TuckerModel& m) {
  Volume3 out = mode_product(m.core, m.factors[0], 1);
  out = mode_product(out, m.factors[1], 2);
  return mode_product(out, m.factors[2], 3);
}

inline std::array<Vector, 3> sv_spectrum(const TuckerModel& m) {
  return m.sv;
}

struct TdSisrResult {
  Volume3 x_hat;
  TuckerModel model;  // truncated; sv keeps the full spectra
  double seconds = 0.0;
};

/// Tucker-based super-resolution: HOSVD denoising by truncation, then
/// Tikhonov deconvolution. The pseudoinverses are folded into the factor
/// matrices, so the denoised volume is never materialized: the expansion
/// core ×_n (pinv_n V_n) is algebraically the same as reconstructing and
/// then deconvolving, one full-volume pass cheaper.
inline TdSisrResult td_sisr(const Volume3& y,
                            const std::array<ModeOperator, 3>& ops,
                            const TruncationRule& rule) {
  for (int m = 0; m < 3; ++m)
    if (y.extent(m + 1) != ops[m].lr_len())
      throw DimensionError("td_sisr: volume extents do not match operators");

  const auto start = std::chrono::steady_clock::now();
  TuckerModel truncated = truncate(hosvd(y), rule);

  std::array<Matrix, 3> composed;
  for (int m = 0; m < 3; ++m)
    composed[m] = ops[m].pinv * truncated.factors[m];

  Volume3 x = mode_product(truncated.core, composed[0], 1);
  x = mode_product(x, composed[1], 2);
  x = mode_product(x, composed[2], 3);
  const auto stop = std::chrono::steady_clock::now();

  TdSisrResult result;
  result.x_hat = std::move(x);
  result.model = std::move(truncated);
  result.seconds = std::chrono::duration<double>(stop - start).count();
  return result;
}

}  // namespace t3sr
