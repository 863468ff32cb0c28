#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <utility>

#include "t3sr/errors.hpp"

namespace t3sr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Dims3 = std::array<Index, 3>;

// Cap applied to log-ratio quantities (PSNR, SNR) when the error term
// vanishes, so that reports stay finite.
inline constexpr double kDbCap = 200.0;

inline Index element_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

inline void check_mode(int mode) {
  if (mode < 1 || mode > 3) throw ParameterError("mode must be 1, 2 or 3");
}

// Dense order-3 tensor of doubles. The buffer is contiguous with the
// first index fastest: element (i,j,k) lives at i + I*(j + J*k). Every
// unfolding and Khatri-Rao ordering in this library is fixed against
// that layout; see unfold() below.
class Volume3 {
 public:
  Volume3() = default;
  Volume3(Index ni, Index nj, Index nk)
      : dims_{ni, nj, nk}, data_(Vector::Zero(checked_count(dims_))) {}
  explicit Volume3(const Dims3& dims) : Volume3(dims[0], dims[1], dims[2]) {}
  Volume3(const Dims3& dims, Vector data)
      : dims_(dims), data_(std::move(data)) {
    if (data_.size() != checked_count(dims_))
      throw DimensionError("Volume3: buffer length does not match dims");
  }

  const Dims3& dims() const { return dims_; }
  Index extent(int mode) const { return dims_[mode - 1]; }  // mode in 1..3
  Index size() const { return data_.size(); }

  double operator()(Index i, Index j, Index k) const {
    return data_[offset(i, j, k)];
  }
  double& operator()(Index i, Index j, Index k) {
    return data_[offset(i, j, k)];
  }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  bool all_finite() const { return data_.allFinite(); }

 private:
  static Index checked_count(const Dims3& d) {
    if (d[0] < 1 || d[1] < 1 || d[2] < 1)
      throw DimensionError("Volume3: extents must be positive");
    return element_count(d);
  }
  Index offset(Index i, Index j, Index k) const {
    return i + dims_[0] * (j + dims_[1] * k);
  }

  Dims3 dims_{0, 0, 0};
  Vector data_;
};

inline void check_same_dims(const Volume3& a, const Volume3& b,
                            const char* what) {
  if (a.dims() != b.dims())
    throw DimensionError(std::string(what) + ": volume dims differ");
}

inline Volume3 operator+(const Volume3& a, const Volume3& b) {
  check_same_dims(a, b, "operator+");
  return Volume3(a.dims(), a.data() + b.data());
}

inline Volume3 operator-(const Volume3& a, const Volume3& b) {
  check_same_dims(a, b, "operator-");
  return Volume3(a.dims(), a.data() - b.data());
}

inline Volume3 operator*(double s, const Volume3& a) {
  return Volume3(a.dims(), s * a.data());
}

inline double frobenius_norm(const Volume3& x) { return x.data().norm(); }

// Flattens x along `mode`. Columns are the mode-n fibers in
// lexicographic order, the lower-numbered remaining index fastest:
//   mode 1: column j + J*k holds x(:,j,k)
//   mode 2: column i + I*k holds x(i,:,k)
//   mode 3: column i + I*j holds x(i,j,:)
inline Matrix unfold(const Volume3& x, int mode) {
  check_mode(mode);
  const auto [ni, nj, nk] = x.dims();
  switch (mode) {
    case 1:
      return Eigen::Map<const Matrix>(x.data().data(), ni, nj * nk);
    case 2: {
      Matrix out(nj, ni * nk);
      for (Index k = 0; k < nk; ++k)
        out.middleCols(k * ni, ni) =
            Eigen::Map<const Matrix>(x.data().data() + k * ni * nj, ni, nj)
                .transpose();
      return out;
    }
    default:
      return Eigen::Map<const Matrix>(x.data().data(), ni * nj, nk)
          .transpose();
  }
}

// Exact inverse of unfold under the same fiber order.
inline Volume3 fold(const Matrix& m, int mode, const Dims3& dims) {
  check_mode(mode);
  const auto [ni, nj, nk] = dims;
  const Index lead = dims[mode - 1];
  if (m.rows() != lead || lead * m.cols() != element_count(dims))
    throw DimensionError("fold: matrix shape does not match target dims");
  Volume3 out(dims);
  switch (mode) {
    case 1:
      Eigen::Map<Matrix>(out.data().data(), ni, nj * nk) = m;
      break;
    case 2:
      for (Index k = 0; k < nk; ++k)
        Eigen::Map<Matrix>(out.data().data() + k * ni * nj, ni, nj) =
            m.middleCols(k * ni, ni).transpose();
      break;
    default:
      Eigen::Map<Matrix>(out.data().data(), ni * nj, nk) = m.transpose();
      break;
  }
  return out;
}

// x ×_mode p: replaces extent(mode) with p.rows(). Satisfies
// unfold(result, mode) == p * unfold(x, mode) without materializing the
// unfoldings.
inline Volume3 mode_product(const Volume3& x, const Matrix& p, int mode) {
  check_mode(mode);
  if (p.cols() != x.extent(mode))
    throw DimensionError("mode_product: inner dimensions do not match");
  const auto [ni, nj, nk] = x.dims();
  Dims3 out_dims = x.dims();
  out_dims[mode - 1] = p.rows();
  Volume3 out(out_dims);
  switch (mode) {
    case 1:
      Eigen::Map<Matrix>(out.data().data(), p.rows(), nj * nk).noalias() =
          p * Eigen::Map<const Matrix>(x.data().data(), ni, nj * nk);
      break;
    case 2:
      for (Index k = 0; k < nk; ++k)
        Eigen::Map<Matrix>(out.data().data() + k * ni * p.rows(), ni, p.rows())
            .noalias() =
            Eigen::Map<const Matrix>(x.data().data() + k * ni * nj, ni, nj) *
            p.transpose();
      break;
    default:
      Eigen::Map<Matrix>(out.data().data(), ni * nj, p.rows()).noalias() =
          Eigen::Map<const Matrix>(x.data().data(), ni * nj, nk) *
          p.transpose();
      break;
  }
  return out;
}

// Column-wise Kronecker product. The second factor's index varies
// fastest, so for X = [[U1,U2,U3]]:
//   unfold(X,1) = U1 * khatri_rao(U3, U2)^T
//   unfold(X,2) = U2 * khatri_rao(U3, U1)^T
//   unfold(X,3) = U3 * khatri_rao(U2, U1)^T
inline Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DimensionError("khatri_rao: column counts differ");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Index r = 0; r < a.cols(); ++r)
    for (Index i = 0; i < a.rows(); ++i)
      out.col(r).segment(i * b.rows(), b.rows()) = a(i, r) * b.col(r);
  return out;
}

}  // namespace t3sr
