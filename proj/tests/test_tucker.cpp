#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "t3sr/degradation.hpp"
#include "t3sr/tucker.hpp"
#include "test_support.hpp"

using namespace t3sr;
using t3sr::test::add_noise_snr;
using t3sr::test::blob_phantom;
using t3sr::test::low_rank_phantom;
using t3sr::test::random_vector;
using t3sr::test::random_volume;
using t3sr::test::rank1_volume;
using t3sr::test::rel_err;

namespace {

std::array<ModeOperator, 3> ops_for(const Dims3& hr_dims,
                                    std::array<double, 3> sigmas, Index rate,
                                    double epsilon) {
  return make_mode_operators(hr_dims, sigmas, rate, epsilon);
}

double discarded_energy(const TuckerModel& full, const Dims3& kept) {
  double acc = 0.0;
  for (int n = 0; n < 3; ++n)
    for (Index i = kept[n]; i < full.sv[n].size(); ++i)
      acc += full.sv[n][i] * full.sv[n][i];
  return acc;
}

}  // namespace

TEST_CASE("rank-1 tensor has a single non-dust singular value per mode",
          "[tucker]") {
  const Vector a = random_vector(6, 11);
  const Vector b = random_vector(5, 12);
  const Vector c = random_vector(4, 13);
  const Volume3 y = rank1_volume(a, b, c);
  const double expected = a.norm() * b.norm() * c.norm();

  const TuckerModel m = hosvd(y);
  for (int n = 0; n < 3; ++n) {
    REQUIRE(m.sv[n][0] == Catch::Approx(expected).epsilon(1e-12));
    for (Index i = 1; i < m.sv[n].size(); ++i)
      REQUIRE(std::abs(m.sv[n][i]) <= 1e-12);
  }
}

TEST_CASE("superdiagonal tensor is a fixed point of decompose-reconstruct",
          "[tucker]") {
  Volume3 y(4, 4, 4);
  const double diag[4] = {5.0, 3.0, 1.0, 0.25};
  for (Index i = 0; i < 4; ++i) y(i, i, i) = diag[i];

  const TuckerModel m = hosvd(y);
  REQUIRE(rel_err(tucker_reconstruct(m), y) <= 1e-12);
  for (int n = 0; n < 3; ++n)
    for (Index i = 0; i < 4; ++i)
      REQUIRE(m.sv[n][i] == Catch::Approx(diag[i]).margin(1e-12));
}

TEST_CASE("mode-wise singular values match the 2D SVD of each unfolding",
          "[tucker]") {
  const Volume3 y = random_volume({6, 5, 4}, 21);
  const TuckerModel m = hosvd(y);
  for (int mode = 1; mode <= 3; ++mode) {
    Eigen::BDCSVD<Matrix> svd(unfold(y, mode));
    const Vector& got = m.sv[mode - 1];
    const Vector& want = svd.singularValues();
    REQUIRE(got.size() == want.size());
    for (Index i = 0; i < got.size(); ++i)
      REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-10));
  }
}

TEST_CASE("full-rank model reconstructs the source exactly", "[tucker]") {
  const Volume3 y = random_volume({7, 6, 5}, 31);
  const TuckerModel m = hosvd(y);
  REQUIRE(rel_err(tucker_reconstruct(m), y) <= 1e-10);

  SECTION("factors are orthonormal") {
    for (int n = 0; n < 3; ++n) {
      const Matrix gram = m.factors[n].transpose() * m.factors[n];
      const Matrix eye = Matrix::Identity(gram.rows(), gram.cols());
      REQUIRE((gram - eye).norm() <= 1e-10);
    }
  }
  SECTION("core preserves the source energy") {
    REQUIRE(frobenius_norm(m.core) ==
            Catch::Approx(frobenius_norm(y)).epsilon(1e-10));
  }
  SECTION("core equals the projection of the source onto the factors") {
    Volume3 proj = mode_product(y, m.factors[0].transpose(), 1);
    proj = mode_product(proj, m.factors[1].transpose(), 2);
    proj = mode_product(proj, m.factors[2].transpose(), 3);
    REQUIRE(rel_err(m.core, proj) <= 1e-10);
  }
}

TEST_CASE("zero core reconstructs the zero tensor", "[tucker]") {
  TuckerModel m = hosvd(random_volume({4, 3, 5}, 41));
  m.core = Volume3(m.core.dims());
  const Volume3 out = tucker_reconstruct(m);
  REQUIRE(frobenius_norm(out) == 0.0);
  REQUIRE(out.dims() == Dims3{4, 3, 5});
}

TEST_CASE("keeping every component leaves the model unchanged", "[tucker]") {
  const Volume3 y = random_volume({6, 5, 4}, 51);
  const TuckerModel full = hosvd(y);
  const TuckerModel kept = truncate(
      full, TruncationRule::counts(full.sv[0].size(), full.sv[1].size(),
                                   full.sv[2].size()));
  REQUIRE_FALSE(kept.truncation_clamped);
  REQUIRE(rel_err(tucker_reconstruct(kept), y) <= 1e-12);
}

TEST_CASE("rank-1 tensor survives truncation to one component per mode",
          "[tucker]") {
  const Volume3 y = rank1_volume(random_vector(8, 61), random_vector(7, 62),
                                 random_vector(6, 63));
  const TuckerModel m = truncate(hosvd(y), TruncationRule::counts(1, 1, 1));
  REQUIRE(m.core.dims() == Dims3{1, 1, 1});
  REQUIRE(rel_err(tucker_reconstruct(m), y) <= 1e-10);
}

TEST_CASE("threshold keeps exactly the components at or above it",
          "[tucker]") {
  // Two orthogonal rank-1 terms give known mode-wise singular values
  // {10, 0.5}; a threshold of 1 must keep only the first.
  Vector a1 = Vector::Zero(5), a2 = Vector::Zero(5);
  Vector b1 = Vector::Zero(4), b2 = Vector::Zero(4);
  Vector c1 = Vector::Zero(3), c2 = Vector::Zero(3);
  a1[0] = b1[0] = c1[0] = 1.0;
  a2[1] = b2[1] = c2[1] = 1.0;
  const Volume3 y = 10.0 * rank1_volume(a1, b1, c1) +
                    0.5 * rank1_volume(a2, b2, c2);

  const TuckerModel full = hosvd(y);
  for (int n = 0; n < 3; ++n) {
    REQUIRE(full.sv[n][0] == Catch::Approx(10.0).margin(1e-10));
    REQUIRE(full.sv[n][1] == Catch::Approx(0.5).margin(1e-10));
  }

  const TuckerModel m = truncate(full, TruncationRule::thresholds(1, 1, 1));
  REQUIRE_FALSE(m.truncation_clamped);
  REQUIRE(m.core.dims() == Dims3{1, 1, 1});
  REQUIRE(rel_err(tucker_reconstruct(m), 10.0 * rank1_volume(a1, b1, c1)) <=
          1e-10);
}

TEST_CASE("a threshold above every singular value clamps to one component",
          "[tucker]") {
  const Volume3 y = random_volume({5, 4, 3}, 71);
  const TuckerModel m =
      truncate(hosvd(y), TruncationRule::thresholds(1e12, 1e12, 1e12));
  REQUIRE(m.truncation_clamped);
  REQUIRE(m.core.dims() == Dims3{1, 1, 1});
}

TEST_CASE("truncation rules are validated", "[tucker]") {
  const TuckerModel m = hosvd(random_volume({5, 4, 3}, 81));
  REQUIRE_THROWS_AS(truncate(m, TruncationRule::counts(0, 1, 1)),
                    ParameterError);
  REQUIRE_THROWS_AS(truncate(m, TruncationRule::counts(1, 5, 1)),
                    ParameterError);
  REQUIRE_THROWS_AS(truncate(m, TruncationRule::thresholds(1, -0.5, 1)),
                    ParameterError);
}

TEST_CASE("truncation error is bounded by the discarded singular values",
          "[tucker]") {
  SECTION("random dense tensor") {
    const Volume3 y = random_volume({8, 7, 6}, 91);
    const TuckerModel full = hosvd(y);
    const TuckerModel m = truncate(full, TruncationRule::counts(3, 3, 3));
    const double err = frobenius_norm(tucker_reconstruct(m) - y);
    REQUIRE(err * err <= discarded_energy(full, {3, 3, 3}) * (1 + 1e-10));
  }
  SECTION("noisy low-rank tensor") {
    const Volume3 clean = low_rank_phantom({12, 12, 12}, {3, 3, 3}, 92);
    const Volume3 y = add_noise_snr(clean, 20.0, 93);
    const TuckerModel full = hosvd(y);
    const TuckerModel m = truncate(full, TruncationRule::counts(3, 3, 3));
    const double err = frobenius_norm(tucker_reconstruct(m) - y);
    REQUIRE(err * err <= discarded_energy(full, {3, 3, 3}) * (1 + 1e-10));
  }
}

TEST_CASE("singular value series are sorted and sized like thin SVDs",
          "[tucker]") {
  const Volume3 y = random_volume({2, 8, 8}, 101);
  const auto spectra = sv_spectrum(hosvd(y));
  REQUIRE(spectra[0].size() == 2);   // min(2, 64)
  REQUIRE(spectra[1].size() == 8);   // min(8, 16)
  REQUIRE(spectra[2].size() == 8);
  for (const Vector& s : spectra) {
    for (Index i = 0; i < s.size(); ++i) REQUIRE(s[i] >= 0.0);
    for (Index i = 1; i < s.size(); ++i)
      REQUIRE(s[i] <= s[i - 1] + 1e-12 * s[0]);
  }
}

TEST_CASE("wide unfoldings keep accuracy through the Gram-matrix path",
          "[tucker]") {
  // Mode 1 is 128 x 576, wide enough to route through unfold*unfold^T;
  // modes 2 and 3 take the direct SVD. Both paths must agree.
  const Volume3 y = random_volume({128, 24, 24}, 111);
  const TuckerModel m = hosvd(y);
  REQUIRE(rel_err(tucker_reconstruct(m), y) <= 1e-8);
  for (int n = 0; n < 3; ++n) {
    const Matrix gram = m.factors[n].transpose() * m.factors[n];
    const Matrix eye = Matrix::Identity(gram.rows(), gram.cols());
    REQUIRE((gram - eye).norm() <= 1e-10);
  }
  Eigen::BDCSVD<Matrix> svd(unfold(y, 1));
  for (Index i = 0; i < m.sv[0].size(); ++i)
    REQUIRE(m.sv[0][i] ==
            Catch::Approx(svd.singularValues()[i]).epsilon(1e-6));
}

TEST_CASE("pipeline with unit rate, delta kernel and full rank is identity",
          "[tucker]") {
  const Volume3 y = random_volume({6, 5, 4}, 121);
  // sigma 0.05 puts the off-center taps below double precision, so the
  // blur matrix is exactly the identity.
  const auto ops = ops_for(y.dims(), {0.05, 0.05, 0.05}, 1, 0.0);
  const auto r = td_sisr(y, ops, TruncationRule::counts(6, 5, 4));
  REQUIRE(rel_err(r.x_hat, y) <= 1e-8);
  REQUIRE_FALSE(r.model.truncation_clamped);
  REQUIRE(r.seconds >= 0.0);
}

TEST_CASE("fused deconvolution matches denoise-then-deconvolve", "[tucker]") {
  const Dims3 hr_dims{8, 8, 8};
  const auto ops = ops_for(hr_dims, {1.0, 1.0, 1.0}, 2, 0.5);
  const Volume3 y = random_volume({4, 4, 4}, 131);
  const TruncationRule rule = TruncationRule::counts(3, 3, 3);

  const auto fused = td_sisr(y, ops, rule);
  const Volume3 denoised = tucker_reconstruct(truncate(hosvd(y), rule));
  const Volume3 two_stage = apply_pinv_all_modes(denoised, ops);

  REQUIRE(fused.x_hat.dims() == hr_dims);
  REQUIRE(rel_err(fused.x_hat, two_stage) <= 1e-10);
}

TEST_CASE("reconstruction rejects volumes that do not match the operators",
          "[tucker]") {
  const auto ops = ops_for({8, 8, 8}, {1.0, 1.0, 1.0}, 2, 0.5);
  const Volume3 wrong = random_volume({5, 4, 4}, 141);
  REQUIRE_THROWS_AS(td_sisr(wrong, ops, TruncationRule::counts(1, 1, 1)),
                    DimensionError);
}

TEST_CASE("truncation denoises every seeded low-rank phantom", "[tucker]") {
  const Dims3 dims{32, 32, 32};
  const Dims3 nranks{4, 4, 4};
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Volume3 clean = low_rank_phantom(dims, nranks, seed * 1000);
    const Volume3 noisy = add_noise_snr(clean, 25.0, seed * 1000 + 1);
    const Volume3 denoised =
        tucker_reconstruct(truncate(hosvd(noisy), TruncationRule::counts(
                                                      4, 4, 4)));
    const double before = frobenius_norm(noisy - clean);
    const double after = frobenius_norm(denoised - clean);
    INFO("seed " << seed << ": " << after << " vs " << before);
    REQUIRE(after < before);
  }
}

TEST_CASE("threshold rule keeps a mid-range count on a noisy smooth volume",
          "[tucker]") {
  const Dims3 hr_dims{64, 64, 64};
  const Volume3 x = blob_phantom(hr_dims, 6, 151);
  const auto ops = ops_for(hr_dims, {2.0, 2.0, 2.0}, 2, 1.0);
  DegradationSpec spec;
  spec.sigmas = {2.0, 2.0, 2.0};
  spec.rate = 2;
  spec.snr_db = 25.0;
  spec.seed = 152;
  const Volume3 y = degrade(x, spec, ops);

  const auto r = td_sisr(y, ops, TruncationRule::thresholds(1, 1, 1));
  REQUIRE_FALSE(r.model.truncation_clamped);
  REQUIRE(r.x_hat.dims() == hr_dims);
  REQUIRE(r.x_hat.all_finite());
  for (int n = 0; n < 3; ++n) {
    const Index kept = r.model.core.extent(n + 1);
    INFO("mode " << n + 1 << " kept " << kept);
    REQUIRE(kept >= 2);
    REQUIRE(kept < 32);
  }
}
