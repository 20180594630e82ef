#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "care/numkernel.hpp"
#include "care/pec.hpp"

using namespace care;

namespace {

// softplus(-1000) underflows to exactly 0, giving zero smoothing.
CalibrationParams zero_smoothing(int c, Scalar kappa) {
  CalibrationParams p;
  p.kappa = kappa;
  p.theta = VecX::Constant(c, -1000.0);
  return p;
}

CalibrationParams uniform_smoothing(int c, Scalar s, Scalar kappa) {
  CalibrationParams p;
  p.kappa = kappa;
  p.theta = VecX::Constant(c, std::log(std::expm1(s)));
  return p;
}

DirichletBatch batch_from_mu(const VecX& mu) {
  DirichletBatch b;
  b.mu = mu;
  b.s_total.resize(1);
  b.s_total[0] = mu.sum();
  b.dmu_dz = MatX::Ones(mu.size(), 1);
  b.dmu_dtheta = VecX::Ones(mu.size());
  return b;
}

}  // namespace

TEST_CASE("calibrated_probability hand values") {
  VecX z(2);
  z << 0.0, 0.0;
  const VecX p0 = calibrated_probability(z, zero_smoothing(2, 1.0));
  CHECK(p0[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p0[1] == doctest::Approx(0.5).epsilon(1e-14));

  VecX z3(2);
  z3 << std::log(3.0), 0.0;
  const VecX p1 = calibrated_probability(z3, uniform_smoothing(2, 1.0, 1.0));
  CHECK(p1[0] == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(p1[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));

  const VecX p2 = calibrated_probability(z3, zero_smoothing(2, 1.0));
  CHECK(p2[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p2[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("calibrated_probability survives huge logits") {
  VecX z(3);
  z << 1000.0, 999.0, -1000.0;
  const VecX p = calibrated_probability(z, uniform_smoothing(3, 0.5, 1.0));
  for (int j = 0; j < 3; ++j) {
    CHECK(std::isfinite(p[j]));
    CHECK(p[j] > 0.0);
    CHECK(p[j] < 1.0);
  }
}

TEST_CASE("evidence_from_logits hand values") {
  VecX z(2);
  z << 0.0, 0.0;
  const DirichletState st = evidence_from_logits(z, zero_smoothing(2, 1.0));
  CHECK(st.mu[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(st.mu[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(st.s_total == doctest::Approx(4.0).epsilon(1e-15));

  VecX z3(2);
  z3 << std::log(3.0), 0.0;
  const DirichletState st2 =
      evidence_from_logits(z3, uniform_smoothing(2, 1.0, 1.0));
  CHECK(st2.mu[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(st2.mu[1] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(st2.s_total == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("evidence clamp records a diagnostic count") {
  MatX z(2, 2);
  z << 100.0, 0.0, -42.0, 1.0;
  const DirichletBatch b = evidence_batch(z, zero_smoothing(2, 1.0), 30.0);
  CHECK(b.clamp_hits == 2);
  CHECK(b.mu(0, 0) == doctest::Approx(std::exp(30.0) + 1.0));
  CHECK(b.dmu_dz(0, 0) == 0.0);  // clipped entries stop the gradient
  CHECK(b.dmu_dz(1, 1) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
}

TEST_CASE("dirichlet_mean normalizes") {
  DirichletState st;
  st.mu = VecX(3);
  st.mu << 2.0, 1.0, 1.0;
  st.s_total = 4.0;
  const VecX m = dirichlet_mean(st);
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(0.25).epsilon(1e-15));

  st.mu = VecX(2);
  st.mu << 5.0, 3.0;
  st.s_total = 8.0;
  const VecX m2 = dirichlet_mean(st);
  CHECK(m2[0] == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(m2[1] == doctest::Approx(0.375).epsilon(1e-15));

  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.uniform_int(8));
    DirichletState s;
    s.mu = VecX(c);
    for (int j = 0; j < c; ++j) s.mu[j] = std::exp(rng.uniform(-2.0, 4.0));
    s.s_total = s.mu.sum();
    CHECK(dirichlet_mean(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("kappa=0 mean reproduces the calibrated score for uniform smoothing") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.uniform_int(6));
    VecX z(c);
    for (int j = 0; j < c; ++j) z[j] = rng.uniform(-4.0, 4.0);
    const CalibrationParams params =
        uniform_smoothing(c, rng.uniform(0.0, 2.0) + 1e-6, 0.0);
    const VecX mean = dirichlet_mean(evidence_from_logits(z, params));
    const VecX calibrated = calibrated_probability(z, params);
    CHECK((mean - calibrated).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("enll recurrence values") {
  VecX mu(2);
  mu << 1.0, 1.0;
  CHECK(enll_loss(batch_from_mu(mu), {0}).value ==
        doctest::Approx(1.0).epsilon(1e-12));
  mu << 2.0, 1.0;
  CHECK(enll_loss(batch_from_mu(mu), {0}).value ==
        doctest::Approx(0.5).epsilon(1e-12));
  mu << 1.0, 2.0;
  CHECK(enll_loss(batch_from_mu(mu), {0}).value ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK_THROWS_AS(enll_loss(batch_from_mu(mu), {2}), std::out_of_range);
}

TEST_CASE("kl against the uniform Dirichlet") {
  for (int c = 2; c <= 6; ++c) {
    CHECK(std::abs(kl_dirichlet_uniform_value(VecX::Ones(c))) <= 1e-12);
  }
  VecX mu(2);
  mu << 2.0, 1.0;
  CHECK(kl_dirichlet_uniform_value(mu) ==
        doctest::Approx(std::log(2.0) - 0.5).epsilon(1e-12));

  Rng rng(19);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + static_cast<int>(rng.uniform_int(7));
    VecX m(c);
    for (int j = 0; j < c; ++j) {
      // log-uniform in [0.1, 50]
      m[j] = std::exp(rng.uniform(std::log(0.1), std::log(50.0)));
    }
    CHECK(kl_dirichlet_uniform_value(m) >= -1e-12);
  }
}

TEST_CASE("batch kl applies the 1/(NC) factor") {
  VecX mu(2);
  mu << 2.0, 1.0;
  const LossWithGrad kl = kl_dirichlet_uniform(batch_from_mu(mu));
  CHECK(kl.value ==
        doctest::Approx((std::log(2.0) - 0.5) / 2.0).epsilon(1e-12));
}

TEST_CASE("ecl composition and lambda linearity") {
  VecX mu(2);
  mu << 2.0, 1.0;
  const DirichletBatch b = batch_from_mu(mu);
  const std::vector<int> labels{0};

  CHECK(ecl_loss(b, labels, 0.0).value ==
        doctest::Approx(enll_loss(b, labels).value).epsilon(1e-15));
  CHECK(ecl_loss(b, labels, 0.5).value ==
        doctest::Approx(0.5482867951399863).epsilon(1e-12));

  // Uniform concentrations: the KL term contributes nothing.
  const DirichletBatch ones = batch_from_mu(VecX::Ones(4));
  CHECK(ecl_loss(ones, {2}, 0.7).value ==
        doctest::Approx(enll_loss(ones, {2}).value).epsilon(1e-12));

  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + static_cast<int>(rng.uniform_int(5));
    VecX m(c);
    for (int j = 0; j < c; ++j) m[j] = std::exp(rng.uniform(-1.0, 3.0));
    const DirichletBatch rb = batch_from_mu(m);
    const std::vector<int> y{
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c)))};
    const Scalar lam = rng.uniform(0.0, 2.0);
    const Scalar v0 = ecl_loss(rb, y, 0.0).value;
    const Scalar v1 = ecl_loss(rb, y, 1.0).value;
    CHECK(ecl_loss(rb, y, lam).value ==
          doctest::Approx(v0 + lam * (v1 - v0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ecl_loss(b, labels, -0.1), std::invalid_argument);
}

TEST_CASE("non-uniform smoothing breaks the literal score normalization") {
  // The calibrated score reuses the numerator's smoothing inside the
  // denominator sum, so with per-class smoothing the outputs need not sum
  // to one; it is never treated as a distribution.
  VecX z(3);
  z << 1.0, 0.0, -1.0;
  CalibrationParams params;
  params.kappa = 1.0;
  params.theta = VecX(3);
  params.theta << 1.5, -0.5, 0.25;
  const VecX p = calibrated_probability(z, params);
  CHECK(std::abs(p.sum() - 1.0) > 1e-6);
  for (int j = 0; j < 3; ++j) {
    CHECK(p[j] > 0.0);
    CHECK(p[j] < 1.0);
  }
}
