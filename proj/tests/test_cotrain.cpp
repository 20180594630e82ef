#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "care/cotrain.hpp"
#include "care/numkernel.hpp"

using namespace care;

namespace {

PartitionStrategy threshold(Scalar tau) {
  PartitionStrategy s;
  s.kind = PartitionStrategy::Kind::fixed_threshold;
  s.tau = tau;
  return s;
}

PartitionStrategy quantile(Scalar rho) {
  PartitionStrategy s;
  s.kind = PartitionStrategy::Kind::quantile;
  s.rho = rho;
  return s;
}

MatX logits_for(const VecX& p) {
  // softmax(log p) == p for a strictly positive probability vector
  MatX z(p.size(), 1);
  for (Eigen::Index j = 0; j < p.size(); ++j) z(j, 0) = std::log(p[j]);
  return z;
}

}  // namespace

TEST_CASE("partition by fixed threshold") {
  const auto out = partition_clean_noisy({{0, 0.9}, {1, 0.1}}, threshold(0.5));
  REQUIRE(out.size() == 2);
  CHECK(out[0].is_clean);
  CHECK(!out[1].is_clean);
  CHECK(out[0].weight_source == WeightSource::cam_certainty);
  CHECK(out[1].weight_source == WeightSource::peer_probability);
}

TEST_CASE("partition by quantile with id tie-break") {
  const auto out = partition_clean_noisy(
      {{7, 0.5}, {3, 0.5}, {9, 0.5}, {1, 0.5}}, quantile(0.5));
  REQUIRE(out.size() == 4);
  // ceil(0.5 * 4) = 2 clean slots; ties broken toward the smallest ids.
  CHECK(out[0].sample_id == 1);
  CHECK(out[0].is_clean);
  CHECK(out[1].sample_id == 3);
  CHECK(out[1].is_clean);
  CHECK(out[2].sample_id == 7);
  CHECK(!out[2].is_clean);
  CHECK(out[3].sample_id == 9);
  CHECK(!out[3].is_clean);
}

TEST_CASE("quantile keeps everything clean at rho 0 and counts exactly") {
  const auto all = partition_clean_noisy({{0, 0.2}, {1, 0.8}}, quantile(0.0));
  CHECK(all[0].is_clean);
  CHECK(all[1].is_clean);

  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(40);
    const Scalar rho = rng.uniform(0.0, 0.99);
    std::vector<std::pair<int, Scalar>> certs;
    for (std::size_t i = 0; i < n; ++i) {
      certs.emplace_back(static_cast<int>(i), rng.uniform());
    }
    const auto out = partition_clean_noisy(certs, quantile(rho));
    std::size_t clean = 0;
    for (const auto& d : out) clean += d.is_clean ? 1 : 0;
    CHECK(clean == static_cast<std::size_t>(
                       std::ceil((1.0 - rho) * static_cast<Scalar>(n))));
  }
  CHECK_THROWS_AS(partition_clean_noisy({}, quantile(0.5)),
                  std::invalid_argument);
}

TEST_CASE("peer label argmax with tie break") {
  VecX p(3);
  p << 0.1, 0.7, 0.2;
  const PeerLabel a = peer_label(p);
  CHECK(a.label == 1);
  CHECK(a.confidence == doctest::Approx(0.7).epsilon(1e-15));

  VecX tie(2);
  tie << 0.5, 0.5;
  CHECK(peer_label(tie).label == 0);

  VecX onehot = VecX::Zero(5);
  onehot[3] = 1.0;
  const PeerLabel o = peer_label(onehot);
  CHECK(o.label == 3);
  CHECK(o.confidence == 1.0);
}

TEST_CASE("weight function R") {
  PartitionDecision clean{4, true, WeightSource::cam_certainty};
  const ClassWeight wc = weight_R(clean, 3, {7, 0.6}, 0.8);
  CHECK(wc.class_index == 3);
  CHECK(wc.weight == doctest::Approx(0.8).epsilon(1e-15));

  PartitionDecision noisy{5, false, WeightSource::peer_probability};
  const ClassWeight wn = weight_R(noisy, 3, {7, 0.6}, 0.8);
  CHECK(wn.class_index == 7);
  CHECK(wn.weight == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("weighted cross-entropy hand values") {
  VecX half(2);
  half << 0.5, 0.5;
  const MatX z = logits_for(half);
  const std::vector<ClassWeight> unit{{0, 1.0}};
  const std::vector<ClassWeight> zero{{0, 0.0}};

  CHECK(wce_loss(z, z, unit, zero).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(wce_loss(z, z, zero, zero).value ==
        doctest::Approx(0.0).epsilon(1e-15));
  const std::vector<ClassWeight> scaled{{0, 0.5}};
  CHECK(wce_loss(z, z, scaled, zero).value ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

  // Certainty exactly 1 on the clean branch reduces to plain CE.
  VecX p(3);
  p << 0.2, 0.5, 0.3;
  const MatX zp = logits_for(p);
  const std::vector<ClassWeight> ce{{1, 1.0}};
  CHECK(wce_loss(zp, zp, ce, {{0, 0.0}}).value ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("wce is linear in each weight") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 3 + static_cast<int>(rng.uniform_int(4));
    MatX z1(c, 1), z2(c, 1);
    for (int j = 0; j < c; ++j) {
      z1(j, 0) = rng.uniform(-2.0, 2.0);
      z2(j, 0) = rng.uniform(-2.0, 2.0);
    }
    const int idx = static_cast<int>(rng.uniform_int(c));
    const Scalar w = rng.uniform(0.1, 1.0);
    const std::vector<ClassWeight> zero{{0, 0.0}};
    const Scalar single =
        wce_loss(z1, z2, {{idx, w}}, zero).value;
    const Scalar doubled =
        wce_loss(z1, z2, {{idx, 2.0 * w}}, zero).value;
    CHECK(std::abs(doubled - 2.0 * single) <= 1e-12);
  }
}

TEST_CASE("weighted KL direction values") {
  VecX half(2);
  half << 0.5, 0.5;

  // Matching weights cancel the integrand exactly.
  VecX p(3);
  p << 0.2, 0.5, 0.3;
  VecX dense_r = p;
  Scalar v = 0.0;
  for (int j = 0; j < 3; ++j) {
    v += (p[j] - dense_r[j]) * std::log(p[j]);
  }
  CHECK(v == doctest::Approx(0.0).epsilon(1e-15));

  // One-hot weight r at the peer label reduces to
  // sum_j p2_j log p1_j - r log p1(label).
  VecX p1(3), p2(3);
  p1 << 0.6, 0.3, 0.1;
  p2 << 0.2, 0.2, 0.6;
  const ClassWeight r{2, 0.7};
  Scalar expected = 0.0;
  for (int j = 0; j < 3; ++j) expected += p2[j] * std::log(p1[j]);
  expected -= 0.7 * std::log(p1[2]);
  CHECK(wkl_direction_value(p1, p2, r) ==
        doctest::Approx(expected).epsilon(1e-12));

  // Uniform distributions with a full-weight one-hot: the direction value
  // vanishes, (0.5-1)ln(0.5) + 0.5 ln(0.5) = 0.
  CHECK(wkl_direction_value(half, half, {0, 1.0}) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("full wkl pairs both directions") {
  VecX half(2);
  half << 0.5, 0.5;
  const MatX z = logits_for(half);
  // Direction 1 vanishes; direction 2 contributes sum_j p1_j log p2_j.
  const PairLossWithGrad out =
      wkl_loss(z, z, {{0, 1.0}}, {{0, 0.0}});
  CHECK(out.value == doctest::Approx(std::log(0.5)).epsilon(1e-12));

  // Equal probabilities with matching one-hot confidences: both
  // directions reduce to (p_c - p_c) log p_c at the labeled class plus
  // the plain cross terms, which cancel against each other only when the
  // distributions coincide and the weights equal the peer mass.
  VecX p(3);
  p << 0.2, 0.5, 0.3;
  const MatX zp = logits_for(p);
  const PairLossWithGrad sym = wkl_loss(
      zp, zp, {{1, 0.5}}, {{1, 0.5}});
  // Hand evaluation: each direction is sum_j p_j log p_j - 0.5 log p_1.
  Scalar entropyish = 0.0;
  for (int j = 0; j < 3; ++j) entropyish += p[j] * std::log(p[j]);
  const Scalar expected = 2.0 * (entropyish - 0.5 * std::log(0.5));
  CHECK(sym.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pair losses validate shapes") {
  MatX z2(2, 1), z3(3, 1);
  z2.setZero();
  z3.setZero();
  const std::vector<ClassWeight> one{{0, 1.0}};
  CHECK_THROWS_AS(wce_loss(z2, z3, one, one), std::invalid_argument);
  CHECK_THROWS_AS(wkl_loss(z2, z2, one, {}), std::invalid_argument);
  CHECK_THROWS_AS(wce_loss(z2, z2, {{5, 1.0}}, one), std::out_of_range);
}
