#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "care/epr.hpp"

using namespace care;

TEST_CASE("angular separation") {
  VecX z(3);
  z << 3.0, 1.0, 0.0;
  CHECK(angular_separation(z, 0) == doctest::Approx(2.0).epsilon(1e-15));
  z << 5.0, 5.0, 0.0;
  CHECK(angular_separation(z, 0) == doctest::Approx(0.0).epsilon(1e-15));
  z << 1.0, 3.0, 0.0;
  CHECK(angular_separation(z, 0) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK_THROWS_AS(angular_separation(z, 3), std::out_of_range);
}

TEST_CASE("topk spread") {
  VecX z(4);
  z << 0.0, 3.0, 2.0, 1.0;
  CHECK(topk_spread(z, 0, 3) == doctest::Approx(1.0).epsilon(1e-14));
  z << 0.0, 2.0, 2.0, 2.0;
  CHECK(topk_spread(z, 0, 3) == doctest::Approx(0.0).epsilon(1e-15));
  z << 0.0, 4.0, 0.0, 0.0;
  CHECK(topk_spread(z, 0, 2) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(topk_spread(z, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(topk_spread(z, 0, 4), std::invalid_argument);
}

TEST_CASE("topk spread is nonnegative, zero only for equal competitors") {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const int c = 4 + static_cast<int>(rng.uniform_int(6));
    VecX z(c);
    for (int j = 0; j < c; ++j) z[j] = rng.uniform(-5.0, 5.0);
    const int y = static_cast<int>(rng.uniform_int(c));
    const int k = 2 + static_cast<int>(rng.uniform_int(c - 2));
    const Scalar spread = topk_spread(z, y, k);
    CHECK(spread >= 0.0);
  }
  // All k largest non-target logits equal: spread is exactly zero even
  // when smaller competitors differ.
  VecX z(5);
  z << 0.0, 7.0, 7.0, 7.0, -3.0;
  CHECK(topk_spread(z, 0, 3) == 0.0);
}

TEST_CASE("instant cam composes the two margins") {
  MarginParams unit{1.0, 1.0, 3, 60};
  VecX z(4);
  z << 2.0, 0.0, -1.0, -1.0;
  // separation 2, spread via hand computation
  const Scalar delta = angular_separation(z, 0);
  const Scalar lambda = topk_spread(z, 0, 3);
  CHECK(instant_cam(z, 0, unit) ==
        doctest::Approx(delta - lambda).epsilon(1e-14));

  MarginParams paper{100.0, 100.0, 3, 60};
  VecX hard(4);
  hard << 0.0, 3.0, 2.0, 1.0;
  CHECK(instant_cam(hard, 0, paper) ==
        doctest::Approx(-400.0).epsilon(1e-12));
}

TEST_CASE("epoch weights: hand values") {
  const VecX w1 = epoch_weights(1, 10);
  CHECK(w1.size() == 1);
  CHECK(w1[0] == doctest::Approx(1.0).epsilon(1e-15));

  const VecX w2 = epoch_weights(2, 2);
  const Scalar e = std::exp(1.0);
  CHECK(w2[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
  CHECK(w2[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));

  CHECK_THROWS_AS(epoch_weights(0, 10), std::invalid_argument);
  CHECK_THROWS_AS(epoch_weights(11, 10), std::invalid_argument);
}

TEST_CASE("epoch weights normalize and strictly decrease for all t <= T <= 200") {
  for (int total = 1; total <= 200; ++total) {
    for (int t = 1; t <= total; ++t) {
      const VecX w = epoch_weights(t, total);
      CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
      for (int j = 1; j < t; ++j) {
        CHECK(w[j] < w[j - 1]);
      }
    }
  }
}

TEST_CASE("accumulation under the decay weights") {
  CamRecord rec;
  rec.sample_id = 0;
  rec.per_epoch = {5.0};
  CHECK(accumulate_cam(rec, 1, 60) == doctest::Approx(5.0).epsilon(1e-15));

  rec.per_epoch = {1.0, 0.0};
  const Scalar e = std::exp(1.0);
  CHECK(accumulate_cam(rec, 2, 2) ==
        doctest::Approx(e / (e + 1.0)).epsilon(1e-12));

  CoswRecord cosw;
  cosw.per_epoch = {1.0, 0.0};
  CHECK(accumulate_cosw(cosw, 2, 2) ==
        doctest::Approx(e / (e + 1.0)).epsilon(1e-12));

  // A constant history accumulates to the constant.
  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    const int total = 2 + static_cast<int>(rng.uniform_int(60));
    const int t = 1 + static_cast<int>(rng.uniform_int(total));
    const Scalar c = rng.uniform(-10.0, 10.0);
    CamRecord r;
    r.per_epoch.assign(static_cast<std::size_t>(t), c);
    CHECK(std::abs(accumulate_cam(r, t, total) - c) <= 1e-12);
  }

  CamRecord missing;
  missing.per_epoch = {1.0};
  CHECK_THROWS_AS(accumulate_cam(missing, 2, 60), std::invalid_argument);
}

TEST_CASE("angular distance") {
  VecX v(3);
  v << 1.0, 2.0, -1.0;
  CHECK(angular_distance(v, v) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(angular_distance(v, VecX(-v)) == doctest::Approx(1.0).epsilon(1e-15));
  VecX a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  CHECK(angular_distance(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(angular_distance(a, VecX::Zero(2)), std::invalid_argument);
}

TEST_CASE("hyperspherical components") {
  VecX d(3);
  d << 0.1, 0.4, 0.5;
  const Hyperspherical h = hyperspherical_components(d, 0, 2);
  CHECK(h.delta == doctest::Approx(-0.3).epsilon(1e-14));
  CHECK(h.lambda == doctest::Approx(-0.05).epsilon(1e-14));

  VecX uniform(4);
  uniform << 0.2, 0.3, 0.3, 0.3;
  const Hyperspherical hu = hyperspherical_components(uniform, 0, 3);
  CHECK(hu.lambda == doctest::Approx(0.0).epsilon(1e-15));

  VecX tie(3);
  tie << 0.4, 0.4, 0.9;
  const Hyperspherical ht = hyperspherical_components(tie, 0, 2);
  CHECK(ht.delta == doctest::Approx(0.0).epsilon(1e-15));

  // lambda never exceeds zero even under adversarial rounding
  Rng rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const int c = 4 + static_cast<int>(rng.uniform_int(8));
    VecX dist(c);
    for (int j = 0; j < c; ++j) dist[j] = rng.uniform(0.0, 1.0);
    const int y = static_cast<int>(rng.uniform_int(c));
    const int k = 2 + static_cast<int>(rng.uniform_int(c - 2));
    CHECK(hyperspherical_components(dist, y, k).lambda <= 0.0);
  }
}

TEST_CASE("cosw score: plug-in and saturation") {
  MarginParams params{100.0, 100.0, 5, 60};
  CHECK(cosw_score(0.0, 0.0, params) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(cosw_score(-0.5, 0.0, params) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosw_score(0.5, -0.5, params) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cosw stays in [0,1] over the full grid") {
  MarginParams params{100.0, 100.0, 5, 60};
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const Scalar delta = -1.0 + 0.02 * i;
      const Scalar lambda = -1.0 + 0.01 * j;
      const Scalar s = cosw_score(delta, lambda, params);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("cosw separates hard positives from mislabeled populations") {
  // Constructed populations: hard positives have near-zero spread
  // (confined ambiguity), mislabeled samples have strongly negative
  // spread (dispersed competitors) and mostly positive delta.
  // Scaling 50 is taken from the coarse candidate grid; at 100 both
  // channels saturate and the ranking granularity drops below the
  // acceptance threshold.
  MarginParams params{50.0, 50.0, 5, 60};
  Rng rng(20250810);
  std::vector<Scalar> hard, mislabeled;
  for (int i = 0; i < 500; ++i) {
    hard.push_back(cosw_score(rng.uniform(-0.1, 0.05),
                              rng.uniform(-0.02, 0.0), params));
    mislabeled.push_back(cosw_score(rng.uniform(-0.05, 0.2),
                                    rng.uniform(-0.5, -0.1), params));
  }
  // Brute-force pair counting (Mann-Whitney with ties counted half).
  Scalar wins = 0.0;
  for (const Scalar h : hard) {
    for (const Scalar m : mislabeled) {
      if (h > m) {
        wins += 1.0;
      } else if (h == m) {
        wins += 0.5;
      }
    }
  }
  const Scalar auc = wins / (500.0 * 500.0);
  CHECK(auc >= 0.95);
}
