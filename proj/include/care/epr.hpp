#pragma once

#include <Eigen/Core>

#include <vector>

#include "care/types.hpp"

namespace care {

struct MarginParams {
  Scalar alpha = 100.0;
  Scalar beta = 100.0;
  int k = 5;              // top-k competitor set size, clamped to C-1 upstream
  int total_epochs = 60;  // T in the cosine decay schedule
};

// Margin of the target logit over the strongest non-target logit.
Scalar angular_separation(const Eigen::Ref<const VecX>& z, int y);

// Strongest non-target logit minus the mean of the k largest non-target
// logits (dominant competitor included). Always >= 0.
Scalar topk_spread(const Eigen::Ref<const VecX>& z, int y, int k);

// alpha * separation - beta * spread.
Scalar instant_cam(const Eigen::Ref<const VecX>& z, int y,
                   const MarginParams& params);

// Cosine-decay weights w_1..w_t, normalized over the first t epochs of a
// T-epoch schedule. Sum to 1, strictly decreasing.
VecX epoch_weights(int t, int total_epochs);

// Per-sample score history; per_epoch[j] is the epoch-(j+1) value and the
// history must be contiguous from epoch 1.
struct CamRecord {
  int sample_id = 0;
  std::vector<Scalar> per_epoch;
  Scalar accumulated = 0.0;
};

struct CoswRecord {
  int sample_id = 0;
  std::vector<Scalar> per_epoch;  // each in [0,1]
  Scalar accumulated = 0.0;       // in [0,1]
};

Scalar accumulate_cam(const CamRecord& record, int t, int total_epochs);
Scalar accumulate_cosw(const CoswRecord& record, int t, int total_epochs);

// Normalized angular distance (1 - cos) / 2 in [0,1].
Scalar angular_distance(const Eigen::Ref<const VecX>& feature,
                        const Eigen::Ref<const VecX>& prototype);

// Angular distances from one embedding to every class prototype
// (prototypes stored one class per row).
VecX class_distances(const Eigen::Ref<const VecX>& feature,
                     const Eigen::Ref<const MatX>& prototypes);

// Hyperspherical analogues of separation and spread on distances, with
// the optimization direction flipped (smaller distance = better):
//   delta  = d_y - min_{q != y} d_q        (negative when target closest)
//   lambda = min_{q != y} d_q - mean of k smallest non-target distances
// lambda is clamped to <= 0 so downstream certainty stays bounded.
struct Hyperspherical {
  Scalar delta = 0.0;
  Scalar lambda = 0.0;
};

Hyperspherical hyperspherical_components(
    const Eigen::Ref<const VecX>& distances, int y, int k);

// Bounded certainty 0.5 * (1 / (1 + exp(alpha * delta)) + exp(beta * lambda)).
// In [0,1] whenever lambda <= 0; near 1 for reliable clean samples, near 0
// for likely mislabeled ones.
Scalar cosw_score(Scalar delta_h, Scalar lambda_h, const MarginParams& params);

}  // namespace care
