#pragma once

#include <Eigen/Core>

#include <vector>

#include "care/pec.hpp"
#include "care/types.hpp"

namespace care {

enum class WeightSource { cam_certainty, peer_probability };

struct PartitionDecision {
  int sample_id = 0;
  bool is_clean = false;
  WeightSource weight_source = WeightSource::peer_probability;
};

struct PartitionStrategy {
  enum class Kind { fixed_threshold, quantile };
  Kind kind = Kind::quantile;
  Scalar tau = 0.5;  // fixed_threshold: clean iff certainty >= tau
  Scalar rho = 0.0;  // quantile: top (1 - rho) fraction marked clean
};

// Split samples into clean/noisy from accumulated certainties. Quantile
// mode marks exactly ceil((1 - rho) * N) samples clean, breaking certainty
// ties by ascending sample id. Output is sorted by sample id.
std::vector<PartitionDecision> partition_clean_noisy(
    const std::vector<std::pair<int, Scalar>>& certainties,
    const PartitionStrategy& strategy);

struct PeerLabel {
  int label = 0;
  Scalar confidence = 0.0;
};

// Argmax with smallest-index tie break.
PeerLabel peer_label(const Eigen::Ref<const VecX>& probabilities);

// One-hot row of the weight function R: the class index carrying the
// weight plus the weight itself.
struct ClassWeight {
  int class_index = 0;
  Scalar weight = 0.0;
};

// Clean samples keep their given label weighted by the accumulated
// certainty; noisy samples take the peer's predicted label weighted by the
// peer's confidence.
ClassWeight weight_R(const PartitionDecision& decision, int given_label,
                     const PeerLabel& peer, Scalar cam_certainty);

// Joint loss over a peer pair; gradients flow to both logit batches.
struct PairLossWithGrad {
  Scalar value = 0.0;
  MatX grad_logits1;
  MatX grad_logits2;
};

// Weighted cross-entropy over both networks (probabilities via softmax of
// the logits, floored at 1e-12 before the log):
//   -(1/N) sum_i [ R1_i * log p1(c1_i) + R2_i * log p2(c2_i) ]
PairLossWithGrad wce_loss(const Eigen::Ref<const MatX>& logits1,
                          const Eigen::Ref<const MatX>& logits2,
                          const std::vector<ClassWeight>& r1,
                          const std::vector<ClassWeight>& r2);

// Weighted KL alignment over both networks:
//   (1/N) sum_i sum_j [ (p2_j - R1_j) log p1_j + (p1_j - R2_j) log p2_j ]
PairLossWithGrad wkl_loss(const Eigen::Ref<const MatX>& logits1,
                          const Eigen::Ref<const MatX>& logits2,
                          const std::vector<ClassWeight>& r1,
                          const std::vector<ClassWeight>& r2);

// One direction of the alignment term on probability vectors:
// sum_j (p_peer_j - R_j) log p_target_j. Used directly in unit checks.
Scalar wkl_direction_value(const Eigen::Ref<const VecX>& p_target,
                           const Eigen::Ref<const VecX>& p_peer,
                           const ClassWeight& r);

inline constexpr Scalar kProbFloor = 1e-12;

}  // namespace care
