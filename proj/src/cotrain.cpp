#include "care/cotrain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "care/numkernel.hpp"

namespace care {

std::vector<PartitionDecision> partition_clean_noisy(
    const std::vector<std::pair<int, Scalar>>& certainties,
    const PartitionStrategy& strategy) {
  if (certainties.empty()) {
    throw std::invalid_argument("partition_clean_noisy: empty input");
  }
  const std::size_t n = certainties.size();
  std::vector<PartitionDecision> out(n);
  if (strategy.kind == PartitionStrategy::Kind::fixed_threshold) {
    if (!(strategy.tau > 0.0 && strategy.tau < 1.0)) {
      throw std::invalid_argument("partition_clean_noisy: tau out of (0,1)");
    }
    for (std::size_t i = 0; i < n; ++i) {
      out[i].sample_id = certainties[i].first;
      out[i].is_clean = certainties[i].second >= strategy.tau;
    }
  } else {
    if (!(strategy.rho >= 0.0 && strategy.rho < 1.0)) {
      throw std::invalid_argument("partition_clean_noisy: rho out of [0,1)");
    }
    const std::size_t clean_count = static_cast<std::size_t>(
        std::ceil((1.0 - strategy.rho) * static_cast<Scalar>(n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (certainties[a].second != certainties[b].second) {
        return certainties[a].second > certainties[b].second;
      }
      return certainties[a].first < certainties[b].first;
    });
    for (std::size_t rank = 0; rank < n; ++rank) {
      const std::size_t i = order[rank];
      out[i].sample_id = certainties[i].first;
      out[i].is_clean = rank < clean_count;
    }
  }
  for (auto& d : out) {
    d.weight_source = d.is_clean ? WeightSource::cam_certainty
                                 : WeightSource::peer_probability;
  }
  std::sort(out.begin(), out.end(),
            [](const PartitionDecision& a, const PartitionDecision& b) {
              return a.sample_id < b.sample_id;
            });
  return out;
}

PeerLabel peer_label(const Eigen::Ref<const VecX>& probabilities) {
  if (probabilities.size() == 0) {
    throw std::invalid_argument("peer_label: empty vector");
  }
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < probabilities.size(); ++j) {
    if (probabilities[j] > probabilities[best]) best = j;
  }
  return PeerLabel{static_cast<int>(best), probabilities[best]};
}

ClassWeight weight_R(const PartitionDecision& decision, int given_label,
                     const PeerLabel& peer, Scalar cam_certainty) {
  if (decision.is_clean) {
    return ClassWeight{given_label, cam_certainty};
  }
  return ClassWeight{peer.label, peer.confidence};
}

namespace {

MatX softmax_columns(const Eigen::Ref<const MatX>& logits) {
  MatX p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    p.col(i) = stable_softmax(logits.col(i));
  }
  return p;
}

Scalar floored_log(Scalar p) { return std::log(std::max(p, kProbFloor)); }

void require_pair_shapes(const Eigen::Ref<const MatX>& logits1,
                         const Eigen::Ref<const MatX>& logits2,
                         const std::vector<ClassWeight>& r1,
                         const std::vector<ClassWeight>& r2,
                         const char* fn) {
  if (logits1.rows() != logits2.rows() || logits1.cols() != logits2.cols()) {
    throw std::invalid_argument(std::string(fn) + ": logits shape mismatch");
  }
  const std::size_t n = static_cast<std::size_t>(logits1.cols());
  if (r1.size() != n || r2.size() != n) {
    throw std::invalid_argument(std::string(fn) + ": weight count mismatch");
  }
  for (const auto& r : {std::cref(r1), std::cref(r2)}) {
    for (const auto& w : r.get()) {
      if (w.class_index < 0 || w.class_index >= logits1.rows()) {
        throw std::out_of_range(std::string(fn) + ": weight class index");
      }
    }
  }
}

}  // namespace

PairLossWithGrad wce_loss(const Eigen::Ref<const MatX>& logits1,
                          const Eigen::Ref<const MatX>& logits2,
                          const std::vector<ClassWeight>& r1,
                          const std::vector<ClassWeight>& r2) {
  require_pair_shapes(logits1, logits2, r1, r2, "wce_loss");
  const Eigen::Index n = logits1.cols();
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  const MatX p1 = softmax_columns(logits1);
  const MatX p2 = softmax_columns(logits2);
  PairLossWithGrad out;
  out.grad_logits1 = MatX::Zero(logits1.rows(), n);
  out.grad_logits2 = MatX::Zero(logits1.rows(), n);
  Scalar value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w1 = r1[static_cast<std::size_t>(i)];
    const auto& w2 = r2[static_cast<std::size_t>(i)];
    value -= w1.weight * floored_log(p1(w1.class_index, i));
    value -= w2.weight * floored_log(p2(w2.class_index, i));
    // d/dz of -w log p_c = w (p - e_c)
    out.grad_logits1.col(i) = inv_n * w1.weight * p1.col(i);
    out.grad_logits1(w1.class_index, i) -= inv_n * w1.weight;
    out.grad_logits2.col(i) = inv_n * w2.weight * p2.col(i);
    out.grad_logits2(w2.class_index, i) -= inv_n * w2.weight;
  }
  out.value = inv_n * value;
  return out;
}

Scalar wkl_direction_value(const Eigen::Ref<const VecX>& p_target,
                           const Eigen::Ref<const VecX>& p_peer,
                           const ClassWeight& r) {
  if (p_target.size() != p_peer.size()) {
    throw std::invalid_argument("wkl_direction_value: size mismatch");
  }
  Scalar v = 0.0;
  for (Eigen::Index j = 0; j < p_target.size(); ++j) {
    Scalar coeff = p_peer[j];
    if (j == r.class_index) coeff -= r.weight;
    v += coeff * floored_log(p_target[j]);
  }
  return v;
}

PairLossWithGrad wkl_loss(const Eigen::Ref<const MatX>& logits1,
                          const Eigen::Ref<const MatX>& logits2,
                          const std::vector<ClassWeight>& r1,
                          const std::vector<ClassWeight>& r2) {
  require_pair_shapes(logits1, logits2, r1, r2, "wkl_loss");
  const Eigen::Index c = logits1.rows();
  const Eigen::Index n = logits1.cols();
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  const MatX p1 = softmax_columns(logits1);
  const MatX p2 = softmax_columns(logits2);
  PairLossWithGrad out;
  out.grad_logits1 = MatX::Zero(c, n);
  out.grad_logits2 = MatX::Zero(c, n);
  Scalar value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w1 = r1[static_cast<std::size_t>(i)];
    const auto& w2 = r2[static_cast<std::size_t>(i)];
    value += wkl_direction_value(p1.col(i), p2.col(i), w1);
    value += wkl_direction_value(p2.col(i), p1.col(i), w2);

    VecX log_p1(c), log_p2(c);
    for (Eigen::Index j = 0; j < c; ++j) {
      log_p1[j] = floored_log(p1(j, i));
      log_p2[j] = floored_log(p2(j, i));
    }
    const Scalar p1_dot_log2 = p1.col(i).dot(log_p2);
    const Scalar p2_dot_log1 = p2.col(i).dot(log_p1);

    // Gradient wrt z1: the (p2 - R1) log p1 term differentiates through
    // log p1; the (p1 - R2) log p2 term differentiates through the p1
    // coefficient.
    for (Eigen::Index a = 0; a < c; ++a) {
      Scalar g = p2(a, i) - p1(a, i) * (1.0 - w1.weight);
      if (a == w1.class_index) g -= w1.weight;
      g += p1(a, i) * (log_p2[a] - p1_dot_log2);
      out.grad_logits1(a, i) = inv_n * g;
    }
    for (Eigen::Index a = 0; a < c; ++a) {
      Scalar g = p1(a, i) - p2(a, i) * (1.0 - w2.weight);
      if (a == w2.class_index) g -= w2.weight;
      g += p2(a, i) * (log_p1[a] - p2_dot_log1);
      out.grad_logits2(a, i) = inv_n * g;
    }
  }
  out.value = inv_n * value;
  return out;
}

}  // namespace care
