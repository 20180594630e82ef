#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

#include "care/types.hpp"

namespace care {

// Two-stage learning-rate schedule: lr_stage1 for the first stage, then
// lr_stage1 * decay for the second.
struct Schedule {
  int stage1_epochs = 20;
  int stage2_epochs = 40;
  Scalar lr_stage1 = 0.01;
  Scalar decay = 0.1;

  int total_epochs() const { return stage1_epochs + stage2_epochs; }
};

// Learning rate for a 1-based epoch index. Throws when out of range.
Scalar lr_at(int epoch, const Schedule& schedule);

// Small embedding network: linear -> ReLU -> linear classifier whose rows
// double as class prototypes. Holds SGD momentum buffers alongside the
// parameters so co-training lanes stay self-contained.
struct PeerModel {
  MatX embed_w;     // d_emb x d_in
  VecX embed_b;     // d_emb
  MatX prototypes;  // C x d_emb, row q is the prototype of class q

  MatX vel_embed_w;
  VecX vel_embed_b;
  MatX vel_prototypes;

  int d_in() const { return static_cast<int>(embed_w.cols()); }
  int d_emb() const { return static_cast<int>(embed_w.rows()); }
  int num_classes() const { return static_cast<int>(prototypes.rows()); }
  Eigen::Index param_count() const {
    return embed_w.size() + embed_b.size() + prototypes.size();
  }

  // Seeded uniform init: embed weights scaled by 1/sqrt(d_in), prototypes
  // by 1/sqrt(d_emb), so initial logits are O(1).
  static PeerModel init(int d_in, int d_emb, int num_classes,
                        std::uint64_t seed);
};

struct ForwardResult {
  MatX pre_act;     // d_emb x N, before the rectifier
  MatX embeddings;  // d_emb x N
  MatX logits;      // C x N
};

ForwardResult forward(const PeerModel& model,
                      const Eigen::Ref<const MatX>& features);

struct ParamGrads {
  MatX embed_w;
  VecX embed_b;
  MatX prototypes;
};

// Backpropagate d(loss)/d(logits) through prototypes, rectifier mask and
// embedding weights.
ParamGrads backward(const PeerModel& model, const ForwardResult& fwd,
                    const Eigen::Ref<const MatX>& features,
                    const Eigen::Ref<const MatX>& grad_logits);

// SGD with momentum: v <- momentum * v + g; p <- p - lr * v.
// Throws std::runtime_error on non-finite gradients or parameters.
void sgd_update(PeerModel& model, const ParamGrads& grads, Scalar lr,
                Scalar momentum);

// Flat little-endian checkpoint: 5 x int64 header
// (magic, d_in, d_emb, C, param_count) followed by the parameters as
// 64-bit reals in order embed_w (row-major), embed_b, prototypes
// (row-major).
void save_checkpoint(const PeerModel& model, const std::string& path);
PeerModel load_checkpoint(const std::string& path);

inline constexpr std::int64_t kCheckpointMagic = 0x65726163;  // "care"

}  // namespace care
