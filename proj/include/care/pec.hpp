#pragma once

#include <Eigen/Core>

#include <vector>

#include "care/types.hpp"

namespace care {

// Per-class smoothing parameters and the Dirichlet concentration offset.
struct CalibrationParams {
  VecX theta;          // raw parameters, one per class; s_j = softplus(theta_j)
  Scalar kappa = 1.0;  // concentration offset, > 0 in the Dirichlet path

  VecX smoothing() const;  // softplus(theta), elementwise

  // theta chosen so that softplus(theta_j) == s0 for every class,
  // i.e. the calibrated score starts near a plain softmax.
  static CalibrationParams near_softmax(int num_classes, Scalar kappa = 1.0,
                                        Scalar s0 = 0.01);
};

// Single-sample Dirichlet parameters derived from logits.
struct DirichletState {
  VecX evidence;  // v_j >= 0
  VecX mu;        // v + kappa * 1
  Scalar s_total = 0.0;
};

// Batch of Dirichlet states (one sample per column) plus the local
// derivatives needed to chain loss gradients back to logits and theta.
struct DirichletBatch {
  MatX mu;          // C x N
  VecX s_total;     // N
  MatX dmu_dz;      // C x N: exp of the clamped logit, 0 where clamped
  VecX dmu_dtheta;  // C: sigmoid(theta_j), shared across samples
  int clamp_hits = 0;  // diagnostic: entries clipped by the logit clamp

  Eigen::Index num_classes() const { return mu.rows(); }
  Eigen::Index batch_size() const { return mu.cols(); }
};

// Loss value plus analytic gradients. grad_theta is empty for losses with
// no smoothing-parameter dependence.
struct LossWithGrad {
  Scalar value = 0.0;
  MatX grad_logits;  // same shape as the logits batch
  VecX grad_theta;
};

// Calibrated score: (exp(z_j) + s_j) / sum_k (exp(z_k) + s_j), computed
// with max-shifted exponentials. The denominator reuses the numerator's
// s_j, so for non-uniform smoothing the outputs need not sum to 1; this
// score is never treated as a normalized distribution.
VecX calibrated_probability(const Eigen::Ref<const VecX>& z,
                            const CalibrationParams& params);

// Evidence v_j = exp(z_j) + s_j with logits clamped to [-clamp, clamp]
// before exponentiation; mu = v + kappa * 1.
DirichletState evidence_from_logits(const Eigen::Ref<const VecX>& z,
                                    const CalibrationParams& params,
                                    Scalar logit_clamp = 30.0);

DirichletBatch evidence_batch(const Eigen::Ref<const MatX>& z,
                              const CalibrationParams& params,
                              Scalar logit_clamp = 30.0);

// Predicted class probabilities mu_j / S.
VecX dirichlet_mean(const DirichletState& state);

// Expected negative log-likelihood under the Dirichlet posterior:
// (1/N) sum_i [psi(S_i) - psi(mu_{i,y_i})].
LossWithGrad enll_loss(const DirichletBatch& batch,
                       const std::vector<int>& labels);

// Per-sample KL(Dir(mu) || Dir(1)), before the 1/(NC) batch factor.
Scalar kl_dirichlet_uniform_value(const Eigen::Ref<const VecX>& mu);

// Batch KL with the 1/(NC) factor applied.
LossWithGrad kl_dirichlet_uniform(const DirichletBatch& batch);

// ENLL + lambda * KL.
LossWithGrad ecl_loss(const DirichletBatch& batch,
                      const std::vector<int>& labels, Scalar lambda);

}  // namespace care
