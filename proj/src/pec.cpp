#include "care/pec.hpp"

#include <cmath>
#include <stdexcept>

#include "care/numkernel.hpp"

namespace care {

VecX CalibrationParams::smoothing() const {
  VecX s(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    s[j] = softplus(theta[j]);
  }
  return s;
}

CalibrationParams CalibrationParams::near_softmax(int num_classes,
                                                  Scalar kappa, Scalar s0) {
  CalibrationParams p;
  p.kappa = kappa;
  // softplus^{-1}(s0) = ln(e^{s0} - 1)
  p.theta = VecX::Constant(num_classes, std::log(std::expm1(s0)));
  return p;
}

VecX calibrated_probability(const Eigen::Ref<const VecX>& z,
                            const CalibrationParams& params) {
  const Eigen::Index c = z.size();
  if (c < 2 || params.theta.size() != c) {
    throw std::invalid_argument("calibrated_probability: bad dimensions");
  }
  const VecX s = params.smoothing();
  // Shift only when the max is positive: a negative shift would blow up
  // the smoothing addend instead of taming the exponentials.
  const Scalar m = std::max(z.maxCoeff(), 0.0);
  const Scalar scale = std::exp(-m);  // multiply through by e^{-m}
  VecX shifted = (z.array() - m).exp();
  const Scalar exp_sum = shifted.sum();
  VecX p(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    p[j] = (shifted[j] + s[j] * scale) /
           (exp_sum + static_cast<Scalar>(c) * s[j] * scale);
  }
  return p;
}

DirichletState evidence_from_logits(const Eigen::Ref<const VecX>& z,
                                    const CalibrationParams& params,
                                    Scalar logit_clamp) {
  const VecX s = params.smoothing();
  DirichletState st;
  st.evidence.resize(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const Scalar zc = std::clamp(z[j], -logit_clamp, logit_clamp);
    st.evidence[j] = std::exp(zc) + s[j];
  }
  st.mu = st.evidence.array() + params.kappa;
  st.s_total = st.mu.sum();
  return st;
}

DirichletBatch evidence_batch(const Eigen::Ref<const MatX>& z,
                              const CalibrationParams& params,
                              Scalar logit_clamp) {
  const Eigen::Index c = z.rows();
  const Eigen::Index n = z.cols();
  if (params.theta.size() != c) {
    throw std::invalid_argument("evidence_batch: theta/logits mismatch");
  }
  const VecX s = params.smoothing();
  DirichletBatch b;
  b.mu.resize(c, n);
  b.dmu_dz.resize(c, n);
  b.s_total.resize(n);
  b.dmu_dtheta.resize(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    b.dmu_dtheta[j] = stable_sigmoid(params.theta[j]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      const Scalar zij = z(j, i);
      const bool clipped = zij < -logit_clamp || zij > logit_clamp;
      const Scalar zc = std::clamp(zij, -logit_clamp, logit_clamp);
      const Scalar e = std::exp(zc);
      b.mu(j, i) = e + s[j] + params.kappa;
      b.dmu_dz(j, i) = clipped ? 0.0 : e;
      if (clipped) ++b.clamp_hits;
    }
    b.s_total[i] = b.mu.col(i).sum();
  }
  return b;
}

VecX dirichlet_mean(const DirichletState& state) {
  return state.mu / state.s_total;
}

namespace {

// Chain d(loss)/d(mu) back to logits and theta using the local
// derivatives stored in the batch.
void chain_to_inputs(const DirichletBatch& batch, const MatX& dmu,
                     LossWithGrad& out) {
  out.grad_logits = dmu.cwiseProduct(batch.dmu_dz);
  out.grad_theta = dmu.rowwise().sum().cwiseProduct(batch.dmu_dtheta);
}

}  // namespace

LossWithGrad enll_loss(const DirichletBatch& batch,
                       const std::vector<int>& labels) {
  const Eigen::Index c = batch.num_classes();
  const Eigen::Index n = batch.batch_size();
  if (n == 0) throw std::invalid_argument("enll_loss: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("enll_loss: labels/batch mismatch");
  }
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  LossWithGrad out;
  MatX dmu = MatX::Zero(c, n);
  Scalar value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      throw std::out_of_range("enll_loss: label out of range");
    }
    const Scalar s_i = batch.s_total[i];
    value += digamma(s_i) - digamma(batch.mu(y, i));
    const Scalar tg_s = trigamma(s_i);
    for (Eigen::Index j = 0; j < c; ++j) {
      Scalar g = tg_s;
      if (j == y) g -= trigamma(batch.mu(j, i));
      dmu(j, i) = inv_n * g;
    }
  }
  out.value = inv_n * value;
  chain_to_inputs(batch, dmu, out);
  return out;
}

Scalar kl_dirichlet_uniform_value(const Eigen::Ref<const VecX>& mu) {
  const Eigen::Index c = mu.size();
  const Scalar s = mu.sum();
  // ln B(1) = -lnGamma(C)
  Scalar v = -lgamma_pos(static_cast<Scalar>(c)) - log_beta(mu);
  const Scalar psi_s = digamma(s);
  for (Eigen::Index j = 0; j < c; ++j) {
    v += (mu[j] - 1.0) * (digamma(mu[j]) - psi_s);
  }
  return v;
}

LossWithGrad kl_dirichlet_uniform(const DirichletBatch& batch) {
  const Eigen::Index c = batch.num_classes();
  const Eigen::Index n = batch.batch_size();
  if (n == 0) throw std::invalid_argument("kl_dirichlet_uniform: empty batch");
  const Scalar scale = 1.0 / (static_cast<Scalar>(n) * static_cast<Scalar>(c));
  LossWithGrad out;
  MatX dmu(c, n);
  Scalar value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    value += kl_dirichlet_uniform_value(batch.mu.col(i));
    const Scalar s_i = batch.s_total[i];
    const Scalar tail = trigamma(s_i) * (s_i - static_cast<Scalar>(c));
    for (Eigen::Index j = 0; j < c; ++j) {
      const Scalar m = batch.mu(j, i);
      dmu(j, i) = scale * ((m - 1.0) * trigamma(m) - tail);
    }
  }
  out.value = scale * value;
  chain_to_inputs(batch, dmu, out);
  return out;
}

LossWithGrad ecl_loss(const DirichletBatch& batch,
                      const std::vector<int>& labels, Scalar lambda) {
  if (lambda < 0.0) throw std::invalid_argument("ecl_loss: lambda < 0");
  LossWithGrad enll = enll_loss(batch, labels);
  LossWithGrad kl = kl_dirichlet_uniform(batch);
  LossWithGrad out;
  out.value = enll.value + lambda * kl.value;
  out.grad_logits = enll.grad_logits + lambda * kl.grad_logits;
  out.grad_theta = enll.grad_theta + lambda * kl.grad_theta;
  return out;
}

}  // namespace care
