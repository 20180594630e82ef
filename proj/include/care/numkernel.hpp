#pragma once

#include <Eigen/Core>

#include "care/types.hpp"

namespace care {

// ln Gamma(x) for x > 0. Throws std::domain_error otherwise.
Scalar lgamma_pos(Scalar x);

// Digamma psi(x) for x > 0: recurrence shift to x >= 6, then the
// asymptotic series through the x^-14 term.
Scalar digamma(Scalar x);

// Trigamma psi'(x) for x > 0, same shift-plus-series scheme. Strictly
// positive on the whole domain.
Scalar trigamma(Scalar x);

// ln B(mu) = sum_k lnGamma(mu_k) - lnGamma(sum_k mu_k).
// Requires every entry > 0 and length >= 2.
Scalar log_beta(const Eigen::Ref<const VecX>& mu);

// Max-shifted softmax; entries in (0,1), sum 1.
VecX stable_softmax(const Eigen::Ref<const VecX>& z);

// Overflow-free logistic sigmoid.
Scalar stable_sigmoid(Scalar x);

// softplus(x) = ln(1 + e^x), computed as max(x,0) + log1p(e^{-|x|}).
Scalar softplus(Scalar x);

}  // namespace care
