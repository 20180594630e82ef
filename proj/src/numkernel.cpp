#include "care/numkernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace care {

namespace {

void require_positive(Scalar x, const char* fn) {
  if (!(x > 0.0)) {
    throw std::domain_error(std::string(fn) + ": requires x > 0");
  }
}

}  // namespace

Scalar lgamma_pos(Scalar x) {
  require_positive(x, "lgamma_pos");
  return std::lgamma(x);
}

Scalar digamma(Scalar x) {
  require_positive(x, "digamma");
  Scalar acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const Scalar inv = 1.0 / x;
  const Scalar u = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum_n B_{2n} / (2n x^{2n})
  const Scalar series =
      u * (1.0 / 12.0 -
           u * (1.0 / 120.0 -
                u * (1.0 / 252.0 -
                     u * (1.0 / 240.0 -
                          u * (1.0 / 132.0 -
                               u * (691.0 / 32760.0 - u * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

Scalar trigamma(Scalar x) {
  require_positive(x, "trigamma");
  Scalar acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const Scalar inv = 1.0 / x;
  const Scalar u = inv * inv;
  // psi'(x) ~ 1/x + 1/(2x^2) + sum_n B_{2n} / x^{2n+1}
  const Scalar series =
      inv *
      (1.0 +
       inv * (0.5 +
              inv * (1.0 / 6.0 -
                     u * (1.0 / 30.0 -
                          u * (1.0 / 42.0 -
                               u * (1.0 / 30.0 -
                                    u * (5.0 / 66.0 -
                                         u * (691.0 / 2730.0 -
                                              u * (7.0 / 6.0)))))))));
  return acc + series;
}

Scalar log_beta(const Eigen::Ref<const VecX>& mu) {
  if (mu.size() < 2) {
    throw std::domain_error("log_beta: requires at least 2 entries");
  }
  Scalar sum = 0.0;
  Scalar acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu[i] > 0.0)) {
      throw std::domain_error("log_beta: requires all entries > 0");
    }
    acc += std::lgamma(mu[i]);
    sum += mu[i];
  }
  return acc - std::lgamma(sum);
}

VecX stable_softmax(const Eigen::Ref<const VecX>& z) {
  const Scalar m = z.maxCoeff();
  VecX e = (z.array() - m).exp();
  return e / e.sum();
}

Scalar stable_sigmoid(Scalar x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

Scalar softplus(Scalar x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace care
