#include "care/epr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "care/numkernel.hpp"

namespace care {

namespace {

void require_label(Eigen::Index c, int y, const char* fn) {
  if (c < 2) throw std::invalid_argument(std::string(fn) + ": needs C >= 2");
  if (y < 0 || y >= c) throw std::out_of_range(std::string(fn) + ": bad label");
}

void require_k(Eigen::Index c, int k, const char* fn) {
  if (k < 2 || k > c - 1) {
    throw std::invalid_argument(std::string(fn) + ": k out of range");
  }
}

}  // namespace

Scalar angular_separation(const Eigen::Ref<const VecX>& z, int y) {
  require_label(z.size(), y, "angular_separation");
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (j != y) best = std::max(best, z[j]);
  }
  return z[y] - best;
}

Scalar topk_spread(const Eigen::Ref<const VecX>& z, int y, int k) {
  require_label(z.size(), y, "topk_spread");
  require_k(z.size(), k, "topk_spread");
  std::vector<Scalar> others;
  others.reserve(static_cast<std::size_t>(z.size() - 1));
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (j != y) others.push_back(z[j]);
  }
  std::partial_sort(others.begin(), others.begin() + k, others.end(),
                    std::greater<Scalar>());
  Scalar mean = 0.0;
  for (int j = 0; j < k; ++j) mean += others[static_cast<std::size_t>(j)];
  mean /= static_cast<Scalar>(k);
  return others[0] - mean;
}

Scalar instant_cam(const Eigen::Ref<const VecX>& z, int y,
                   const MarginParams& params) {
  return params.alpha * angular_separation(z, y) -
         params.beta * topk_spread(z, y, params.k);
}

VecX epoch_weights(int t, int total_epochs) {
  if (total_epochs < 1 || t < 1 || t > total_epochs) {
    throw std::invalid_argument("epoch_weights: need 1 <= t <= T");
  }
  VecX w(t);
  for (int j = 1; j <= t; ++j) {
    w[j - 1] = std::exp(
        1.0 + std::cos(std::numbers::pi * j / static_cast<Scalar>(total_epochs)));
  }
  return w / w.sum();
}

namespace {

Scalar accumulate(const std::vector<Scalar>& per_epoch, int t,
                  int total_epochs, const char* fn) {
  if (t < 1 || static_cast<int>(per_epoch.size()) < t) {
    throw std::invalid_argument(std::string(fn) + ": missing epoch score");
  }
  const VecX w = epoch_weights(t, total_epochs);
  Scalar acc = 0.0;
  for (int j = 0; j < t; ++j) {
    acc += w[j] * per_epoch[static_cast<std::size_t>(j)];
  }
  return acc;
}

}  // namespace

Scalar accumulate_cam(const CamRecord& record, int t, int total_epochs) {
  return accumulate(record.per_epoch, t, total_epochs, "accumulate_cam");
}

Scalar accumulate_cosw(const CoswRecord& record, int t, int total_epochs) {
  return accumulate(record.per_epoch, t, total_epochs, "accumulate_cosw");
}

Scalar angular_distance(const Eigen::Ref<const VecX>& feature,
                        const Eigen::Ref<const VecX>& prototype) {
  const Scalar nf = feature.norm();
  const Scalar np = prototype.norm();
  if (nf == 0.0 || np == 0.0) {
    throw std::invalid_argument("angular_distance: zero-norm vector");
  }
  const Scalar c = feature.dot(prototype) / (nf * np);
  return 0.5 * (1.0 - std::clamp(c, -1.0, 1.0));
}

VecX class_distances(const Eigen::Ref<const VecX>& feature,
                     const Eigen::Ref<const MatX>& prototypes) {
  const Scalar nf = feature.norm();
  if (nf == 0.0) {
    throw std::invalid_argument("class_distances: zero-norm feature");
  }
  VecX d(prototypes.rows());
  for (Eigen::Index q = 0; q < prototypes.rows(); ++q) {
    const Scalar np = prototypes.row(q).norm();
    if (np == 0.0) {
      throw std::invalid_argument("class_distances: zero-norm prototype");
    }
    const Scalar c = prototypes.row(q).dot(feature) / (nf * np);
    d[q] = 0.5 * (1.0 - std::clamp(c, -1.0, 1.0));
  }
  return d;
}

Hyperspherical hyperspherical_components(
    const Eigen::Ref<const VecX>& distances, int y, int k) {
  require_label(distances.size(), y, "hyperspherical_components");
  require_k(distances.size(), k, "hyperspherical_components");
  std::vector<Scalar> others;
  others.reserve(static_cast<std::size_t>(distances.size() - 1));
  for (Eigen::Index q = 0; q < distances.size(); ++q) {
    if (q != y) others.push_back(distances[q]);
  }
  std::partial_sort(others.begin(), others.begin() + k, others.end());
  Scalar mean = 0.0;
  for (int j = 0; j < k; ++j) mean += others[static_cast<std::size_t>(j)];
  mean /= static_cast<Scalar>(k);
  Hyperspherical h;
  h.delta = distances[y] - others[0];
  h.lambda = std::min(others[0] - mean, 0.0);
  return h;
}

Scalar cosw_score(Scalar delta_h, Scalar lambda_h,
                  const MarginParams& params) {
  const Scalar margin_term = stable_sigmoid(-params.alpha * delta_h);
  const Scalar spread_term = std::exp(params.beta * lambda_h);
  return 0.5 * (margin_term + spread_term);
}

}  // namespace care
