#include "care/gradcheck.hpp"

#include <cmath>

#include "care/cotrain.hpp"
#include "care/model.hpp"
#include "care/pec.hpp"

namespace care {

VecX central_difference(const std::function<Scalar(const VecX&)>& value,
                        const VecX& x, Scalar step) {
  VecX grad(x.size());
  VecX probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const Scalar up = value(probe);
    probe[i] = x[i] - step;
    const Scalar down = value(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

Scalar rel_error(const VecX& analytic, const VecX& numeric) {
  Scalar worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const Scalar denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace {

constexpr Scalar kLossTol = 1e-6;
constexpr Scalar kEndToEndTol = 1e-5;
constexpr int kInstances = 10;

struct Instance {
  MatX logits;
  std::vector<int> labels;
  CalibrationParams calib;
};

Instance random_instance(Rng& rng) {
  const int c = 3 + static_cast<int>(rng.uniform_int(5));  // 3..7
  const int n = 2 + static_cast<int>(rng.uniform_int(4));  // 2..5
  Instance inst;
  inst.logits.resize(c, n);
  for (Eigen::Index j = 0; j < inst.logits.size(); ++j) {
    inst.logits.data()[j] = rng.uniform(-3.0, 3.0);
  }
  inst.labels.resize(static_cast<std::size_t>(n));
  for (auto& y : inst.labels) {
    y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c)));
  }
  inst.calib.kappa = 1.0;
  inst.calib.theta.resize(c);
  for (int j = 0; j < c; ++j) inst.calib.theta[j] = rng.uniform(-2.0, 1.0);
  return inst;
}

using EvidentialLoss = std::function<LossWithGrad(
    const DirichletBatch&, const Instance&)>;

// Check one evidential loss against finite differences of its value as a
// function of the flattened logits and of theta.
GradCheckReport check_evidential(const std::string& name,
                                 const EvidentialLoss& loss,
                                 std::uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report{name, 0.0, kLossTol, false};
  for (int t = 0; t < kInstances; ++t) {
    Instance inst = random_instance(rng);
    const auto value_of = [&](const MatX& logits,
                              const CalibrationParams& calib) {
      return loss(evidence_batch(logits, calib), inst).value;
    };
    const LossWithGrad analytic = loss(evidence_batch(inst.logits, inst.calib),
                                       inst);

    VecX z_flat = Eigen::Map<const VecX>(inst.logits.data(),
                                         inst.logits.size());
    const VecX z_fd = central_difference(
        [&](const VecX& z) {
          const MatX logits = Eigen::Map<const MatX>(
              z.data(), inst.logits.rows(), inst.logits.cols());
          return value_of(logits, inst.calib);
        },
        z_flat);
    const VecX z_an = Eigen::Map<const VecX>(analytic.grad_logits.data(),
                                             analytic.grad_logits.size());
    report.max_rel_err = std::max(report.max_rel_err, rel_error(z_an, z_fd));

    const VecX t_fd = central_difference(
        [&](const VecX& theta) {
          CalibrationParams calib = inst.calib;
          calib.theta = theta;
          return value_of(inst.logits, calib);
        },
        inst.calib.theta);
    report.max_rel_err =
        std::max(report.max_rel_err, rel_error(analytic.grad_theta, t_fd));
  }
  report.pass = report.max_rel_err <= report.tolerance;
  return report;
}

struct PairInstance {
  MatX logits1, logits2;
  std::vector<ClassWeight> r1, r2;
};

PairInstance random_pair_instance(Rng& rng) {
  const int c = 3 + static_cast<int>(rng.uniform_int(5));
  const int n = 2 + static_cast<int>(rng.uniform_int(4));
  PairInstance inst;
  inst.logits1.resize(c, n);
  inst.logits2.resize(c, n);
  for (Eigen::Index j = 0; j < inst.logits1.size(); ++j) {
    inst.logits1.data()[j] = rng.uniform(-3.0, 3.0);
    inst.logits2.data()[j] = rng.uniform(-3.0, 3.0);
  }
  for (int i = 0; i < n; ++i) {
    inst.r1.push_back(
        {static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c))),
         rng.uniform()});
    inst.r2.push_back(
        {static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c))),
         rng.uniform()});
  }
  return inst;
}

using PairLoss = std::function<PairLossWithGrad(
    const MatX&, const MatX&, const std::vector<ClassWeight>&,
    const std::vector<ClassWeight>&)>;

GradCheckReport check_pair(const std::string& name, const PairLoss& loss,
                           std::uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report{name, 0.0, kLossTol, false};
  for (int t = 0; t < kInstances; ++t) {
    PairInstance inst = random_pair_instance(rng);
    const PairLossWithGrad analytic =
        loss(inst.logits1, inst.logits2, inst.r1, inst.r2);
    for (int side = 0; side < 2; ++side) {
      const MatX& base = side == 0 ? inst.logits1 : inst.logits2;
      const MatX& grad = side == 0 ? analytic.grad_logits1
                                   : analytic.grad_logits2;
      const VecX fd = central_difference(
          [&](const VecX& z) {
            const MatX logits =
                Eigen::Map<const MatX>(z.data(), base.rows(), base.cols());
            return side == 0
                       ? loss(logits, inst.logits2, inst.r1, inst.r2).value
                       : loss(inst.logits1, logits, inst.r1, inst.r2).value;
          },
          Eigen::Map<const VecX>(base.data(), base.size()));
      report.max_rel_err = std::max(
          report.max_rel_err,
          rel_error(Eigen::Map<const VecX>(grad.data(), grad.size()), fd));
    }
  }
  report.pass = report.max_rel_err <= report.tolerance;
  return report;
}

VecX flatten_params(const PeerModel& m) {
  VecX flat(m.param_count());
  Eigen::Index at = 0;
  flat.segment(at, m.embed_w.size()) =
      Eigen::Map<const VecX>(m.embed_w.data(), m.embed_w.size());
  at += m.embed_w.size();
  flat.segment(at, m.embed_b.size()) = m.embed_b;
  at += m.embed_b.size();
  flat.segment(at, m.prototypes.size()) =
      Eigen::Map<const VecX>(m.prototypes.data(), m.prototypes.size());
  return flat;
}

void unflatten_params(PeerModel& m, const VecX& flat) {
  Eigen::Index at = 0;
  Eigen::Map<VecX>(m.embed_w.data(), m.embed_w.size()) =
      flat.segment(at, m.embed_w.size());
  at += m.embed_w.size();
  m.embed_b = flat.segment(at, m.embed_b.size());
  at += m.embed_b.size();
  Eigen::Map<VecX>(m.prototypes.data(), m.prototypes.size()) =
      flat.segment(at, m.prototypes.size());
}

VecX flatten_grads(const ParamGrads& g) {
  VecX flat(g.embed_w.size() + g.embed_b.size() + g.prototypes.size());
  Eigen::Index at = 0;
  flat.segment(at, g.embed_w.size()) =
      Eigen::Map<const VecX>(g.embed_w.data(), g.embed_w.size());
  at += g.embed_w.size();
  flat.segment(at, g.embed_b.size()) = g.embed_b;
  at += g.embed_b.size();
  flat.segment(at, g.prototypes.size()) =
      Eigen::Map<const VecX>(g.prototypes.data(), g.prototypes.size());
  return flat;
}

struct EndToEndInstance {
  PeerModel model;
  MatX features;
  std::vector<int> labels;
  CalibrationParams calib;
};

// Draw instances whose pre-activations stay away from the rectifier kink
// so the finite-difference probe remains inside a smooth region.
EndToEndInstance random_model_instance(Rng& rng) {
  constexpr int kDIn = 8, kDEmb = 4, kClasses = 5, kBatch = 4;
  for (;;) {
    EndToEndInstance inst;
    inst.model = PeerModel::init(kDIn, kDEmb, kClasses, rng.next_u64());
    inst.features.resize(kDIn, kBatch);
    for (Eigen::Index j = 0; j < inst.features.size(); ++j) {
      inst.features.data()[j] = rng.uniform(-1.0, 1.0);
    }
    inst.labels.resize(kBatch);
    for (auto& y : inst.labels) {
      y = static_cast<int>(rng.uniform_int(kClasses));
    }
    inst.calib.kappa = 1.0;
    inst.calib.theta.resize(kClasses);
    for (int j = 0; j < kClasses; ++j) {
      inst.calib.theta[j] = rng.uniform(-2.0, 1.0);
    }
    const ForwardResult fwd = forward(inst.model, inst.features);
    if (fwd.pre_act.cwiseAbs().minCoeff() > 1e-3) return inst;
  }
}

using EvidentialValue =
    std::function<LossWithGrad(const DirichletBatch&, const EndToEndInstance&)>;

GradCheckReport check_end_to_end(const std::string& name,
                                 const EvidentialValue& loss,
                                 std::uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report{name, 0.0, kEndToEndTol, false};
  for (int t = 0; t < kInstances; ++t) {
    EndToEndInstance inst = random_model_instance(rng);
    const ForwardResult fwd = forward(inst.model, inst.features);
    const LossWithGrad at_loss =
        loss(evidence_batch(fwd.logits, inst.calib), inst);
    const ParamGrads grads =
        backward(inst.model, fwd, inst.features, at_loss.grad_logits);
    const VecX analytic = flatten_grads(grads);
    const VecX fd = central_difference(
        [&](const VecX& params) {
          PeerModel probe = inst.model;
          unflatten_params(probe, params);
          const ForwardResult f = forward(probe, inst.features);
          return loss(evidence_batch(f.logits, inst.calib), inst).value;
        },
        flatten_params(inst.model));
    report.max_rel_err = std::max(report.max_rel_err, rel_error(analytic, fd));
  }
  report.pass = report.max_rel_err <= report.tolerance;
  return report;
}

using PairValue = std::function<PairLossWithGrad(const MatX&, const MatX&,
                                                 const PairInstance&)>;

// End-to-end pair losses: both peer models' parameters perturbed.
GradCheckReport check_pair_end_to_end(const std::string& name,
                                      const PairValue& loss,
                                      std::uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report{name, 0.0, kEndToEndTol, false};
  for (int t = 0; t < kInstances; ++t) {
    EndToEndInstance a = random_model_instance(rng);
    EndToEndInstance b;
    b.features = a.features;  // shared batch
    do {
      b.model = PeerModel::init(a.model.d_in(), a.model.d_emb(),
                                a.model.num_classes(), rng.next_u64());
    } while (forward(b.model, b.features).pre_act.cwiseAbs().minCoeff() <=
             1e-3);
    PairInstance weights;
    const int c = a.model.num_classes();
    for (Eigen::Index i = 0; i < a.features.cols(); ++i) {
      weights.r1.push_back(
          {static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c))),
           rng.uniform()});
      weights.r2.push_back(
          {static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c))),
           rng.uniform()});
    }
    const ForwardResult fa = forward(a.model, a.features);
    const ForwardResult fb = forward(b.model, b.features);
    const PairLossWithGrad at_loss = loss(fa.logits, fb.logits, weights);
    const VecX analytic1 = flatten_grads(
        backward(a.model, fa, a.features, at_loss.grad_logits1));
    const VecX analytic2 = flatten_grads(
        backward(b.model, fb, b.features, at_loss.grad_logits2));
    const VecX fd1 = central_difference(
        [&](const VecX& params) {
          PeerModel probe = a.model;
          unflatten_params(probe, params);
          return loss(forward(probe, a.features).logits, fb.logits, weights)
              .value;
        },
        flatten_params(a.model));
    const VecX fd2 = central_difference(
        [&](const VecX& params) {
          PeerModel probe = b.model;
          unflatten_params(probe, params);
          return loss(fa.logits, forward(probe, b.features).logits, weights)
              .value;
        },
        flatten_params(b.model));
    report.max_rel_err =
        std::max({report.max_rel_err, rel_error(analytic1, fd1),
                  rel_error(analytic2, fd2)});
  }
  report.pass = report.max_rel_err <= report.tolerance;
  return report;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck(std::uint64_t seed) {
  std::vector<GradCheckReport> reports;
  reports.push_back(check_evidential(
      "enll/logits+theta",
      [](const DirichletBatch& b, const Instance& i) {
        return enll_loss(b, i.labels);
      },
      mix_seed(seed, 1)));
  reports.push_back(check_evidential(
      "kl_dirichlet/logits+theta",
      [](const DirichletBatch& b, const Instance&) {
        return kl_dirichlet_uniform(b);
      },
      mix_seed(seed, 2)));
  reports.push_back(check_evidential(
      "ecl/logits+theta",
      [](const DirichletBatch& b, const Instance& i) {
        return ecl_loss(b, i.labels, 0.5);
      },
      mix_seed(seed, 3)));
  reports.push_back(check_pair(
      "wce/logits",
      [](const MatX& z1, const MatX& z2, const std::vector<ClassWeight>& r1,
         const std::vector<ClassWeight>& r2) {
        return wce_loss(z1, z2, r1, r2);
      },
      mix_seed(seed, 4)));
  reports.push_back(check_pair(
      "wkl/logits",
      [](const MatX& z1, const MatX& z2, const std::vector<ClassWeight>& r1,
         const std::vector<ClassWeight>& r2) {
        return wkl_loss(z1, z2, r1, r2);
      },
      mix_seed(seed, 5)));
  reports.push_back(check_end_to_end(
      "enll/model-params",
      [](const DirichletBatch& b, const EndToEndInstance& i) {
        return enll_loss(b, i.labels);
      },
      mix_seed(seed, 6)));
  reports.push_back(check_end_to_end(
      "kl_dirichlet/model-params",
      [](const DirichletBatch& b, const EndToEndInstance&) {
        return kl_dirichlet_uniform(b);
      },
      mix_seed(seed, 7)));
  reports.push_back(check_end_to_end(
      "ecl/model-params",
      [](const DirichletBatch& b, const EndToEndInstance& i) {
        return ecl_loss(b, i.labels, 0.5);
      },
      mix_seed(seed, 8)));
  reports.push_back(check_pair_end_to_end(
      "wce/model-params",
      [](const MatX& z1, const MatX& z2, const PairInstance& w) {
        return wce_loss(z1, z2, w.r1, w.r2);
      },
      mix_seed(seed, 9)));
  reports.push_back(check_pair_end_to_end(
      "wkl/model-params",
      [](const MatX& z1, const MatX& z2, const PairInstance& w) {
        return wkl_loss(z1, z2, w.r1, w.r2);
      },
      mix_seed(seed, 10)));
  return reports;
}

}  // namespace care
