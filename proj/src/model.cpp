#include "care/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace care {

Scalar lr_at(int epoch, const Schedule& schedule) {
  if (epoch < 1 || epoch > schedule.total_epochs()) {
    throw std::out_of_range("lr_at: epoch out of range");
  }
  return epoch <= schedule.stage1_epochs
             ? schedule.lr_stage1
             : schedule.lr_stage1 * schedule.decay;
}

PeerModel PeerModel::init(int d_in, int d_emb, int num_classes,
                          std::uint64_t seed) {
  if (d_in < 1 || d_emb < 1 || num_classes < 2) {
    throw std::invalid_argument("PeerModel::init: bad dimensions");
  }
  Rng rng(seed);
  PeerModel m;
  m.embed_w.resize(d_emb, d_in);
  const Scalar w_scale = 1.0 / std::sqrt(static_cast<Scalar>(d_in));
  for (Eigen::Index r = 0; r < m.embed_w.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.embed_w.cols(); ++c) {
      m.embed_w(r, c) = rng.uniform(-w_scale, w_scale);
    }
  }
  m.embed_b = VecX::Zero(d_emb);
  m.prototypes.resize(num_classes, d_emb);
  const Scalar p_scale = 1.0 / std::sqrt(static_cast<Scalar>(d_emb));
  for (Eigen::Index r = 0; r < m.prototypes.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.prototypes.cols(); ++c) {
      m.prototypes(r, c) = rng.uniform(-p_scale, p_scale);
    }
    if (m.prototypes.row(r).norm() == 0.0) {
      m.prototypes(r, 0) = p_scale;  // keep prototype rows non-zero
    }
  }
  m.vel_embed_w = MatX::Zero(d_emb, d_in);
  m.vel_embed_b = VecX::Zero(d_emb);
  m.vel_prototypes = MatX::Zero(num_classes, d_emb);
  return m;
}

ForwardResult forward(const PeerModel& model,
                      const Eigen::Ref<const MatX>& features) {
  if (features.rows() != model.embed_w.cols()) {
    throw std::invalid_argument("forward: feature dimension mismatch");
  }
  ForwardResult f;
  f.pre_act = (model.embed_w * features).colwise() + model.embed_b;
  f.embeddings = f.pre_act.cwiseMax(0.0);
  f.logits = model.prototypes * f.embeddings;
  return f;
}

ParamGrads backward(const PeerModel& model, const ForwardResult& fwd,
                    const Eigen::Ref<const MatX>& features,
                    const Eigen::Ref<const MatX>& grad_logits) {
  if (grad_logits.rows() != model.prototypes.rows() ||
      grad_logits.cols() != features.cols()) {
    throw std::invalid_argument("backward: gradient dimension mismatch");
  }
  ParamGrads g;
  g.prototypes = grad_logits * fwd.embeddings.transpose();
  MatX d_emb = model.prototypes.transpose() * grad_logits;
  MatX d_pre =
      d_emb.cwiseProduct((fwd.pre_act.array() > 0.0).cast<Scalar>().matrix());
  g.embed_w = d_pre * features.transpose();
  g.embed_b = d_pre.rowwise().sum();
  return g;
}

namespace {

template <typename Mat>
void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string("sgd_update: non-finite ") + what);
  }
}

template <typename Mat>
void momentum_step(Mat& vel, Mat& param, const Mat& grad, Scalar lr,
                   Scalar momentum) {
  vel = momentum * vel + grad;
  param -= lr * vel;
}

}  // namespace

void sgd_update(PeerModel& model, const ParamGrads& grads, Scalar lr,
                Scalar momentum) {
  check_finite(grads.embed_w, "embed_w gradient");
  check_finite(grads.embed_b, "embed_b gradient");
  check_finite(grads.prototypes, "prototype gradient");
  momentum_step(model.vel_embed_w, model.embed_w, grads.embed_w, lr, momentum);
  momentum_step(model.vel_embed_b, model.embed_b, grads.embed_b, lr, momentum);
  momentum_step(model.vel_prototypes, model.prototypes, grads.prototypes, lr,
                momentum);
  check_finite(model.embed_w, "embed_w parameter");
  check_finite(model.embed_b, "embed_b parameter");
  check_finite(model.prototypes, "prototype parameter");
}

void save_checkpoint(const PeerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const std::int64_t header[5] = {kCheckpointMagic, model.d_in(),
                                  model.d_emb(), model.num_classes(),
                                  model.param_count()};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  auto write_row_major = [&out](const MatX& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const Scalar v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  };
  write_row_major(model.embed_w);
  out.write(reinterpret_cast<const char*>(model.embed_b.data()),
            static_cast<std::streamsize>(sizeof(Scalar) *
                                         static_cast<std::size_t>(
                                             model.embed_b.size())));
  write_row_major(model.prototypes);
  if (!out) throw std::runtime_error("save_checkpoint: write failed " + path);
}

PeerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::int64_t header[5];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || header[0] != kCheckpointMagic) {
    throw std::runtime_error("load_checkpoint: bad header in " + path);
  }
  const int d_in = static_cast<int>(header[1]);
  const int d_emb = static_cast<int>(header[2]);
  const int num_classes = static_cast<int>(header[3]);
  if (d_in < 1 || d_emb < 1 || num_classes < 2) {
    throw std::runtime_error("load_checkpoint: bad dimensions in " + path);
  }
  PeerModel m = PeerModel::init(d_in, d_emb, num_classes, 0);
  if (header[4] != m.param_count()) {
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  }
  auto read_row_major = [&in](MatX& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        in.read(reinterpret_cast<char*>(&mat(r, c)), sizeof(Scalar));
      }
    }
  };
  read_row_major(m.embed_w);
  in.read(reinterpret_cast<char*>(m.embed_b.data()),
          static_cast<std::streamsize>(sizeof(Scalar) *
                                       static_cast<std::size_t>(
                                           m.embed_b.size())));
  read_row_major(m.prototypes);
  if (!in) throw std::runtime_error("load_checkpoint: truncated " + path);
  m.vel_embed_w.setZero();
  m.vel_embed_b.setZero();
  m.vel_prototypes.setZero();
  return m;
}

}  // namespace care
