#include "care/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "care/numkernel.hpp"
#include "care/pec.hpp"

namespace care {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags for deriving independent RNG streams from the run seed.
// Stage-2 lane orders use the raw (seed, seed+1) pair instead.
constexpr std::uint64_t kModelInitTag = 0x11;
constexpr std::uint64_t kStage1ShuffleTag = 0x12;
constexpr std::uint64_t kBaselineShuffleTag = 0x13;
constexpr std::uint64_t kDataTag = 0x14;
constexpr std::uint64_t kNoiseTag = 0x15;

MarginParams margin_params(const ExperimentConfig& config) {
  MarginParams p;
  p.alpha = config.alpha;
  p.beta = config.beta;
  p.k = config.effective_k();
  p.total_epochs = config.total_epochs();
  return p;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  return idx;
}

MatX gather_columns(const MatX& m, const std::vector<std::size_t>& order,
                    std::size_t begin, std::size_t end) {
  MatX out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) =
        m.col(static_cast<Eigen::Index>(order[i]));
  }
  return out;
}

std::string loss_dump(const char* where, int epoch, std::size_t batch_index,
                      Scalar value) {
  json j = {{"where", where},
            {"epoch", epoch},
            {"batch", batch_index},
            {"loss", value}};
  return j.dump(2);
}

}  // namespace

const char* const kScoreDumpHeader =
    "sample_id,epoch,delta,lambda,instant_cam,cam_acc,delta_h,lambda_h,cosw,"
    "cosw_acc";

std::vector<std::pair<int, Scalar>> ScoreTable::accumulated_certainties()
    const {
  std::vector<std::pair<int, Scalar>> out;
  out.reserve(cosw.size());
  for (const auto& rec : cosw) {
    out.emplace_back(rec.sample_id, rec.accumulated);
  }
  return out;
}

void rescore(ScoreTable& table, const PeerModel& model, const Dataset& data,
             const ExperimentConfig& config, int global_epoch,
             std::ostream* score_dump) {
  const std::size_t n = data.train.size();
  if (table.cam.empty()) {
    table.cam.resize(n);
    table.cosw.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      table.cam[i].sample_id = data.train[i].sample_id;
      table.cosw[i].sample_id = data.train[i].sample_id;
    }
  }
  const MarginParams params = margin_params(config);
  const int total = config.total_epochs();
  const MatX features = features_matrix(data.train);
  const ForwardResult fwd = forward(model, features);
  char row[256];
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index col = static_cast<Eigen::Index>(i);
    const int y = data.train[i].noisy_label;
    const VecX z = fwd.logits.col(col);
    const Scalar delta = angular_separation(z, y);
    const Scalar lambda = topk_spread(z, y, params.k);
    const Scalar inst = params.alpha * delta - params.beta * lambda;
    table.cam[i].per_epoch.push_back(inst);
    table.cam[i].accumulated =
        accumulate_cam(table.cam[i], global_epoch, total);

    Hyperspherical h;
    if (fwd.embeddings.col(col).norm() == 0.0) {
      // Fully rectified embedding: no direction information, neutral
      // distances of 0.5 to every prototype.
      h.delta = 0.0;
      h.lambda = 0.0;
    } else {
      const VecX d = class_distances(fwd.embeddings.col(col),
                                     model.prototypes);
      h = hyperspherical_components(d, y, params.k);
    }
    const Scalar cosw = cosw_score(h.delta, h.lambda, params);
    table.cosw[i].per_epoch.push_back(cosw);
    table.cosw[i].accumulated =
        accumulate_cosw(table.cosw[i], global_epoch, total);

    if (score_dump != nullptr) {
      std::snprintf(row, sizeof(row),
                    "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                    data.train[i].sample_id, global_epoch, delta, lambda,
                    inst, table.cam[i].accumulated, h.delta, h.lambda, cosw,
                    table.cosw[i].accumulated);
      *score_dump << row << "\n";
    }
  }
  table.last_epoch = global_epoch;
}

Stage1Result train_stage1(const Dataset& data, const ExperimentConfig& config,
                          std::uint64_t seed, int epochs,
                          std::ostream* score_dump) {
  const int c = config.data.c_train;
  const int run_epochs = epochs < 0 ? config.stage1_epochs : epochs;
  Schedule schedule{config.stage1_epochs, config.stage2_epochs, config.lr,
                    config.decay};

  Stage1Result result;
  result.model = PeerModel::init(config.data.d_in, config.data.d_emb, c,
                                 mix_seed(seed, kModelInitTag));
  result.calib = CalibrationParams::near_softmax(c, config.kappa);
  VecX theta_vel = VecX::Zero(c);

  const MatX features = features_matrix(data.train);
  const std::vector<int> labels = noisy_labels(data.train);
  const std::size_t n = data.train.size();
  Rng order_rng(mix_seed(seed, kStage1ShuffleTag));

  if (score_dump != nullptr) *score_dump << kScoreDumpHeader << "\n";

  for (int epoch = 1; epoch <= run_epochs; ++epoch) {
    const Scalar lr =
        epoch <= schedule.total_epochs() ? lr_at(epoch, schedule)
                                         : schedule.lr_stage1 * schedule.decay;
    const auto order = shuffled_indices(n, order_rng);
    for (std::size_t b = 0; b * config.batch_size < n; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      const MatX x = gather_columns(features, order, begin, end);
      std::vector<int> y(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        y[i - begin] = labels[order[i]];
      }
      const ForwardResult fwd = forward(result.model, x);
      DirichletBatch evid =
          evidence_batch(fwd.logits, result.calib, config.logit_clamp);
      result.clamp_hits += evid.clamp_hits;
      const LossWithGrad loss = ecl_loss(evid, y, config.lambda);
      if (!std::isfinite(loss.value)) {
        throw NonFiniteLossError("stage1: non-finite loss",
                                 loss_dump("stage1", epoch, b, loss.value));
      }
      const ParamGrads grads =
          backward(result.model, fwd, x, loss.grad_logits);
      sgd_update(result.model, grads, lr, config.momentum);
      theta_vel = config.momentum * theta_vel + loss.grad_theta;
      result.calib.theta -= lr * theta_vel;
    }
    rescore(result.scores, result.model, data, config, epoch, score_dump);
  }
  return result;
}

namespace {

struct LaneWeights {
  std::vector<ClassWeight> r1;
  std::vector<ClassWeight> r2;
};

// R weights for one mini-batch. R1 (applied to network 1's probabilities)
// is built from network 2's state: its partition and accumulated
// certainties on the clean branch, its predicted labels on the noisy
// branch. R2 mirrors this with the networks swapped.
LaneWeights build_weights(const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end,
                          const std::vector<int>& labels,
                          const MatX& probs1, const MatX& probs2,
                          const std::vector<PartitionDecision>& partition1,
                          const std::vector<PartitionDecision>& partition2,
                          const ScoreTable& scores1,
                          const ScoreTable& scores2) {
  LaneWeights w;
  w.r1.reserve(end - begin);
  w.r2.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t s = order[i];
    const Eigen::Index col = static_cast<Eigen::Index>(i - begin);
    const int y = labels[s];
    const PeerLabel from2 = peer_label(probs2.col(col));
    const PeerLabel from1 = peer_label(probs1.col(col));
    w.r1.push_back(weight_R(partition1[s], y, from2,
                            scores2.cosw[s].accumulated));
    w.r2.push_back(weight_R(partition2[s], y, from1,
                            scores1.cosw[s].accumulated));
  }
  return w;
}

MatX softmax_columns(const MatX& logits) {
  MatX p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    p.col(i) = stable_softmax(logits.col(i));
  }
  return p;
}

Scalar clean_fraction(const std::vector<PartitionDecision>& partition) {
  std::size_t clean = 0;
  for (const auto& d : partition) clean += d.is_clean ? 1 : 0;
  return static_cast<Scalar>(clean) / static_cast<Scalar>(partition.size());
}

}  // namespace

RefinementEpochStats refinement_epoch(PeerPairState& pair, const Dataset& data,
                                      const ExperimentConfig& config,
                                      int global_epoch, Rng& lane1_order,
                                      Rng& lane2_order) {
  const std::size_t n = data.train.size();
  const MatX features = features_matrix(data.train);
  const std::vector<int> labels = noisy_labels(data.train);
  Schedule schedule{config.stage1_epochs, config.stage2_epochs, config.lr,
                    config.decay};
  const Scalar lr = lr_at(global_epoch, schedule);

  PartitionStrategy strategy;
  strategy.kind = config.partition.strategy == "threshold"
                      ? PartitionStrategy::Kind::fixed_threshold
                      : PartitionStrategy::Kind::quantile;
  strategy.tau = config.partition.tau;
  strategy.rho = config.resolved_rho();
  // Partitions for this epoch come from the previous epoch's accumulated
  // certainties (stage-1 final scores on the first refinement epoch).
  // Re-index the id-sorted decisions by train position.
  std::unordered_map<int, std::size_t> position_of;
  position_of.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    position_of[data.train[i].sample_id] = i;
  }
  auto by_position = [&](std::vector<PartitionDecision> decisions) {
    std::vector<PartitionDecision> out(n);
    for (auto& d : decisions) out[position_of.at(d.sample_id)] = d;
    return out;
  };
  const auto partition1 = by_position(
      partition_clean_noisy(pair.scores2.accumulated_certainties(), strategy));
  const auto partition2 = by_position(
      partition_clean_noisy(pair.scores1.accumulated_certainties(), strategy));

  const auto order1 = shuffled_indices(n, lane1_order);
  const auto order2 = shuffled_indices(n, lane2_order);

  RefinementEpochStats stats;
  stats.clean_fraction1 = clean_fraction(partition1);
  stats.clean_fraction2 = clean_fraction(partition2);
  std::size_t batches = 0;

  for (std::size_t b = 0; b * config.batch_size < n; ++b) {
    const std::size_t begin = b * config.batch_size;
    const std::size_t end =
        std::min(n, begin + static_cast<std::size_t>(config.batch_size));
    // Batch-boundary snapshots: both lanes read their peer frozen at the
    // top of the step, so the two updates commute.
    const PeerModel snap1 = pair.net1;
    const PeerModel snap2 = pair.net2;

    // Lane 1: own batch, peer = frozen net2.
    {
      const MatX x = gather_columns(features, order1, begin, end);
      const ForwardResult f1 = forward(pair.net1, x);
      const ForwardResult f2 = forward(snap2, x);
      const MatX p1 = softmax_columns(f1.logits);
      const MatX p2 = softmax_columns(f2.logits);
      const LaneWeights w =
          build_weights(order1, begin, end, labels, p1, p2, partition1,
                        partition2, pair.scores1, pair.scores2);
      const PairLossWithGrad wce = wce_loss(f1.logits, f2.logits, w.r1, w.r2);
      const PairLossWithGrad wkl = wkl_loss(f1.logits, f2.logits, w.r1, w.r2);
      const Scalar total = wce.value + config.gamma * wkl.value;
      if (!std::isfinite(total)) {
        throw NonFiniteLossError(
            "stage2: non-finite loss",
            loss_dump("stage2.lane1", global_epoch, b, total));
      }
      stats.wce1 += wce.value;
      stats.wkl1 += wkl.value;
      const MatX g1 = wce.grad_logits1 + config.gamma * wkl.grad_logits1;
      const ParamGrads grads = backward(pair.net1, f1, x, g1);
      sgd_update(pair.net1, grads, lr, config.momentum);
    }
    // Lane 2: own batch, peer = frozen net1 snapshot.
    {
      const MatX x = gather_columns(features, order2, begin, end);
      const ForwardResult f1 = forward(snap1, x);
      const ForwardResult f2 = forward(pair.net2, x);
      const MatX p1 = softmax_columns(f1.logits);
      const MatX p2 = softmax_columns(f2.logits);
      const LaneWeights w =
          build_weights(order2, begin, end, labels, p1, p2, partition1,
                        partition2, pair.scores1, pair.scores2);
      const PairLossWithGrad wce = wce_loss(f1.logits, f2.logits, w.r1, w.r2);
      const PairLossWithGrad wkl = wkl_loss(f1.logits, f2.logits, w.r1, w.r2);
      const Scalar total = wce.value + config.gamma * wkl.value;
      if (!std::isfinite(total)) {
        throw NonFiniteLossError(
            "stage2: non-finite loss",
            loss_dump("stage2.lane2", global_epoch, b, total));
      }
      stats.wce2 += wce.value;
      stats.wkl2 += wkl.value;
      const MatX g2 = wce.grad_logits2 + config.gamma * wkl.grad_logits2;
      const ParamGrads grads = backward(pair.net2, f2, x, g2);
      sgd_update(pair.net2, grads, lr, config.momentum);
    }
    ++batches;
  }
  const Scalar inv_b = 1.0 / static_cast<Scalar>(batches);
  stats.wce1 *= inv_b;
  stats.wkl1 *= inv_b;
  stats.wce2 *= inv_b;
  stats.wkl2 *= inv_b;
  return stats;
}

Stage2Result train_stage2(const Dataset& data, const ExperimentConfig& config,
                          std::uint64_t seed, const Stage1Result& stage1,
                          const Stage2Sinks& sinks) {
  // Both networks copy the stage-1 weights and score history; momentum
  // restarts for the new objective.
  PeerModel seed_model = stage1.model;
  seed_model.vel_embed_w.setZero();
  seed_model.vel_embed_b.setZero();
  seed_model.vel_prototypes.setZero();
  PeerPairState pair{seed_model, seed_model, stage1.scores, stage1.scores};

  // Peer symmetry breaking: the two lanes consume independently shuffled
  // batch orders seeded (seed, seed+1).
  Rng lane1_order(seed);
  Rng lane2_order(seed + 1);

  if (sinks.score_dump1 != nullptr) {
    *sinks.score_dump1 << kScoreDumpHeader << "\n";
  }
  if (sinks.score_dump2 != nullptr) {
    *sinks.score_dump2 << kScoreDumpHeader << "\n";
  }
  const std::vector<bool> clean = clean_flags(data.train);

  const int first = config.stage1_epochs + 1;
  const int last = config.total_epochs();
  for (int epoch = first; epoch <= last; ++epoch) {
    const RefinementEpochStats stats = refinement_epoch(
        pair, data, config, epoch, lane1_order, lane2_order);
    rescore(pair.scores1, pair.net1, data, config, epoch, sinks.score_dump1);
    rescore(pair.scores2, pair.net2, data, config, epoch, sinks.score_dump2);
    if (sinks.jsonl != nullptr) {
      std::vector<Scalar> acc1, acc2;
      acc1.reserve(pair.scores1.cosw.size());
      acc2.reserve(pair.scores2.cosw.size());
      for (const auto& r : pair.scores1.cosw) acc1.push_back(r.accumulated);
      for (const auto& r : pair.scores2.cosw) acc2.push_back(r.accumulated);
      const json line1 = {{"epoch", epoch},
                          {"net", 1},
                          {"wce", stats.wce1},
                          {"wkl", stats.wkl1},
                          {"clean_fraction", stats.clean_fraction1},
                          {"detection_auc", detection_auc(acc1, clean)}};
      const json line2 = {{"epoch", epoch},
                          {"net", 2},
                          {"wce", stats.wce2},
                          {"wkl", stats.wkl2},
                          {"clean_fraction", stats.clean_fraction2},
                          {"detection_auc", detection_auc(acc2, clean)}};
      *sinks.jsonl << line1.dump() << "\n" << line2.dump() << "\n";
    }
  }

  Stage2Result result;
  result.net1 = std::move(pair.net1);
  result.net2 = std::move(pair.net2);
  result.scores1 = std::move(pair.scores1);
  result.scores2 = std::move(pair.scores2);
  return result;
}

PeerModel train_baseline(const Dataset& data, const ExperimentConfig& config,
                         std::uint64_t seed) {
  PeerModel model = PeerModel::init(config.data.d_in, config.data.d_emb,
                                    config.data.c_train,
                                    mix_seed(seed, kModelInitTag));
  Schedule schedule{config.stage1_epochs, config.stage2_epochs, config.lr,
                    config.decay};
  const MatX features = features_matrix(data.train);
  const std::vector<int> labels = noisy_labels(data.train);
  const std::size_t n = data.train.size();
  Rng order_rng(mix_seed(seed, kBaselineShuffleTag));
  for (int epoch = 1; epoch <= schedule.total_epochs(); ++epoch) {
    const Scalar lr = lr_at(epoch, schedule);
    const auto order = shuffled_indices(n, order_rng);
    for (std::size_t b = 0; b * config.batch_size < n; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      const MatX x = gather_columns(features, order, begin, end);
      const ForwardResult fwd = forward(model, x);
      const Eigen::Index bs = static_cast<Eigen::Index>(end - begin);
      const Scalar inv_bs = 1.0 / static_cast<Scalar>(bs);
      MatX grad(fwd.logits.rows(), bs);
      Scalar value = 0.0;
      for (Eigen::Index i = 0; i < bs; ++i) {
        const int y = labels[order[begin + static_cast<std::size_t>(i)]];
        const VecX p = stable_softmax(fwd.logits.col(i));
        value -= std::log(std::max(p[y], kProbFloor));
        grad.col(i) = inv_bs * p;
        grad(y, i) -= inv_bs;
      }
      value *= inv_bs;
      if (!std::isfinite(value)) {
        throw NonFiniteLossError("baseline: non-finite loss",
                                 loss_dump("baseline", epoch, b, value));
      }
      const ParamGrads grads = backward(model, fwd, x, grad);
      sgd_update(model, grads, lr, config.momentum);
    }
  }
  return model;
}

EvalResult evaluate_model(const PeerModel& model, const Dataset& data) {
  EvalResult out;
  const MatX query_emb =
      forward(model, features_matrix(data.query)).embeddings;
  const MatX gallery_emb =
      forward(model, features_matrix(data.gallery)).embeddings;
  out.retrieval = cmc_map(query_emb, true_labels(data.query), gallery_emb,
                          true_labels(data.gallery));
  const MatX train_emb =
      forward(model, features_matrix(data.train)).embeddings;
  const auto [vc, va] =
      vc_va(train_emb, true_labels(data.train), noisy_labels(data.train));
  out.v_c = vc;
  out.v_a = va;
  return out;
}

Dataset build_experiment_dataset(const ExperimentConfig& config,
                                 std::uint64_t seed) {
  GenConfig gen;
  gen.c_train = config.data.c_train;
  gen.c_test = config.data.c_test;
  gen.samples_per_id = config.data.samples_per_id;
  gen.d_in = config.data.d_in;
  gen.intra_spread = config.data.intra_spread;
  gen.seed = mix_seed(seed, kDataTag);
  Dataset data = generate(gen);
  if (config.noise.type == "random") {
    inject_random_noise(data, config.noise.rate, mix_seed(seed, kNoiseTag));
  } else if (config.noise.type == "patterned") {
    // Reference model trained on clean labels for the stage-1 length.
    const Stage1Result ref = train_stage1(data, config, seed);
    inject_patterned_noise(data, config.noise.rate, ref.model,
                           mix_seed(seed, kNoiseTag));
  }
  return data;
}

namespace {

std::string metrics_row(const char* stage, int epoch, const EvalResult& eval,
                        const std::optional<Scalar>& auc,
                        std::uint64_t seed) {
  char buf[256];
  std::string va = eval.v_a ? [&] {
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%.10g", *eval.v_a);
    return std::string(tmp);
  }() : std::string();
  std::string auc_s = auc ? [&] {
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%.10g", *auc);
    return std::string(tmp);
  }() : std::string();
  std::snprintf(buf, sizeof(buf),
                "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%s,%s,%llu", stage,
                epoch, eval.retrieval.rank1, eval.retrieval.rank5,
                eval.retrieval.rank10, eval.retrieval.map, eval.v_c,
                va.c_str(), auc_s.c_str(),
                static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& config,
                                 std::uint64_t seed, Method method,
                                 const std::string& out_dir,
                                 bool dump_scores) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = build_experiment_dataset(config, seed);

  const bool writing = !out_dir.empty();
  if (writing) fs::create_directories(out_dir);
  auto open_out = [&](const char* name) {
    return std::ofstream(fs::path(out_dir) / name);
  };

  ExperimentOutcome outcome;
  std::vector<std::string> metrics_rows;

  if (method == Method::care) {
    std::ofstream s1_dump, net1_dump, net2_dump, jsonl;
    Stage2Sinks sinks;
    if (writing) {
      jsonl = open_out("epochs.jsonl");
      sinks.jsonl = &jsonl;
      if (dump_scores) {
        s1_dump = open_out("scores_stage1.csv");
        net1_dump = open_out("scores_net1.csv");
        net2_dump = open_out("scores_net2.csv");
        sinks.score_dump1 = &net1_dump;
        sinks.score_dump2 = &net2_dump;
      }
    }
    const Stage1Result stage1 =
        train_stage1(data, config, seed, -1,
                     dump_scores && writing ? &s1_dump : nullptr);
    outcome.stage1_eval = evaluate_model(stage1.model, data);
    const std::vector<bool> clean = clean_flags(data.train);
    std::vector<Scalar> s1_acc;
    for (const auto& r : stage1.scores.cosw) s1_acc.push_back(r.accumulated);
    const Scalar s1_auc = detection_auc(s1_acc, clean);
    metrics_rows.push_back(metrics_row("s1", config.stage1_epochs,
                                       *outcome.stage1_eval, s1_auc, seed));

    const Stage2Result stage2 =
        train_stage2(data, config, seed, stage1, sinks);
    outcome.final_eval = evaluate_model(stage2.net1, data);
    std::vector<Scalar> acc1, acc2;
    for (const auto& r : stage2.scores1.cosw) acc1.push_back(r.accumulated);
    for (const auto& r : stage2.scores2.cosw) acc2.push_back(r.accumulated);
    outcome.detection_auc =
        0.5 * (detection_auc(acc1, clean) + detection_auc(acc2, clean));
    metrics_rows.push_back(metrics_row("s2", config.total_epochs(),
                                       outcome.final_eval,
                                       outcome.detection_auc, seed));
    if (writing) {
      save_checkpoint(stage1.model,
                      (fs::path(out_dir) / "stage1.ckpt").string());
      save_checkpoint(stage2.net1, (fs::path(out_dir) / "net1.ckpt").string());
      save_checkpoint(stage2.net2, (fs::path(out_dir) / "net2.ckpt").string());
    }
  } else if (method == Method::s1_only) {
    std::ofstream s1_dump;
    if (writing && dump_scores) s1_dump = open_out("scores_stage1.csv");
    const Stage1Result stage1 =
        train_stage1(data, config, seed, config.total_epochs(),
                     writing && dump_scores ? &s1_dump : nullptr);
    outcome.final_eval = evaluate_model(stage1.model, data);
    const std::vector<bool> clean = clean_flags(data.train);
    std::vector<Scalar> acc;
    for (const auto& r : stage1.scores.cosw) acc.push_back(r.accumulated);
    outcome.detection_auc = detection_auc(acc, clean);
    metrics_rows.push_back(metrics_row("s1", config.total_epochs(),
                                       outcome.final_eval,
                                       outcome.detection_auc, seed));
    if (writing) {
      save_checkpoint(stage1.model,
                      (fs::path(out_dir) / "stage1.ckpt").string());
    }
  } else {
    const PeerModel model = train_baseline(data, config, seed);
    outcome.final_eval = evaluate_model(model, data);
    metrics_rows.push_back(metrics_row("baseline", config.total_epochs(),
                                       outcome.final_eval, std::nullopt,
                                       seed));
    if (writing) {
      save_checkpoint(model, (fs::path(out_dir) / "model.ckpt").string());
    }
  }

  if (writing) {
    std::ofstream metrics = open_out("metrics.csv");
    metrics << "stage,epoch,rank1,rank5,rank10,map,v_c,v_a,auc,seed\n";
    for (const auto& row : metrics_rows) metrics << row << "\n";
  }
  outcome.wall_seconds =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0)
          .count();
  return outcome;
}

}  // namespace care
