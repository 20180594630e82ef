#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "care/config.hpp"
#include "care/cotrain.hpp"
#include "care/epr.hpp"
#include "care/metrics.hpp"
#include "care/model.hpp"
#include "care/synthdata.hpp"
#include "care/types.hpp"

namespace care {

// Training aborted on a non-finite loss; `dump` holds a diagnostic
// snapshot for the CLI to persist (exit code 3).
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& message, std::string dump)
      : std::runtime_error(message), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

// Per-sample score histories for one network, indexed by train position.
struct ScoreTable {
  std::vector<CamRecord> cam;
  std::vector<CoswRecord> cosw;
  int last_epoch = 0;  // global epoch of the latest entry

  std::vector<std::pair<int, Scalar>> accumulated_certainties() const;
};

// Full-set deterministic scoring pass after an epoch's updates: appends
// instantaneous CAM and COSW for `global_epoch` and refreshes the
// accumulated values. Optionally dumps one CSV row per sample.
void rescore(ScoreTable& table, const PeerModel& model, const Dataset& data,
             const ExperimentConfig& config, int global_epoch,
             std::ostream* score_dump);

// Header for the per-sample score dump CSV.
extern const char* const kScoreDumpHeader;

struct Stage1Result {
  PeerModel model;
  CalibrationParams calib;
  ScoreTable scores;
  int clamp_hits = 0;
};

// Calibration-stage training with the evidential loss. `epochs` defaults
// to the configured stage-1 length; the S1-only ablation passes the full
// schedule length instead.
Stage1Result train_stage1(const Dataset& data, const ExperimentConfig& config,
                          std::uint64_t seed, int epochs = -1,
                          std::ostream* score_dump = nullptr);

struct PeerPairState {
  PeerModel net1;
  PeerModel net2;
  ScoreTable scores1;
  ScoreTable scores2;
};

struct RefinementEpochStats {
  Scalar wce1 = 0.0, wkl1 = 0.0;
  Scalar wce2 = 0.0, wkl2 = 0.0;
  Scalar clean_fraction1 = 0.0, clean_fraction2 = 0.0;
};

// One co-training epoch: each lane consumes its own shuffled batch
// stream, builds R weights from its peer's frozen state and previous-epoch
// accumulated certainties, and both networks update from batch-boundary
// snapshots. Scores are NOT refreshed here; callers rescore afterwards.
RefinementEpochStats refinement_epoch(PeerPairState& pair, const Dataset& data,
                                      const ExperimentConfig& config,
                                      int global_epoch, Rng& lane1_order,
                                      Rng& lane2_order);

struct Stage2Result {
  PeerModel net1;
  PeerModel net2;
  ScoreTable scores1;
  ScoreTable scores2;
};

struct Stage2Sinks {
  std::ostream* jsonl = nullptr;       // one line per epoch per network
  std::ostream* score_dump1 = nullptr;
  std::ostream* score_dump2 = nullptr;
};

Stage2Result train_stage2(const Dataset& data, const ExperimentConfig& config,
                          std::uint64_t seed, const Stage1Result& stage1,
                          const Stage2Sinks& sinks = {});

// Plain softmax cross-entropy on the noisy labels for the full schedule;
// the comparison baseline.
PeerModel train_baseline(const Dataset& data, const ExperimentConfig& config,
                         std::uint64_t seed);

enum class Method { care, baseline, s1_only };

struct EvalResult {
  RetrievalReport retrieval;
  Scalar v_c = 0.0;
  std::optional<Scalar> v_a;
};

// Retrieval metrics on the test split plus cluster diagnostics on train.
EvalResult evaluate_model(const PeerModel& model, const Dataset& data);

struct ExperimentOutcome {
  EvalResult final_eval;                  // CARE evaluates net1
  std::optional<EvalResult> stage1_eval;  // CARE only
  std::optional<Scalar> detection_auc;    // mean over networks, final epoch
  Scalar wall_seconds = 0.0;
};

// Build the per-seed dataset (generation + configured noise), train with
// the requested method and evaluate. When `out_dir` is non-empty, writes
// metrics.csv, epochs.jsonl, checkpoints and optional score dumps there.
ExperimentOutcome run_experiment(const ExperimentConfig& config,
                                 std::uint64_t seed, Method method,
                                 const std::string& out_dir = "",
                                 bool dump_scores = false);

// The dataset an experiment trains on: generated from the config's data
// block, with the configured noise injected (patterned noise trains its
// clean reference model first).
Dataset build_experiment_dataset(const ExperimentConfig& config,
                                 std::uint64_t seed);

}  // namespace care
