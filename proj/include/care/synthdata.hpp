#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "care/model.hpp"
#include "care/types.hpp"

namespace care {

struct LabeledSample {
  int sample_id = 0;
  VecX features;
  int true_label = 0;   // evaluation-only ground truth
  int noisy_label = 0;  // training supervision, equals true_label if clean

  bool operator==(const LabeledSample& other) const;
};

struct DatasetMeta {
  int c_train = 50;
  int c_test = 25;
  int samples_per_id = 20;
  int d_in = 32;
  Scalar intra_spread = 0.15;
  std::string noise_type = "none";  // none | random | patterned
  Scalar noise_rate = 0.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> query;
  std::vector<LabeledSample> gallery;
  DatasetMeta meta;

  bool operator==(const Dataset& other) const;
};

struct GenConfig {
  int c_train = 50;
  int c_test = 25;
  int samples_per_id = 20;
  int d_in = 32;
  Scalar intra_spread = 0.15;
  std::uint64_t seed = 0;
};

// Each identity gets a unit-norm random center; samples are renormalized
// Gaussian perturbations of it. The last quarter of each identity's
// samples use a 3x spread to act as hard positives. Test identities are
// disjoint from train; each test identity's samples split half query /
// half gallery.
Dataset generate(const GenConfig& config);

// Corrupt exactly floor(rate * N) uniformly chosen train samples with a
// uniformly random wrong label.
void inject_random_noise(Dataset& dataset, Scalar rate, std::uint64_t seed);

// Corrupt exactly floor(rate * N) uniformly chosen train samples with the
// true label of the nearest (cosine distance on reference embeddings)
// training sample of a different identity; distance ties break toward the
// smallest sample id.
void inject_patterned_noise(Dataset& dataset, Scalar rate,
                            const PeerModel& reference_model,
                            std::uint64_t seed);

// CSV files train.csv / query.csv / gallery.csv with header
// sample_id,true_label,noisy_label,f0,...,f{d-1}, plus a meta.json
// sidecar. Round-trips exactly.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Column-per-sample feature matrix and label vectors for a split.
MatX features_matrix(const std::vector<LabeledSample>& samples);
std::vector<int> true_labels(const std::vector<LabeledSample>& samples);
std::vector<int> noisy_labels(const std::vector<LabeledSample>& samples);
std::vector<bool> clean_flags(const std::vector<LabeledSample>& samples);

}  // namespace care
