#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "care/types.hpp"

namespace care {

// Invalid or unknown configuration entry; `field` names the offending
// section.key so the CLI can report it (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct NoiseConfig {
  std::string type = "random";  // none | random | patterned
  Scalar rate = 0.2;
};

struct DataConfig {
  int c_train = 50;
  int c_test = 25;
  int samples_per_id = 20;
  int d_in = 32;
  int d_emb = 16;
  Scalar intra_spread = 0.15;
};

struct PartitionConfig {
  std::string strategy = "quantile";  // quantile | threshold
  Scalar rho = -1.0;                  // quantile fraction; -1 = track noise rate
  Scalar tau = 0.5;                   // threshold strategy cut
};

struct ExperimentConfig {
  // [train]
  Scalar lambda = 0.5;
  Scalar alpha = 100.0;
  Scalar beta = 100.0;
  Scalar kappa = 1.0;
  int k = 5;
  Scalar gamma = 1.0;
  int batch_size = 32;
  int stage1_epochs = 20;
  int stage2_epochs = 40;
  Scalar lr = 0.01;
  Scalar decay = 0.1;
  Scalar momentum = 0.9;
  Scalar logit_clamp = 30.0;

  NoiseConfig noise;
  DataConfig data;
  PartitionConfig partition;

  // [run]
  std::vector<std::uint64_t> seeds = {1};

  int total_epochs() const { return stage1_epochs + stage2_epochs; }
  int effective_k() const;       // k clamped to c_train - 1
  Scalar resolved_rho() const;   // partition.rho, or noise.rate when -1

  void validate() const;  // throws ConfigError naming the bad field
};

// Sectioned key=value text; '#' and ';' start comments. Unknown sections
// or keys are rejected.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Apply "section.key=value" overrides (CLI flags) on top of a parsed
// config, then re-validate.
void apply_override(ExperimentConfig& config, const std::string& assignment);

// Normalized serialization: fixed section and key order, canonical value
// formatting. Parsing it back yields an identical config.
std::string canonical_text(const ExperimentConfig& config);

// FNV-1a hash of the canonical text, as 16 hex characters.
std::string config_hash(const ExperimentConfig& config);

}  // namespace care
