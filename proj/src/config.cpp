#include "care/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace care {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

Scalar parse_real(const std::string& field, const std::string& value) {
  try {
    std::size_t pos = 0;
    const Scalar v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a real number, got '" + value + "'");
  }
}

int parse_int(const std::string& field, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + value + "'");
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& field,
                                       const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      seeds.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(field, "expected a seed list, got '" + value + "'");
    }
  }
  if (seeds.empty()) throw ConfigError(field, "empty seed list");
  return seeds;
}

// One setter per known section.key; anything else is rejected.
using Setter = std::function<void(ExperimentConfig&, const std::string&,
                                  const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"train.lambda", [](auto& c, auto& f, auto& v) { c.lambda = parse_real(f, v); }},
      {"train.alpha", [](auto& c, auto& f, auto& v) { c.alpha = parse_real(f, v); }},
      {"train.beta", [](auto& c, auto& f, auto& v) { c.beta = parse_real(f, v); }},
      {"train.kappa", [](auto& c, auto& f, auto& v) { c.kappa = parse_real(f, v); }},
      {"train.k", [](auto& c, auto& f, auto& v) { c.k = parse_int(f, v); }},
      {"train.gamma", [](auto& c, auto& f, auto& v) { c.gamma = parse_real(f, v); }},
      {"train.batch_size", [](auto& c, auto& f, auto& v) { c.batch_size = parse_int(f, v); }},
      {"train.stage1_epochs", [](auto& c, auto& f, auto& v) { c.stage1_epochs = parse_int(f, v); }},
      {"train.stage2_epochs", [](auto& c, auto& f, auto& v) { c.stage2_epochs = parse_int(f, v); }},
      {"train.lr", [](auto& c, auto& f, auto& v) { c.lr = parse_real(f, v); }},
      {"train.decay", [](auto& c, auto& f, auto& v) { c.decay = parse_real(f, v); }},
      {"train.momentum", [](auto& c, auto& f, auto& v) { c.momentum = parse_real(f, v); }},
      {"train.logit_clamp", [](auto& c, auto& f, auto& v) { c.logit_clamp = parse_real(f, v); }},
      {"noise.type", [](auto& c, auto&, auto& v) { c.noise.type = v; }},
      {"noise.rate", [](auto& c, auto& f, auto& v) { c.noise.rate = parse_real(f, v); }},
      {"data.c_train", [](auto& c, auto& f, auto& v) { c.data.c_train = parse_int(f, v); }},
      {"data.c_test", [](auto& c, auto& f, auto& v) { c.data.c_test = parse_int(f, v); }},
      {"data.samples_per_id", [](auto& c, auto& f, auto& v) { c.data.samples_per_id = parse_int(f, v); }},
      {"data.d_in", [](auto& c, auto& f, auto& v) { c.data.d_in = parse_int(f, v); }},
      {"data.d_emb", [](auto& c, auto& f, auto& v) { c.data.d_emb = parse_int(f, v); }},
      {"data.intra_spread", [](auto& c, auto& f, auto& v) { c.data.intra_spread = parse_real(f, v); }},
      {"partition.strategy", [](auto& c, auto&, auto& v) { c.partition.strategy = v; }},
      {"partition.rho", [](auto& c, auto& f, auto& v) {
         c.partition.rho = (v == "auto") ? -1.0 : parse_real(f, v);
       }},
      {"partition.tau", [](auto& c, auto& f, auto& v) { c.partition.tau = parse_real(f, v); }},
      {"run.seeds", [](auto& c, auto& f, auto& v) { c.seeds = parse_seeds(f, v); }},
  };
  return table;
}

}  // namespace

int ExperimentConfig::effective_k() const {
  return std::min(k, data.c_train - 1);
}

Scalar ExperimentConfig::resolved_rho() const {
  if (partition.rho < 0.0) {
    return noise.type == "none" ? 0.0 : noise.rate;
  }
  return partition.rho;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* msg) {
    if (!ok) throw ConfigError(field, msg);
  };
  require(lambda >= 0.0, "train.lambda", "must be >= 0");
  require(alpha > 0.0, "train.alpha", "must be > 0");
  require(beta > 0.0, "train.beta", "must be > 0");
  require(kappa > 0.0, "train.kappa", "must be > 0");
  require(k >= 2, "train.k", "must be >= 2");
  require(gamma >= 0.0, "train.gamma", "must be >= 0");
  require(batch_size >= 1, "train.batch_size", "must be >= 1");
  require(stage1_epochs >= 1, "train.stage1_epochs", "must be >= 1");
  require(stage2_epochs >= 1, "train.stage2_epochs", "must be >= 1");
  require(lr >= 0.0, "train.lr", "must be >= 0");
  require(decay > 0.0 && decay <= 1.0, "train.decay", "must be in (0,1]");
  require(momentum >= 0.0 && momentum < 1.0, "train.momentum",
          "must be in [0,1)");
  require(logit_clamp > 0.0, "train.logit_clamp", "must be > 0");
  require(noise.type == "none" || noise.type == "random" ||
              noise.type == "patterned",
          "noise.type", "must be none, random or patterned");
  require(noise.rate >= 0.0 && noise.rate < 1.0, "noise.rate",
          "must be in [0,1)");
  require(noise.type != "none" || noise.rate == 0.0, "noise.rate",
          "must be 0 when noise.type is none");
  require(data.c_train >= 3, "data.c_train", "must be >= 3");
  require(data.c_test >= 1, "data.c_test", "must be >= 1");
  require(data.samples_per_id >= 2, "data.samples_per_id", "must be >= 2");
  require(data.d_in >= 2, "data.d_in", "must be >= 2");
  require(data.d_emb >= 1, "data.d_emb", "must be >= 1");
  require(data.intra_spread > 0.0, "data.intra_spread", "must be > 0");
  require(partition.strategy == "quantile" || partition.strategy == "threshold",
          "partition.strategy", "must be quantile or threshold");
  require(partition.rho == -1.0 ||
              (partition.rho >= 0.0 && partition.rho < 1.0),
          "partition.rho", "must be in [0,1) or auto");
  require(partition.tau > 0.0 && partition.tau < 1.0, "partition.tau",
          "must be in (0,1)");
  require(!seeds.empty(), "run.seeds", "must not be empty");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no),
                          "malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no),
                        "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string field = section.empty() ? key : section + "." + key;
    const auto it = setters().find(field);
    if (it == setters().end()) {
      throw ConfigError(field, "unknown configuration key");
    }
    it->second(config, field, value);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(assignment, "override must look like section.key=value");
  }
  const std::string field = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto it = setters().find(field);
  if (it == setters().end()) {
    throw ConfigError(field, "unknown configuration key");
  }
  it->second(config, field, value);
  config.validate();
}

namespace {

std::string real_str(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[train]\n";
  out << "lambda = " << real_str(c.lambda) << "\n";
  out << "alpha = " << real_str(c.alpha) << "\n";
  out << "beta = " << real_str(c.beta) << "\n";
  out << "kappa = " << real_str(c.kappa) << "\n";
  out << "k = " << c.k << "\n";
  out << "gamma = " << real_str(c.gamma) << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "stage1_epochs = " << c.stage1_epochs << "\n";
  out << "stage2_epochs = " << c.stage2_epochs << "\n";
  out << "lr = " << real_str(c.lr) << "\n";
  out << "decay = " << real_str(c.decay) << "\n";
  out << "momentum = " << real_str(c.momentum) << "\n";
  out << "logit_clamp = " << real_str(c.logit_clamp) << "\n";
  out << "[noise]\n";
  out << "type = " << c.noise.type << "\n";
  out << "rate = " << real_str(c.noise.rate) << "\n";
  out << "[data]\n";
  out << "c_train = " << c.data.c_train << "\n";
  out << "c_test = " << c.data.c_test << "\n";
  out << "samples_per_id = " << c.data.samples_per_id << "\n";
  out << "d_in = " << c.data.d_in << "\n";
  out << "d_emb = " << c.data.d_emb << "\n";
  out << "intra_spread = " << real_str(c.data.intra_spread) << "\n";
  out << "[partition]\n";
  out << "strategy = " << c.partition.strategy << "\n";
  out << "rho = "
      << (c.partition.rho < 0.0 ? std::string("auto")
                                : real_str(c.partition.rho))
      << "\n";
  out << "tau = " << real_str(c.partition.tau) << "\n";
  out << "[run]\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    if (i) out << ",";
    out << c.seeds[i];
  }
  out << "\n";
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = canonical_text(config);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace care
