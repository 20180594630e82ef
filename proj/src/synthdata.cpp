#include "care/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace care {

namespace fs = std::filesystem;
using nlohmann::json;

bool LabeledSample::operator==(const LabeledSample& other) const {
  return sample_id == other.sample_id && true_label == other.true_label &&
         noisy_label == other.noisy_label &&
         features.size() == other.features.size() &&
         features == other.features;
}

bool Dataset::operator==(const Dataset& other) const {
  return train == other.train && query == other.query &&
         gallery == other.gallery && meta.c_train == other.meta.c_train &&
         meta.c_test == other.meta.c_test &&
         meta.samples_per_id == other.meta.samples_per_id &&
         meta.d_in == other.meta.d_in &&
         meta.intra_spread == other.meta.intra_spread &&
         meta.noise_type == other.meta.noise_type &&
         meta.noise_rate == other.meta.noise_rate &&
         meta.seed == other.meta.seed;
}

namespace {

VecX random_unit_vector(Rng& rng, int dim) {
  VecX v(dim);
  Scalar norm = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

VecX perturbed_sample(Rng& rng, const VecX& center, Scalar spread) {
  VecX v = center;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += spread * rng.normal();
  const Scalar norm = v.norm();
  return norm == 0.0 ? center : VecX(v / norm);
}

}  // namespace

Dataset generate(const GenConfig& config) {
  if (config.c_train < 2 || config.c_test < 1 || config.samples_per_id < 2 ||
      config.d_in < 2 || !(config.intra_spread > 0.0)) {
    throw std::invalid_argument("generate: invalid config");
  }
  Rng rng(mix_seed(config.seed, 0x67656e));
  Dataset ds;
  ds.meta.c_train = config.c_train;
  ds.meta.c_test = config.c_test;
  ds.meta.samples_per_id = config.samples_per_id;
  ds.meta.d_in = config.d_in;
  ds.meta.intra_spread = config.intra_spread;
  ds.meta.seed = config.seed;

  int next_id = 0;
  const int spp = config.samples_per_id;
  const int hard_count = spp / 4;  // last quarter of each identity
  auto make_samples = [&](int label, std::vector<LabeledSample>& dst,
                          const VecX& center) {
    for (int s = 0; s < spp; ++s) {
      const bool hard = s >= spp - hard_count;
      const Scalar spread =
          config.intra_spread * (hard ? 3.0 : 1.0);
      LabeledSample sample;
      sample.sample_id = next_id++;
      sample.features = perturbed_sample(rng, center, spread);
      sample.true_label = label;
      sample.noisy_label = label;
      dst.push_back(std::move(sample));
    }
  };

  for (int c = 0; c < config.c_train; ++c) {
    const VecX center = random_unit_vector(rng, config.d_in);
    make_samples(c, ds.train, center);
  }
  for (int c = 0; c < config.c_test; ++c) {
    const VecX center = random_unit_vector(rng, config.d_in);
    std::vector<LabeledSample> per_id;
    make_samples(c, per_id, center);
    const int query_count = spp / 2;
    for (int s = 0; s < spp; ++s) {
      if (s < query_count) {
        ds.query.push_back(per_id[static_cast<std::size_t>(s)]);
      } else {
        ds.gallery.push_back(per_id[static_cast<std::size_t>(s)]);
      }
    }
  }
  return ds;
}

namespace {

std::vector<std::size_t> pick_corruption_targets(std::size_t n, Scalar rate,
                                                 Rng& rng) {
  const std::size_t count =
      static_cast<std::size_t>(std::floor(rate * static_cast<Scalar>(n)));
  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  rng.shuffle(indices);
  indices.resize(count);
  return indices;
}

}  // namespace

void inject_random_noise(Dataset& dataset, Scalar rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("inject_random_noise: rate out of [0,1)");
  }
  const int c = dataset.meta.c_train;
  Rng rng(mix_seed(seed, 0x726e64));
  for (std::size_t i : pick_corruption_targets(dataset.train.size(), rate,
                                               rng)) {
    LabeledSample& s = dataset.train[i];
    int wrong = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(c - 1)));
    if (wrong >= s.true_label) ++wrong;
    s.noisy_label = wrong;
  }
  dataset.meta.noise_type = "random";
  dataset.meta.noise_rate = rate;
}

void inject_patterned_noise(Dataset& dataset, Scalar rate,
                            const PeerModel& reference_model,
                            std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("inject_patterned_noise: rate out of [0,1)");
  }
  if (dataset.meta.c_train < 2) {
    throw std::invalid_argument("inject_patterned_noise: needs C >= 2");
  }
  Rng rng(mix_seed(seed, 0x706174));
  const MatX features = features_matrix(dataset.train);
  const MatX emb = forward(reference_model, features).embeddings;
  VecX norms(emb.cols());
  for (Eigen::Index i = 0; i < emb.cols(); ++i) norms[i] = emb.col(i).norm();

  for (std::size_t i : pick_corruption_targets(dataset.train.size(), rate,
                                               rng)) {
    const Eigen::Index self = static_cast<Eigen::Index>(i);
    Scalar best_dist = std::numeric_limits<Scalar>::infinity();
    int best_j = -1;
    for (Eigen::Index j = 0; j < emb.cols(); ++j) {
      if (dataset.train[static_cast<std::size_t>(j)].true_label ==
          dataset.train[i].true_label) {
        continue;
      }
      Scalar cosine = 0.0;
      if (norms[self] > 0.0 && norms[j] > 0.0) {
        cosine = emb.col(self).dot(emb.col(j)) / (norms[self] * norms[j]);
      }
      const Scalar dist = 1.0 - cosine;
      const int id_j = dataset.train[static_cast<std::size_t>(j)].sample_id;
      if (dist < best_dist || (dist == best_dist && best_j >= 0 &&
                               id_j < dataset.train[static_cast<std::size_t>(
                                          best_j)].sample_id)) {
        best_dist = dist;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j < 0) {
      throw std::runtime_error(
          "inject_patterned_noise: no cross-identity neighbor");
    }
    dataset.train[i].noisy_label =
        dataset.train[static_cast<std::size_t>(best_j)].true_label;
  }
  dataset.meta.noise_type = "patterned";
  dataset.meta.noise_rate = rate;
}

namespace {

std::string format_real(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_split(const std::vector<LabeledSample>& samples, int d_in,
                 const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " +
                                     path.string());
  out << "sample_id,true_label,noisy_label";
  for (int j = 0; j < d_in; ++j) out << ",f" << j;
  out << "\n";
  for (const auto& s : samples) {
    out << s.sample_id << ',' << s.true_label << ',' << s.noisy_label;
    for (Eigen::Index j = 0; j < s.features.size(); ++j) {
      out << ',' << format_real(s.features[j]);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed");
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::vector<LabeledSample> read_split(const fs::path& path, int expected_d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " +
                                    path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_dataset: empty file " + path.string());
  }
  std::string expected_header = "sample_id,true_label,noisy_label";
  for (int j = 0; j < expected_d; ++j) {
    expected_header += ",f" + std::to_string(j);
  }
  if (line != expected_header) {
    throw std::runtime_error("load_dataset: bad header in " + path.string() +
                             " line 1");
  }
  std::vector<LabeledSample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != 3 + expected_d) {
      throw std::runtime_error("load_dataset: wrong field count in " +
                               path.string() + " line " +
                               std::to_string(line_no));
    }
    LabeledSample s;
    try {
      std::size_t pos = 0;
      s.sample_id = std::stoi(fields[0], &pos);
      if (pos != fields[0].size()) throw std::invalid_argument(fields[0]);
      s.true_label = std::stoi(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument(fields[1]);
      s.noisy_label = std::stoi(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument(fields[2]);
      s.features.resize(expected_d);
      for (int j = 0; j < expected_d; ++j) {
        const std::string& f = fields[static_cast<std::size_t>(3 + j)];
        s.features[j] = std::stod(f, &pos);
        if (pos != f.size()) throw std::invalid_argument(f);
      }
    } catch (const std::exception&) {
      throw std::runtime_error("load_dataset: bad value in " + path.string() +
                               " line " + std::to_string(line_no));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  write_split(dataset.train, dataset.meta.d_in, root / "train.csv");
  write_split(dataset.query, dataset.meta.d_in, root / "query.csv");
  write_split(dataset.gallery, dataset.meta.d_in, root / "gallery.csv");
  json meta = {{"c_train", dataset.meta.c_train},
               {"c_test", dataset.meta.c_test},
               {"samples_per_id", dataset.meta.samples_per_id},
               {"d_in", dataset.meta.d_in},
               {"intra_spread", dataset.meta.intra_spread},
               {"noise_type", dataset.meta.noise_type},
               {"noise_rate", dataset.meta.noise_rate},
               {"seed", dataset.meta.seed}};
  std::ofstream out(root / "meta.json");
  if (!out) throw std::runtime_error("save_dataset: cannot write meta.json");
  out << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream meta_in(root / "meta.json");
  if (!meta_in) {
    throw std::runtime_error("load_dataset: missing meta.json in " + dir);
  }
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: bad meta.json: " +
                             std::string(e.what()));
  }
  Dataset ds;
  ds.meta.c_train = meta.at("c_train").get<int>();
  ds.meta.c_test = meta.at("c_test").get<int>();
  ds.meta.samples_per_id = meta.at("samples_per_id").get<int>();
  ds.meta.d_in = meta.at("d_in").get<int>();
  ds.meta.intra_spread = meta.at("intra_spread").get<Scalar>();
  ds.meta.noise_type = meta.at("noise_type").get<std::string>();
  ds.meta.noise_rate = meta.at("noise_rate").get<Scalar>();
  ds.meta.seed = meta.at("seed").get<std::uint64_t>();
  ds.train = read_split(root / "train.csv", ds.meta.d_in);
  ds.query = read_split(root / "query.csv", ds.meta.d_in);
  ds.gallery = read_split(root / "gallery.csv", ds.meta.d_in);
  return ds;
}

MatX features_matrix(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("features_matrix: empty split");
  }
  MatX m(samples[0].features.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = samples[i].features;
  }
  return m;
}

std::vector<int> true_labels(const std::vector<LabeledSample>& samples) {
  std::vector<int> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.true_label);
  return v;
}

std::vector<int> noisy_labels(const std::vector<LabeledSample>& samples) {
  std::vector<int> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.noisy_label);
  return v;
}

std::vector<bool> clean_flags(const std::vector<LabeledSample>& samples) {
  std::vector<bool> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.noisy_label == s.true_label);
  return v;
}

}  // namespace care
