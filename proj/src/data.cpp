#include "agcd/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace agcd {

namespace {

using json = nlohmann::json;

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw DataError("short write to " + path.string());
}

bool contains_sorted(const IndexList& list, Index i) {
  return std::binary_search(list.begin(), list.end(), i);
}

}  // namespace

FeatureDataset::FeatureDataset(Matrix features, LabelList labels,
                               std::vector<std::string> class_names, std::size_t num_old)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)),
      num_old_(num_old) {
  if (features_.rows() == 0 || features_.cols() == 0) throw DataError("empty feature matrix");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw DataError("feature rows and label count differ");
  }
  if (class_names_.empty()) throw DataError("dataset has no classes");
  if (num_old_ > class_names_.size()) throw DataError("num_old exceeds class count");
  if (!features_.allFinite()) throw DataError("features contain NaN or Inf");
  for (Label y : labels_) {
    if (y >= class_names_.size()) {
      throw DataError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(class_names_.size()) + " classes");
    }
  }
}

Matrix FeatureDataset::rows(std::span<const Index> indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), features_.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(indices[r]));
  }
  return out;
}

LabelList FeatureDataset::labels_of(std::span<const Index> indices) const {
  LabelList out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(labels_.at(i));
  return out;
}

IndexList PoolState::all_queried() const {
  IndexList out;
  for (const auto& q : queried_per_round) out.insert(out.end(), q.begin(), q.end());
  std::sort(out.begin(), out.end());
  return out;
}

IndexList PoolState::initial_labeled() const {
  const IndexList queried = all_queried();
  IndexList out;
  std::set_difference(labeled.begin(), labeled.end(), queried.begin(), queried.end(),
                      std::back_inserter(out));
  return out;
}

Label Oracle::query(Index i) const {
  if (i >= labels_->size()) throw Error("invalid query index");
  return (*labels_)[i];
}

PoolState make_split(const FeatureDataset& dataset, const SplitConfig& cfg,
                     std::span<const Index> train_indices) {
  if (cfg.old_class_count == 0 || cfg.old_class_count > dataset.num_classes()) {
    throw ConfigError("old class count must be in [1, num_classes]");
  }
  if (!(cfg.label_ratio > 0.0 && cfg.label_ratio <= 1.0)) {
    throw ConfigError("label ratio must be in (0, 1]");
  }
  IndexList train;
  if (train_indices.empty()) {
    train.resize(dataset.size());
    for (Index i = 0; i < train.size(); ++i) train[i] = i;
  } else {
    train.assign(train_indices.begin(), train_indices.end());
    std::sort(train.begin(), train.end());
  }

  std::vector<IndexList> by_class(cfg.old_class_count);
  for (Index i : train) {
    const Label y = dataset.labels().at(i);
    if (y < cfg.old_class_count) by_class[y].push_back(i);
  }

  std::mt19937_64 rng(cfg.seed);
  PoolState pool;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    const auto take = static_cast<std::size_t>(
        std::floor(cfg.label_ratio * static_cast<double>(members.size())));
    if (take == 0) {
      throw DataError("class too small for ratio (class " + std::to_string(c) + ")");
    }
    std::shuffle(members.begin(), members.end(), rng);
    pool.labeled.insert(pool.labeled.end(), members.begin(),
                        members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(pool.labeled.begin(), pool.labeled.end());
  std::set_difference(train.begin(), train.end(), pool.labeled.begin(), pool.labeled.end(),
                      std::back_inserter(pool.unlabeled));
  return pool;
}

PoolState query_oracle(const PoolState& pool, const Oracle& oracle, std::span<const Index> picks) {
  IndexList sorted(picks.begin(), picks.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error("invalid query index (duplicate pick)");
  }
  for (Index i : sorted) {
    if (!contains_sorted(pool.unlabeled, i)) {
      throw Error("invalid query index " + std::to_string(i));
    }
    oracle.query(i);
  }
  PoolState next;
  std::set_union(pool.labeled.begin(), pool.labeled.end(), sorted.begin(), sorted.end(),
                 std::back_inserter(next.labeled));
  std::set_difference(pool.unlabeled.begin(), pool.unlabeled.end(), sorted.begin(), sorted.end(),
                      std::back_inserter(next.unlabeled));
  next.queried_per_round = pool.queried_per_round;
  next.queried_per_round.push_back(std::move(sorted));
  next.round = pool.round + 1;
  return next;
}

void check_pool(const PoolState& pool, std::span<const Index> train_indices) {
  IndexList train(train_indices.begin(), train_indices.end());
  std::sort(train.begin(), train.end());
  IndexList overlap;
  std::set_intersection(pool.labeled.begin(), pool.labeled.end(), pool.unlabeled.begin(),
                        pool.unlabeled.end(), std::back_inserter(overlap));
  if (!overlap.empty()) throw Error("pool invariant: labeled and unlabeled overlap");
  IndexList all;
  std::set_union(pool.labeled.begin(), pool.labeled.end(), pool.unlabeled.begin(),
                 pool.unlabeled.end(), std::back_inserter(all));
  if (all != train) throw Error("pool invariant: labeled and unlabeled do not cover training set");
  if (pool.round != pool.queried_per_round.size()) {
    throw Error("pool invariant: round differs from number of queried sets");
  }
  IndexList seen;
  for (const auto& q : pool.queried_per_round) {
    for (Index i : q) {
      if (!contains_sorted(pool.labeled, i)) throw Error("pool invariant: queried not labeled");
    }
    seen.insert(seen.end(), q.begin(), q.end());
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw Error("pool invariant: queried sets overlap");
  }
}

FeatureDataset generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t k = spec.num_classes();
  if (k < 2 || spec.per_class < 1 || spec.dim < 2) {
    throw ConfigError("synthetic data needs K >= 2, n >= 1, D >= 2");
  }
  if (spec.num_old < 1) throw ConfigError("synthetic data needs at least one old class");
  if (!(spec.separation >= 0.0) || !std::isfinite(spec.separation)) {
    throw ConfigError("separation must be finite and non-negative");
  }
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix means(static_cast<Eigen::Index>(k), dim);
  if (k <= spec.dim) {
    Eigen::MatrixXd gaussian(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) gaussian(r, c) = normal(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian).householderQ();
    for (std::size_t c = 0; c < k; ++c) {
      means.row(static_cast<Eigen::Index>(c)) =
          spec.separation * q.col(static_cast<Eigen::Index>(c)).transpose();
    }
  } else {
    std::cerr << "warning: " << k << " classes exceed dimension " << spec.dim
              << "; class means are random unit directions, pairwise separation not guaranteed\n";
    for (std::size_t c = 0; c < k; ++c) {
      Vector v(dim);
      for (Eigen::Index j = 0; j < dim; ++j) v(j) = normal(rng);
      means.row(static_cast<Eigen::Index>(c)) = spec.separation * v.normalized().transpose();
    }
  }

  const std::size_t n = k * spec.per_class;
  Matrix features(static_cast<Eigen::Index>(n), dim);
  LabelList labels(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t s = 0; s < spec.per_class; ++s) {
      const std::size_t row = c * spec.per_class + s;
      Vector x(dim);
      for (Eigen::Index j = 0; j < dim; ++j) x(j) = normal(rng);
      x += means.row(static_cast<Eigen::Index>(c)).transpose();
      const double norm = x.norm();
      if (norm > 0.0) x /= norm;
      for (Eigen::Index j = 0; j < dim; ++j) {
        features(static_cast<Eigen::Index>(row), j) = static_cast<double>(static_cast<float>(x(j)));
      }
      labels[row] = static_cast<Label>(c);
    }
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < k; ++c) {
    names.push_back((c < spec.num_old ? "old_" : "new_") + std::to_string(c));
  }
  return FeatureDataset(std::move(features), std::move(labels), std::move(names), spec.num_old);
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream stream(text);
  for (std::string item; std::getline(stream, item, ',');) parts.push_back(item);
  if (parts.size() != 5) throw ConfigError("--synthetic expects K_OLD,K_NEW,PER_CLASS,DIM,SEP");
  SyntheticSpec spec;
  try {
    spec.num_old = std::stoul(parts[0]);
    spec.num_new = std::stoul(parts[1]);
    spec.per_class = std::stoul(parts[2]);
    spec.dim = std::stoul(parts[3]);
    spec.separation = std::stod(parts[4]);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse --synthetic value '" + text + "'");
  }
  return spec;
}

FeatureDataset load_feature_dir(const std::filesystem::path& dir) {
  json meta;
  try {
    const auto raw = read_file(dir / "meta.json");
    meta = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt feature file: meta.json: ") + e.what());
  }
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t num_old = 0;
  std::vector<std::string> names;
  try {
    if (meta.at("version").get<int>() != 1) throw DataError("unsupported feature dir version");
    if (meta.at("dtype").get<std::string>() != "f32le") throw DataError("unsupported dtype");
    n = meta.at("num_samples").get<std::size_t>();
    d = meta.at("dim").get<std::size_t>();
    k = meta.at("num_classes").get<std::size_t>();
    num_old = meta.at("num_old").get<std::size_t>();
    names = meta.at("class_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt feature file: meta.json: ") + e.what());
  }
  if (names.size() != k) throw DataError("corrupt feature file: class_names length != num_classes");

  const auto feature_bytes = read_file(dir / "features.bin");
  const auto label_bytes = read_file(dir / "labels.bin");
  if (feature_bytes.size() != n * d * sizeof(float) || label_bytes.size() != n * sizeof(std::uint32_t)) {
    throw DataError("corrupt feature file: binary sizes do not match meta.json");
  }
  Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n * d; ++i) {
    float v;
    std::memcpy(&v, feature_bytes.data() + i * sizeof(float), sizeof(float));
    v = to_little_endian(v);
    if (!std::isfinite(v)) throw DataError("corrupt feature file: non-finite feature value");
    features(static_cast<Eigen::Index>(i / d), static_cast<Eigen::Index>(i % d)) = v;
  }
  LabelList labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t v;
    std::memcpy(&v, label_bytes.data() + i * sizeof(v), sizeof(v));
    labels[i] = to_little_endian(v);
  }
  return FeatureDataset(std::move(features), std::move(labels), std::move(names), num_old);
}

void save_feature_dir(const FeatureDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json meta = {{"version", 1},
                     {"num_samples", dataset.size()},
                     {"dim", dataset.dim()},
                     {"num_classes", dataset.num_classes()},
                     {"num_old", dataset.num_old()},
                     {"class_names", dataset.class_names()},
                     {"dtype", "f32le"}};
  const std::string text = meta.dump(1) + "\n";
  write_file(dir / "meta.json", text.data(), text.size());

  const auto& x = dataset.features();
  std::vector<float> floats;
  floats.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      floats.push_back(to_little_endian(static_cast<float>(x(r, c))));
  write_file(dir / "features.bin", floats.data(), floats.size() * sizeof(float));

  std::vector<std::uint32_t> labels;
  labels.reserve(dataset.size());
  for (Label y : dataset.labels()) labels.push_back(to_little_endian(y));
  write_file(dir / "labels.bin", labels.data(), labels.size() * sizeof(std::uint32_t));
}

}  // namespace agcd
