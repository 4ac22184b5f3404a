#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "agcd/data.hpp"

using namespace agcd;
namespace fs = std::filesystem;

namespace {

FeatureDataset blocks(std::size_t classes, std::size_t per_class, std::size_t num_old, std::size_t dim = 2) {
  Matrix x(static_cast<Eigen::Index>(classes * per_class), static_cast<Eigen::Index>(dim));
  LabelList y;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      x.row(static_cast<Eigen::Index>(y.size())).setConstant(static_cast<double>(c));
      y.push_back(static_cast<Label>(c));
    }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  return FeatureDataset(x, y, names, num_old);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "agcd_test_data" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Nearest centroid accuracy, centroids fit on even rows and scored on odd rows.
double held_out_centroid_accuracy(const FeatureDataset& ds) {
  const auto k = static_cast<Eigen::Index>(ds.num_classes());
  Matrix centroids = Matrix::Zero(k, static_cast<Eigen::Index>(ds.dim()));
  Vector counts = Vector::Zero(k);
  for (std::size_t i = 0; i < ds.size(); i += 2) {
    centroids.row(ds.labels()[i]) += ds.features().row(static_cast<Eigen::Index>(i));
    counts(ds.labels()[i]) += 1.0;
  }
  for (Eigen::Index c = 0; c < k; ++c) centroids.row(c) /= counts(c);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 1; i < ds.size(); i += 2) {
    Eigen::Index best = 0;
    (centroids.rowwise() - ds.features().row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
    hits += static_cast<Label>(best) == ds.labels()[i];
    ++total;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("dataset validation") {
  CHECK_THROWS_AS(FeatureDataset(Matrix::Zero(2, 2), LabelList{0, 2}, {"a", "b"}, 1), DataError);
  Matrix nan = Matrix::Zero(2, 2);
  nan(0, 0) = std::nan("");
  CHECK_THROWS_AS(FeatureDataset(nan, LabelList{0, 1}, {"a", "b"}, 1), DataError);
  CHECK_THROWS_AS(FeatureDataset(Matrix::Zero(2, 2), LabelList{0, 1}, {"a", "b"}, 3), DataError);
}

TEST_CASE("make_split sizes") {
  const auto ds = blocks(4, 100, 2);
  const PoolState pool = make_split(ds, {2, 0.2, 1});
  CHECK(pool.labeled.size() == 40);
  CHECK(pool.unlabeled.size() == 360);
  for (Index i : pool.labeled) CHECK(ds.labels()[i] < 2);
  IndexList all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  CHECK_NOTHROW(check_pool(pool, all));
}

TEST_CASE("make_split at dataset scale") {
  const auto ds = blocks(100, 500, 50, 1);
  const PoolState pool = make_split(ds, {50, 0.2, 3});
  CHECK(pool.labeled.size() == 5000);
  CHECK(pool.unlabeled.size() == 45000);
}

TEST_CASE("make_split boundaries and errors") {
  const auto ds = blocks(3, 10, 3);
  CHECK(make_split(ds, {3, 1.0, 0}).unlabeled.empty());
  CHECK_THROWS_WITH_AS(make_split(ds, {3, 0.05, 0}), doctest::Contains("class too small for ratio"), DataError);
  // Same seed, same split; different seed, (almost surely) a different one.
  const auto big = blocks(2, 100, 1);
  CHECK(make_split(big, {1, 0.3, 9}).labeled == make_split(big, {1, 0.3, 9}).labeled);
  CHECK(make_split(big, {1, 0.3, 9}).labeled != make_split(big, {1, 0.3, 10}).labeled);
}

TEST_CASE("make_split restricted to a training subset") {
  const auto ds = blocks(2, 10, 1);
  IndexList train;
  for (Index i = 0; i < ds.size(); i += 2) train.push_back(i);
  const PoolState pool = make_split(ds, {1, 0.4, 0}, train);
  CHECK(pool.labeled.size() == 2);
  CHECK(pool.labeled.size() + pool.unlabeled.size() == train.size());
  CHECK_NOTHROW(check_pool(pool, train));
}

TEST_CASE("query_oracle moves picks and records rounds") {
  const auto ds = blocks(2, 10, 1);
  IndexList all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const Oracle oracle(ds.labels());
  const PoolState p0 = make_split(ds, {1, 0.2, 0});

  const PoolState same = query_oracle(p0, oracle, IndexList{});
  CHECK(same.labeled == p0.labeled);
  CHECK(same.unlabeled == p0.unlabeled);
  CHECK(same.round == 1);

  const Index a = p0.unlabeled[0], b = p0.unlabeled[3], c = p0.unlabeled[5];
  const PoolState p1 = query_oracle(p0, oracle, IndexList{a});
  CHECK(std::binary_search(p1.labeled.begin(), p1.labeled.end(), a));
  CHECK_FALSE(std::binary_search(p1.unlabeled.begin(), p1.unlabeled.end(), a));
  const PoolState p2 = query_oracle(p1, oracle, IndexList{c, b});
  CHECK(p2.queried_per_round.size() == 2);
  CHECK(p2.all_queried() == IndexList{a, b, c});
  CHECK(p2.initial_labeled() == p0.labeled);
  CHECK_NOTHROW(check_pool(p2, all));

  CHECK_THROWS_WITH(query_oracle(p2, oracle, IndexList{a}), doctest::Contains("invalid query index"));
  CHECK_THROWS_WITH(query_oracle(p2, oracle, IndexList{p2.unlabeled[0], p2.unlabeled[0]}),
                    doctest::Contains("invalid query index"));
  CHECK_THROWS_WITH(oracle.query(ds.size()), doctest::Contains("invalid query index"));
  CHECK(oracle.query(a) == ds.labels()[a]);
}

TEST_CASE("synthetic data: separated classes are trivially separable") {
  const auto ds = generate_synthetic({1, 1, 50, 32, 10.0, 5});
  CHECK(ds.size() == 100);
  CHECK(held_out_centroid_accuracy(ds) == 1.0);
  for (Eigen::Index r = 0; r < ds.features().rows(); ++r)
    CHECK(std::fabs(ds.features().row(r).norm() - 1.0) <= 1e-6);
}

TEST_CASE("synthetic data: zero separation is chance level") {
  double mean = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) mean += held_out_centroid_accuracy(generate_synthetic({1, 1, 50, 32, 0.0, static_cast<std::uint64_t>(s)}));
  mean /= seeds;
  CHECK(std::fabs(mean - 0.5) <= 0.1);
}

TEST_CASE("synthetic data is deterministic and float-representable") {
  const SyntheticSpec spec{3, 2, 20, 8, 4.0, 11};
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.features() == b.features());
  CHECK(a.labels() == b.labels());
  for (Eigen::Index i = 0; i < a.features().size(); ++i) {
    const double v = a.features().data()[i];
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
  // More classes than dimensions still works.
  CHECK(generate_synthetic({4, 4, 5, 4, 3.0, 0}).num_classes() == 8);
}

TEST_CASE("parse_synthetic_spec") {
  const auto s = parse_synthetic_spec("5,5,200,32,2.5");
  CHECK(s.num_old == 5);
  CHECK(s.num_new == 5);
  CHECK(s.per_class == 200);
  CHECK(s.dim == 32);
  CHECK(s.separation == 2.5);
  CHECK_THROWS_AS(parse_synthetic_spec("5,5,200"), ConfigError);
  CHECK_THROWS_AS(parse_synthetic_spec("a,5,200,32,1"), ConfigError);
}

TEST_CASE("feature dir round trip is byte identical") {
  const auto ds = generate_synthetic({2, 1, 7, 5, 3.0, 2});
  const auto d1 = fresh_dir("rt1");
  const auto d2 = fresh_dir("rt2");
  save_feature_dir(ds, d1);
  const FeatureDataset back = load_feature_dir(d1);
  CHECK(back.features() == ds.features());
  CHECK(back.labels() == ds.labels());
  CHECK(back.num_old() == 2);
  save_feature_dir(back, d2);
  for (const char* f : {"features.bin", "labels.bin", "meta.json"}) CHECK(slurp(d1 / f) == slurp(d2 / f));
  CHECK(fs::file_size(d1 / "features.bin") == 21 * 5 * 4);
}

TEST_CASE("feature dir corruption is detected") {
  const auto ds = generate_synthetic({2, 1, 4, 3, 3.0, 2});
  SUBCASE("truncated features") {
    const auto d = fresh_dir("trunc");
    save_feature_dir(ds, d);
    fs::resize_file(d / "features.bin", fs::file_size(d / "features.bin") - 4);
    CHECK_THROWS_WITH_AS(load_feature_dir(d), doctest::Contains("corrupt feature file"), DataError);
  }
  SUBCASE("label out of range") {
    const auto d = fresh_dir("badlabel");
    save_feature_dir(ds, d);
    std::fstream f(d / "labels.bin", std::ios::in | std::ios::out | std::ios::binary);
    const unsigned char big[4] = {9, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(big), 4);
    f.close();
    CHECK_THROWS_AS(load_feature_dir(d), DataError);
  }
  SUBCASE("NaN feature") {
    const auto d = fresh_dir("nan");
    save_feature_dir(ds, d);
    std::fstream f(d / "features.bin", std::ios::in | std::ios::out | std::ios::binary);
    const unsigned char qnan[4] = {0x00, 0x00, 0xc0, 0x7f};
    f.write(reinterpret_cast<const char*>(qnan), 4);
    f.close();
    CHECK_THROWS_AS(load_feature_dir(d), DataError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_feature_dir(fs::temp_directory_path() / "agcd_test_data" / "nope"), DataError);
  }
}
