#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <vector>

#include "fcl/data.hpp"
#include "fcl/error.hpp"

using namespace fcl;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_classes = 5;
  s.samples_per_class = 40;
  s.shape = {8, 8, 1};
  return s;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fcl_test_data";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Dataset with n samples whose labels are given; sample i holds the value i / n.
Dataset labeled(const std::vector<std::uint16_t>& labels, std::uint32_t n_classes) {
  Dataset d;
  d.shape = {1, 1, 1};
  d.n_classes = n_classes;
  d.labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i) d.samples.push_back(static_cast<float>(i) / labels.size());
  return d;
}

std::multiset<std::vector<float>> sample_multiset(std::span<const Dataset> parts) {
  std::multiset<std::vector<float>> out;
  for (const auto& d : parts)
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto s = d.sample(i);
      std::vector<float> row(s.begin(), s.end());
      row.push_back(d.labels[i]);
      out.insert(row);
    }
  return out;
}

}  // namespace

TEST_CASE("synthetic data: counts, balance, range and determinism") {
  auto spec = small_spec();
  spec.samples_per_class = 200;
  const auto d = generate_synthetic(spec, 3);
  CHECK(d.size() == 1000);
  CHECK(d.class_counts() == std::vector<std::size_t>(5, 200));
  CHECK_NOTHROW(d.validate());
  CHECK(generate_synthetic(spec, 3) == d);
  CHECK_FALSE(generate_synthetic(spec, 4) == d);
}

TEST_CASE("jitter 0 makes every sample of a class identical") {
  auto spec = small_spec();
  spec.jitter = 0.0;
  const auto d = generate_synthetic(spec, 1);
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d.labels[i] != d.labels[i - 1]) continue;
    const auto a = d.sample(i), b = d.sample(i - 1);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  // Different classes still differ.
  const auto a = d.sample(0), b = d.sample(spec.samples_per_class);
  CHECK_FALSE(std::equal(a.begin(), a.end(), b.begin()));
}

TEST_CASE("synthetic spec validation") {
  auto spec = small_spec();
  spec.jitter = -1.0;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), ValidationError);
  spec = small_spec();
  spec.n_classes = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), ValidationError);
}

TEST_CASE("partition is a disjoint multiset cover with nonempty devices") {
  const auto d = generate_synthetic(small_spec(), 2);
  for (auto mode : {SkewMode::dominant_class, SkewMode::dirichlet}) {
    PartitionSpec p;
    p.n_devices = 7;
    p.skew_mode = mode;
    p.skew_param = 0.5;
    p.seed = 9;
    const auto idx = partition_indices(d, p);
    REQUIRE(idx.size() == 7);
    std::vector<std::size_t> all;
    for (const auto& v : idx) {
      CHECK_FALSE(v.empty());
      all.insert(all.end(), v.begin(), v.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) expected[i] = i;
    CHECK(all == expected);

    const auto parts = partition(d, p);
    const std::vector<Dataset> whole{d};
    CHECK(sample_multiset(parts) == sample_multiset(whole));
    CHECK(partition(d, p) == parts);
  }
}

TEST_CASE("dominant class fraction 0.8") {
  auto spec = small_spec();
  spec.samples_per_class = 200;
  const auto d = generate_synthetic(spec, 2);
  PartitionSpec p;
  p.n_devices = 10;
  p.skew_mode = SkewMode::dominant_class;
  p.skew_param = 0.8;
  const auto parts = partition(d, p);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto counts = parts[k].class_counts();
    CHECK(counts[k % 5] >= 0.8 * parts[k].size());
  }
}

TEST_CASE("Dirichlet with a huge alpha is close to IID") {
  auto spec = small_spec();
  spec.samples_per_class = 400;
  const auto d = generate_synthetic(spec, 2);
  PartitionSpec p;
  p.n_devices = 4;
  p.skew_mode = SkewMode::dirichlet;
  p.skew_param = 1000.0;
  p.seed = 1;
  for (const auto& part : partition(d, p)) {
    const auto counts = part.class_counts();
    for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / part.size() - 0.2) < 0.05);
  }
}

TEST_CASE("infeasible partitions are rejected") {
  const auto d = labeled({0, 1, 0}, 2);
  PartitionSpec p;
  p.n_devices = 4;
  CHECK_THROWS_AS(partition(d, p), ValidationError);
  p.n_devices = 1;
  CHECK_THROWS_AS(partition(d, p), ValidationError);
}

TEST_CASE("train/test split sizes and disjointness") {
  const auto ten = labeled({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 2);
  const auto [train, test] = split_train_test(ten, 0.6, 4);
  CHECK(train.data.size() == 6);
  CHECK(test.data.size() == 4);
  CHECK(train.data.class_counts() == std::vector<std::size_t>{3, 3});
  std::set<std::size_t> seen(train.source_indices.begin(), train.source_indices.end());
  for (auto i : test.source_indices) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 10);

  const auto again = split_train_test(ten, 0.6, 4);
  CHECK(again.first.source_indices == train.source_indices);
  CHECK(again.second.source_indices == test.source_indices);

  const auto single = labeled(std::vector<std::uint16_t>(10, 1), 3);
  const auto [tr1, te1] = split_train_test(single, 0.6, 1);
  CHECK(tr1.data.size() == 6);
  CHECK(te1.data.size() == 4);

  CHECK_THROWS_AS(split_train_test(labeled({0}, 1), 0.6, 0), ValidationError);
}

TEST_CASE("label subsets: counts, identity at 1.0 and nesting") {
  std::vector<std::uint16_t> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(static_cast<std::uint16_t>(i % 4));
  TrainSplit hundred{labeled(labels, 4), {}};
  for (std::size_t i = 0; i < 100; ++i) hundred.source_indices.push_back(i);
  CHECK(label_subset(hundred, 0.1, 5).data.size() == 10);
  const auto all = label_subset(hundred, 1.0, 5);
  std::vector<std::size_t> sorted = all.source_indices;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == hundred.source_indices);

  std::vector<std::size_t> prev;
  for (double f : {0.1, 0.2, 0.4, 0.8}) {
    auto cur = label_subset(hundred, f, 5).source_indices;
    CHECK(cur.size() == static_cast<std::size_t>(std::ceil(f * 100 - 1e-9)));
    std::sort(cur.begin(), cur.end());
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
  // Stratified: 20 labels over 4 balanced classes.
  CHECK(label_subset(hundred, 0.2, 5).data.class_counts() == std::vector<std::size_t>(4, 5));
  CHECK_THROWS_AS(label_subset(hundred, 0.0, 5), ValidationError);
}

TEST_CASE("FDS1 round trip is bit-exact") {
  const auto d = generate_synthetic(small_spec(), 6);
  const auto path = temp_path("round_trip.fds");
  save_dataset(path, d);
  CHECK(load_dataset(path) == d);
  CHECK(file_bytes(path).size() == 28 + d.samples.size() * 4 + d.size() * 2);
}

TEST_CASE("malformed dataset files raise IoError") {
  const auto d = labeled({0, 1, 1}, 2);
  const auto path = temp_path("bad.fds");
  save_dataset(path, d);
  const auto good = file_bytes(path);

  auto bytes = good;
  bytes[0] = 'X';
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_dataset(path), IoError);

  write_bytes(path, {});
  CHECK_THROWS_AS(load_dataset(path), IoError);

  bytes = good;
  bytes.resize(bytes.size() - 3);
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_dataset(path), IoError);

  bytes = good;
  bytes.push_back(0);
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_dataset(path), IoError);

  bytes = good;
  bytes[bytes.size() - 2] = 7;  // last label out of range
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_dataset(path), IoError);

  CHECK_THROWS_AS(load_dataset(temp_path("missing.fds")), IoError);
}
