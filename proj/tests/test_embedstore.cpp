#include "doctest.h"

#include "knnclean/embedstore.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace knnclean;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("knnclean_test_" + name);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

LabeledDataset random_dataset(std::mt19937_64& gen, bool with_truth) {
  std::uniform_int_distribution<int> size(1, 20);
  const int n = size(gen);
  const int d = size(gen);
  const std::uint32_t classes = std::uniform_int_distribution<std::uint32_t>(2, 7)(gen);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  std::uniform_int_distribution<std::uint32_t> label(0, classes - 1);
  RowMatrix<float> m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(gen);
  LabeledDataset ds;
  ds.embeddings = EmbeddingSet(m);
  ds.num_classes = classes;
  for (int i = 0; i < n; ++i) {
    ds.noisy_labels.push_back(label(gen));
    ds.current_labels.push_back(label(gen));
  }
  if (with_truth) {
    ds.true_labels.emplace();
    for (int i = 0; i < n; ++i) ds.true_labels->push_back(label(gen));
  }
  return ds;
}

void append_u32(std::string& s, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

}  // namespace

TEST_CASE("EMB1 round trip is the identity on random datasets") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ds = random_dataset(gen, trial % 2 == 0);
    const auto path = temp_file("roundtrip.emb");
    save_dataset(ds, path);
    const auto back = load_dataset(path);
    CHECK(back == ds);
    CHECK(back.true_labels.has_value() == ds.true_labels.has_value());
  }
}

TEST_CASE("absent true labels are flagged, not stored") {
  std::mt19937_64 gen(3);
  auto ds = random_dataset(gen, false);
  const std::string bytes = encode_dataset(ds);
  CHECK(bytes[20] == 0);
  CHECK(bytes.size() == 24 + 4 * (ds.size() * ds.dim() + 2 * ds.size()));
  CHECK_FALSE(decode_dataset(bytes).true_labels.has_value());
}

TEST_CASE("two saves of the same dataset are byte identical") {
  std::mt19937_64 gen(5);
  const auto ds = random_dataset(gen, true);
  save_dataset(ds, temp_file("a.emb"));
  save_dataset(ds, temp_file("b.emb"));
  CHECK(read_bytes(temp_file("a.emb")) == read_bytes(temp_file("b.emb")));
}

TEST_CASE("hand-assembled EMB1 bytes decode to the expected dataset") {
  // n=2, d=3, C=2, true labels present.
  std::string bytes = "EMB1";
  append_u32(bytes, 1);
  append_u32(bytes, 2);
  append_u32(bytes, 3);
  append_u32(bytes, 2);
  append_u32(bytes, 1);
  for (std::uint32_t bits : {0x3F800000u, 0x40000000u, 0xBF000000u,   // 1, 2, -0.5
                             0x00000000u, 0x40400000u, 0x3E800000u}) {  // 0, 3, 0.25
    append_u32(bytes, bits);
  }
  for (std::uint32_t y : {1u, 0u, 1u, 1u, 0u, 1u}) append_u32(bytes, y);

  const auto ds = decode_dataset(bytes);
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 3);
  CHECK(ds.num_classes == 2);
  CHECK(ds.embeddings.matrix()(0, 2) == -0.5f);
  CHECK(ds.embeddings.matrix()(1, 1) == 3.0f);
  CHECK(ds.embeddings.matrix()(1, 2) == 0.25f);
  CHECK(ds.noisy_labels == LabelVector{1, 0});
  CHECK(ds.current_labels == LabelVector{1, 1});
  CHECK(*ds.true_labels == LabelVector{0, 1});
  CHECK(encode_dataset(ds) == bytes);
}

TEST_CASE("decode errors name the problem and the byte offset") {
  std::mt19937_64 gen(9);
  auto ds = random_dataset(gen, true);
  const std::string good = encode_dataset(ds);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_dataset(bad), doctest::Contains("bad magic"), FormatError);
  }
  SUBCASE("truncated") {
    CHECK_THROWS_WITH_AS(decode_dataset(good.substr(0, good.size() - 1)),
                         doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("label equal to C") {
    std::string bad = good;
    const std::size_t offset = 24 + 4 * ds.size() * ds.dim();
    bad[offset] = static_cast<char>(ds.num_classes);
    bad[offset + 1] = bad[offset + 2] = bad[offset + 3] = 0;
    const std::string expected = "label out of range at byte offset " + std::to_string(offset);
    CHECK_THROWS_WITH_AS(decode_dataset(bad), doctest::Contains(expected.c_str()), FormatError);
  }
  SUBCASE("non-finite scalar") {
    std::string bad = good;
    const std::uint32_t nan_bits = 0x7FC00000u;
    for (int b = 0; b < 4; ++b) bad[24 + b] = static_cast<char>((nan_bits >> (8 * b)) & 0xff);
    CHECK_THROWS_WITH_AS(decode_dataset(bad), doctest::Contains("non-finite scalar at byte offset 24"),
                         FormatError);
  }
}

TEST_CASE("saving a dataset with a label >= C fails") {
  std::mt19937_64 gen(2);
  auto ds = random_dataset(gen, false);
  ds.noisy_labels[0] = ds.num_classes;
  CHECK_THROWS_WITH(encode_dataset(ds), doctest::Contains("label out of range"));
}

TEST_CASE("synth_gaussian basics") {
  const auto tiny = synth_gaussian(2, 1, 2, 6.0, 7);
  CHECK(tiny.size() == 2);
  CHECK(tiny.current_labels == LabelVector{0, 1});
  CHECK(*tiny.true_labels == tiny.noisy_labels);

  CHECK(synth_gaussian(3, 5, 4, 2.0, 11) == synth_gaussian(3, 5, 4, 2.0, 11));
  CHECK_FALSE(synth_gaussian(3, 5, 4, 2.0, 11) == synth_gaussian(3, 5, 4, 2.0, 12));

  CHECK_THROWS_AS(synth_gaussian(1, 5, 4, 2.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(synth_gaussian(2, 0, 4, 2.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(synth_gaussian(2, 5, 4, 0.0, 1), std::invalid_argument);
}

TEST_CASE("synth_gaussian packs many classes into low dimension") {
  // Ten centers in the plane cannot all sit on a radius-separation circle.
  const auto ds = synth_gaussian(10, 3, 2, 5.0, 4);
  CHECK(ds.size() == 30);
}

TEST_CASE("synth_gaussian clusters are 1-NN self-consistent") {
  const auto ds = synth_gaussian(10, 100, 32, 8.0, 1);
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();
  std::size_t consistent = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dist = oracle::l2(ds.embeddings.row_data(i), ds.embeddings.row_data(j), d);
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    consistent += (*ds.true_labels)[arg] == (*ds.true_labels)[i];
  }
  CHECK(static_cast<double>(consistent) / static_cast<double>(n) >= 0.99);
}

TEST_CASE("split_per_class moves the tail of each class") {
  const auto ds = synth_gaussian(3, 10, 4, 5.0, 2);
  const auto [train, test] = split_per_class(ds, 4);
  CHECK(train.size() == 18);
  CHECK(test.size() == 12);
  CHECK(*test.true_labels == LabelVector{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2});
  // class-major layout: sample 6 is the first held-out sample of class 0
  CHECK(test.embeddings.row(0) == ds.embeddings.row(6));
  CHECK(train.embeddings.row(6) == ds.embeddings.row(10));
}

TEST_CASE("normalize_rows") {
  RowMatrix<double> m(1, 2);
  m << 3.0, 4.0;
  const auto unit = normalize_rows(EmbeddingSetD(m));
  CHECK(unit.matrix()(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(unit.matrix()(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  std::mt19937_64 gen(8);
  std::normal_distribution<double> normal;
  RowMatrix<double> r(5, 8);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = normal(gen);
  const auto once = normalize_rows(EmbeddingSetD(r));
  for (std::size_t i = 0; i < once.size(); ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < once.dim(); ++j) norm += once.row_data(i)[j] * once.row_data(i)[j];
    CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);
  }
  const auto twice = normalize_rows(once);
  CHECK((twice.matrix() - once.matrix()).cwiseAbs().maxCoeff() <= 1e-12);

  // cosine similarity between rows is preserved
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 5; ++b) {
      const double before = r.row(a).dot(r.row(b)) / (r.row(a).norm() * r.row(b).norm());
      CHECK(once.matrix().row(a).dot(once.matrix().row(b)) == doctest::Approx(before).epsilon(1e-12));
    }
  }

  RowMatrix<double> z = RowMatrix<double>::Zero(3, 2);
  z(0, 0) = 1.0;
  z(2, 1) = 1.0;
  CHECK_THROWS_WITH_AS(normalize_rows(EmbeddingSetD(z)), "zero-norm row 1", std::invalid_argument);
}

TEST_CASE("EmbeddingSet rejects non-finite data and empty shapes") {
  RowMatrix<float> m(1, 1);
  m(0, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(EmbeddingSet{m}, NumericError);
  CHECK_THROWS_AS(EmbeddingSet{RowMatrix<float>(0, 3)}, std::invalid_argument);
}
