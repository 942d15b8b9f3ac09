#include "doctest.h"

#include "knnclean/noise.hpp"
#include "oracles.hpp"

#include <random>

using namespace knnclean;

namespace {

LabelVector uniform_labels(std::size_t n, std::uint32_t classes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, classes - 1);
  LabelVector out(n);
  for (auto& y : out) y = pick(gen);
  return out;
}

}  // namespace

TEST_CASE("symmetric noise boundaries") {
  const auto labels = uniform_labels(500, 2, 1);
  CHECK(inject_symmetric(labels, 2, 0.0, 4) == labels);
  const auto flipped = inject_symmetric(labels, 2, 1.0, 4);
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(flipped[i] == 1 - labels[i]);
}

TEST_CASE("symmetric noise rate and target uniformity") {
  const auto labels = uniform_labels(10000, 10, 2);
  const auto noisy = inject_symmetric(labels, 10, 0.6, 3);
  std::size_t flips = 0;
  // histogram of (target - source) mod C over flipped positions, offsets 1..9
  std::vector<std::size_t> offsets(9, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (noisy[i] != labels[i]) {
      ++flips;
      ++offsets[(noisy[i] + 10 - labels[i]) % 10 - 1];
    }
  }
  CHECK(std::abs(static_cast<double>(flips) / 10000.0 - 0.6) <= 0.02);
  CHECK(oracle::uniform_chi_square_p(offsets) > 0.001);
}

TEST_CASE("symmetric noise never keeps the class at a flipped position and is pure") {
  const auto labels = uniform_labels(2000, 5, 7);
  const LabelVector copy = labels;
  const auto a = inject_symmetric(labels, 5, 0.5, 99);
  const auto b = inject_symmetric(labels, 5, 0.5, 99);
  CHECK(a == b);
  CHECK(labels == copy);
  CHECK_FALSE(inject_symmetric(labels, 5, 0.5, 100) == a);
}

TEST_CASE("symmetric error rate tracks the level within three standard errors") {
  const std::size_t n = 20000;
  const auto labels = uniform_labels(n, 10, 5);
  for (double level : {0.1, 0.4, 0.8}) {
    const double rate = label_error_rate(inject_symmetric(labels, 10, level, 21), labels);
    CHECK(std::abs(rate - level) <= 3.0 * std::sqrt(level * (1.0 - level) / n));
  }
}

TEST_CASE("asymmetric noise with the MNIST map") {
  LabelVector labels;
  for (int rep = 0; rep < 20; ++rep) {
    for (Label c = 0; c < 10; ++c) labels.push_back(c);
  }
  const auto map = builtin_transitions("mnist");
  CHECK(inject_asymmetric(labels, map, 0.0, 1) == labels);

  const auto out = inject_asymmetric(labels, map, 1.0, 1);
  const std::map<Label, Label> expected = {{0, 0}, {1, 1}, {2, 7}, {3, 8}, {4, 4},
                                           {5, 6}, {6, 5}, {7, 1}, {8, 8}, {9, 9}};
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(out[i] == expected.at(labels[i]));
}

TEST_CASE("asymmetric noise rate on a single source class") {
  const LabelVector labels(10000, 5);
  const auto out = inject_asymmetric(labels, {{5, 6}}, 0.4, 11);
  std::size_t moved = 0;
  for (auto y : out) {
    CHECK((y == 5 || y == 6));
    moved += y == 6;
  }
  CHECK(std::abs(static_cast<double>(moved) / 10000.0 - 0.4) <= 0.02);
}

TEST_CASE("asymmetric noise touches only source classes") {
  const auto labels = uniform_labels(3000, 10, 12);
  const auto map = builtin_transitions("cifar10");
  const auto out = inject_asymmetric(labels, map, 0.7, 5);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!map.contains(labels[i])) CHECK(out[i] == labels[i]);
  }
}

TEST_CASE("transition maps") {
  const auto mnist = builtin_transitions("mnist");
  CHECK(mnist.size() == 5);
  CHECK(mnist.at(3) == 8);
  const auto cifar = builtin_transitions("cifar10");
  CHECK(cifar.size() == 5);
  CHECK(cifar.at(9) == 1);
  CHECK(cifar.at(3) == 5);
  CHECK(cifar.at(5) == 3);
  CHECK_THROWS_WITH_AS(builtin_transitions("imagenet"), doctest::Contains("unknown transition set"),
                       ConfigError);

  CHECK(parse_transitions("7:1, 2:7") == TransitionMap{{7, 1}, {2, 7}});
  CHECK(parse_transitions("cifar10") == cifar);
  CHECK_THROWS_AS(parse_transitions("3:3"), ConfigError);
  CHECK_THROWS_AS(parse_transitions("3:x"), ConfigError);
  CHECK_THROWS_AS(inject_asymmetric(LabelVector{1}, {{4, 4}}, 0.5, 1), ConfigError);
}

TEST_CASE("noise level validation") {
  CHECK_THROWS_WITH_AS(inject_symmetric(LabelVector{0, 1}, 2, 1.2, 0), doctest::Contains("level out of range"),
                       ConfigError);
  NoiseSpec spec;
  spec.kind = NoiseKind::asymmetric;
  spec.level = 0.3;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.transitions = {{1, 2}};
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("label_error_rate") {
  CHECK(label_error_rate(LabelVector{1, 2, 3}, LabelVector{1, 2, 3}) == 0.0);
  CHECK(label_error_rate(LabelVector{1, 2}, LabelVector{0, 0}) == 1.0);
  CHECK(label_error_rate(LabelVector{0, 1, 2, 3}, LabelVector{0, 1, 0, 0}) == 0.5);
  CHECK_THROWS_AS(label_error_rate(LabelVector{1}, LabelVector{1, 2}), std::invalid_argument);
}
