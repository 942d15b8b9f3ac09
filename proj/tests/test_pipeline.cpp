#include "doctest.h"

#include "knnclean/pipeline.hpp"
#include "knnclean/report.hpp"

#include <random>
#include <sstream>

using namespace knnclean;

namespace {

PipelineConfig small_config() {
  PipelineConfig config;
  config.episodes = 2;
  config.epochs_per_episode = 15;
  config.k = 10;
  config.classifier.hidden = {24, 12};
  config.optimizer.learning_rate = 1e-2;
  config.optimizer.batch_size = 16;
  config.noise = NoiseSpec{NoiseKind::symmetric, 0.4, {}, 3};
  config.seed = 7;
  return config;
}

const LabeledDataset& clusters() {
  static const LabeledDataset ds = synth_gaussian(3, 50, 8, 8.0, 31);
  return ds;
}

std::string csv_of(const std::vector<EpisodeReport>& reports) {
  std::ostringstream os;
  write_episode_csv(os, reports);
  return os.str();
}

}  // namespace

TEST_CASE("schedules") {
  PipelineConfig config;
  const auto gammas = gamma_schedule(config);
  REQUIRE(gammas.size() == 10);
  CHECK(gammas[0] == 1.0);
  for (std::size_t m = 1; m < gammas.size(); ++m) {
    CHECK(gammas[m] < gammas[m - 1]);
    CHECK(gammas[m] == doctest::Approx(std::pow(1.2, -static_cast<double>(m))).epsilon(1e-12));
  }
  CHECK(m_percent_schedule(config) == std::vector<double>{20, 30, 40, 50, 60, 70, 80, 90, 100, 100});

  config.selknn_m_init_percent = 95;
  config.episodes = 3;
  CHECK(m_percent_schedule(config) == std::vector<double>{95, 100, 100});
}

TEST_CASE("label_recovery_rate") {
  CHECK(label_recovery_rate(LabelVector{0, 1, 2, 0}, LabelVector{0, 1, 2, 1}) == 0.75);
  LabeledDataset ds = clusters();
  CHECK(label_recovery_rate(ds) == 1.0);
  ds.true_labels.reset();
  CHECK_THROWS_AS(label_recovery_rate(ds), std::invalid_argument);
}

TEST_CASE("prepare_training_set injects noise into noisy and current labels") {
  const auto config = small_config();
  const auto prepared = prepare_training_set(config, clusters());
  CHECK(prepared.current_labels == prepared.noisy_labels);
  CHECK(label_error_rate(prepared.noisy_labels, *prepared.true_labels) ==
        doctest::Approx(0.4).epsilon(0.3));
  auto clean = config;
  clean.noise.reset();
  CHECK(prepare_training_set(clean, clusters()).noisy_labels == *clusters().true_labels);
}

TEST_CASE("run on noisy clusters") {
  const auto config = small_config();
  const auto [train, test] = split_per_class(clusters(), 10);
  const auto result = run(config, train, test);

  REQUIRE(result.reports.size() == 2);
  const auto& first = result.reports[0];
  CHECK(first.episode == 1);
  CHECK(first.gamma == 1.0);
  CHECK(first.m_percent == 20.0);
  CHECK(result.reports[1].m_percent == 30.0);
  CHECK(result.reports[1].gamma == doctest::Approx(1.0 / 1.2));
  CHECK(first.labels_changed > 0);
  REQUIRE(first.label_recovery_rate.has_value());
  CHECK(*first.label_recovery_rate + *first.label_error_rate == doctest::Approx(1.0));
  CHECK(first.test_accuracy_head.has_value());
  CHECK(first.test_accuracy_deep_knn.has_value());

  const double noisy_recovery = label_recovery_rate(result.corrected.noisy_labels, *train.true_labels);
  CHECK(*result.final_metrics.label_recovery_rate > noisy_recovery);
  CHECK(*result.final_metrics.label_recovery_rate >= 0.9);
  CHECK(result.corrected.noisy_labels == prepare_training_set(config, train).noisy_labels);
  CHECK(*result.final_metrics.test_accuracy_deep_knn >= 0.9);
}

TEST_CASE("true labels are never read by the correction") {
  const auto config = small_config();
  LabeledDataset scrambled = clusters();
  std::mt19937_64 gen(1);
  for (auto& y : *scrambled.true_labels) y = gen() % 3;
  LabeledDataset hidden = clusters();
  hidden.true_labels.reset();

  const auto a = run(config, clusters());
  const auto b = run(config, scrambled);
  const auto c = run(config, hidden);
  CHECK(a.corrected.current_labels == b.corrected.current_labels);
  CHECK(a.corrected.current_labels == c.corrected.current_labels);
  CHECK(a.model == b.model);
  CHECK_FALSE(c.reports[0].label_recovery_rate.has_value());
}

TEST_CASE("identical runs produce identical labels and CSV bytes") {
  const auto config = small_config();
  const auto a = run(config, clusters());
  const auto b = run(config, clusters());
  CHECK(a.corrected == b.corrected);
  CHECK(csv_of(a.reports) == csv_of(b.reports));
}

TEST_CASE("row permutation with stable keys permutes the result") {
  auto config = small_config();
  config.noise.reset();
  LabeledDataset noisy = prepare_training_set(small_config(), clusters());
  const std::size_t n = noisy.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  const std::vector<std::uint64_t> keys(perm.begin(), perm.end());
  std::vector<std::uint64_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::uint64_t{0});

  const auto base = run(config, noisy, std::nullopt, {identity});
  const auto permuted = run(config, noisy.subset(perm), std::nullopt, {keys});
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(permuted.corrected.current_labels[i] == base.corrected.current_labels[perm[i]]);
  }
}

TEST_CASE("SelKNN at 100 percent is IterKNN") {
  auto sel = small_config();
  sel.selknn_m_init_percent = 100;
  auto iter = small_config();
  iter.correction = Correction::iterknn;
  const auto a = run(sel, clusters());
  const auto b = run(iter, clusters());
  CHECK(a.corrected.current_labels == b.corrected.current_labels);
  CHECK(a.reports[0].m_percent == 100.0);
  CHECK_FALSE(b.reports[0].m_percent.has_value());
}

TEST_CASE("oversized k is clamped rather than rejected") {
  auto config = small_config();
  config.k = 1000;
  config.episodes = 1;
  CHECK_NOTHROW(run(config, clusters()));
}

TEST_CASE("a failing episode aborts with the finished reports") {
  auto config = small_config();
  config.optimizer.learning_rate = 1e300;
  try {
    run(config, clusters());
    FAIL("expected PipelineAborted");
  } catch (const PipelineAborted& e) {
    CHECK(e.partial().empty());
    CHECK_THROWS_AS(std::rethrow_exception(e.cause()), NumericError);
  }

  auto bad_test = split_per_class(clusters(), 5).second;
  bad_test.true_labels.reset();
  CHECK_THROWS_AS(run(small_config(), clusters(), bad_test), std::invalid_argument);
}

TEST_CASE("evaluate") {
  auto config = small_config();
  config.noise.reset();
  const auto [train, test] = split_per_class(clusters(), 10);
  OptimizerParams opt = config.optimizer;
  const auto trained = train_episode(init_classifier({8, 24, 12, 3}, 1), train, 0.0, 10, opt, {}, 2);
  const auto eval = evaluate(trained.model, train, test, config);
  CHECK(eval.head_accuracy >= 0.95);
  CHECK(eval.deep_knn_accuracy >= 0.95);
}

TEST_CASE("k_sweep") {
  auto config = small_config();
  config.epochs_per_episode = 5;
  const auto rows = k_sweep(config, clusters(), {3, 10, 3, 20}, 2);
  // checkpoints at epochs 2, 4 and 5; one classifier row plus 3 k values for each method
  REQUIRE(rows.size() == 3 * 7);
  CHECK(rows[0].epoch == 2);
  CHECK(rows[0].method == "classifier");
  CHECK_FALSE(rows[0].k.has_value());
  CHECK(rows[1].method == "iterknn");
  CHECK(rows[1].k == 3);
  CHECK(rows[4].method == "selknn");
  CHECK(rows.back().epoch == 5);
  for (const auto& r : rows) CHECK((r.recovery >= 0.0 && r.recovery <= 1.0));

  // a prefix vote equals a fresh search at the smaller k
  SUBCASE("prefix votes match separate sweeps") {
    const auto single = k_sweep(config, clusters(), {10}, 2);
    for (const auto& r : single) {
      if (!r.k) continue;
      const auto match = std::find_if(rows.begin(), rows.end(), [&](const SweepRow& o) {
        return o.epoch == r.epoch && o.method == r.method && o.k == r.k;
      });
      REQUIRE(match != rows.end());
      CHECK(match->recovery == r.recovery);
    }
  }

  CHECK_THROWS_AS(k_sweep(config, clusters(), {150}, 2), std::invalid_argument);
  CHECK_THROWS_AS(k_sweep(config, clusters(), {}, 2), std::invalid_argument);
  LabeledDataset blind = clusters();
  blind.true_labels.reset();
  CHECK_THROWS_AS(k_sweep(config, blind, {5}, 2), std::invalid_argument);
}
