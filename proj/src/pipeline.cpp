#include "knnclean/pipeline.hpp"

#include "knnclean/knn.hpp"
#include "knnclean/noise.hpp"
#include "knnclean/rng.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <set>

namespace knnclean {

namespace {

constexpr std::uint64_t kInitTag = 1000;
constexpr std::uint64_t kTrainTag = 2000;

std::vector<std::size_t> layer_sizes(const PipelineConfig& config, const LabeledDataset& data) {
  std::vector<std::size_t> sizes{data.dim()};
  sizes.insert(sizes.end(), config.classifier.hidden.begin(), config.classifier.hidden.end());
  sizes.push_back(data.num_classes);
  return sizes;
}

Classifier fresh_model(const PipelineConfig& config, const LabeledDataset& data, std::size_t episode) {
  return init_classifier(layer_sizes(config, data), derive_seed(config.seed, kInitTag + episode),
                         config.classifier.embedding_layer);
}

std::size_t clamp_k(std::size_t k, std::size_t limit, const char* what) {
  if (limit < 1) throw std::invalid_argument(std::string(what) + ": reference set too small");
  if (k > limit) {
    log_warning(std::string(what) + ": k=" + std::to_string(k) + " clamped to " + std::to_string(limit));
    return limit;
  }
  return k;
}

std::size_t count_changes(std::span<const Label> a, std::span<const Label> b) {
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) changed += a[i] != b[i];
  return changed;
}

struct CorrectionOutcome {
  LabelVector labels;
  std::vector<bool> reference_mask;  // empty for IterKNN
};

CorrectionOutcome correct(const PipelineConfig& config, std::span<const Label> current,
                          const EmbeddingSet& embeddings, const LossLedger& ledger, double m_percent,
                          std::uint32_t num_classes) {
  if (config.correction == Correction::selknn && m_percent < 100.0) {
    const auto counts = per_class_counts_from_percent(current, num_classes, m_percent);
    std::size_t reference_size = 0;
    for (auto c : counts) reference_size += c;
    const std::size_t k = clamp_k(config.k, reference_size, "selknn");
    auto result = correct_selknn(current, embeddings, std::span<const double>(ledger.cumulative),
                                 std::span<const std::size_t>(counts), k, config.metric, config.vote);
    return {std::move(result.labels), std::move(result.reference_mask)};
  }
  const std::size_t k = clamp_k(config.k, embeddings.size() - 1, "iterknn");
  return {correct_iterknn(current, embeddings, k, config.metric, config.vote), {}};
}

double deep_knn_accuracy(const PipelineConfig& config, const EmbeddingSet& train_embeddings,
                         std::span<const Label> train_labels, const std::vector<bool>& clean_mask,
                         const EmbeddingSet& test_embeddings, std::span<const Label> test_truth) {
  LabelVector predicted;
  if (config.deep_knn_reference == DeepKnnReference::clean_subset && !clean_mask.empty()) {
    std::vector<std::size_t> rows;
    LabelVector labels;
    for (std::size_t i = 0; i < clean_mask.size(); ++i) {
      if (clean_mask[i]) {
        rows.push_back(i);
        labels.push_back(train_labels[i]);
      }
    }
    const auto reference = train_embeddings.subset(rows);
    predicted = predict_deep_knn(reference, std::span<const Label>(labels), test_embeddings,
                                 clamp_k(config.k, reference.size(), "deep-knn"), config.metric,
                                 config.vote);
  } else {
    predicted = predict_deep_knn(train_embeddings, train_labels, test_embeddings,
                                 clamp_k(config.k, train_embeddings.size(), "deep-knn"), config.metric,
                                 config.vote);
  }
  return accuracy(predicted, test_truth);
}

void check_test_set(const LabeledDataset& train, const LabeledDataset& test) {
  test.validate();
  if (!test.true_labels) throw std::invalid_argument("test set needs true labels");
  if (test.dim() != train.dim()) throw std::invalid_argument("test set dimension differs from train");
  if (test.num_classes != train.num_classes) {
    throw std::invalid_argument("test set class count differs from train");
  }
}

}  // namespace

void log_warning(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

std::vector<double> gamma_schedule(const PipelineConfig& config) {
  std::vector<double> out;
  double gamma = config.gamma_init;
  for (std::size_t m = 0; m < config.episodes; ++m) {
    out.push_back(gamma);
    gamma /= config.gamma_decay_factor;
  }
  return out;
}

std::vector<double> m_percent_schedule(const PipelineConfig& config) {
  std::vector<double> out;
  double percent = std::min(config.selknn_m_init_percent, 100.0);
  for (std::size_t m = 0; m < config.episodes; ++m) {
    out.push_back(percent);
    percent = std::min(percent + config.selknn_m_increment_percent, 100.0);
  }
  return out;
}

double label_recovery_rate(std::span<const Label> current_labels, std::span<const Label> true_labels) {
  if (current_labels.size() != true_labels.size()) {
    throw std::invalid_argument("label_recovery_rate: length mismatch");
  }
  return 1.0 - label_error_rate(current_labels, true_labels);
}

double label_recovery_rate(const LabeledDataset& dataset) {
  if (!dataset.true_labels) throw std::invalid_argument("label_recovery_rate: true labels missing");
  return label_recovery_rate(dataset.current_labels, *dataset.true_labels);
}

LabeledDataset prepare_training_set(const PipelineConfig& config, LabeledDataset train) {
  train.validate();
  if (config.noise) train.noisy_labels = inject(train.noisy_labels, train.num_classes, *config.noise);
  train.current_labels = train.noisy_labels;
  return train;
}

RunResult run(const PipelineConfig& config, LabeledDataset train, const std::optional<LabeledDataset>& test,
              const RunOptions& options) {
  config.validate();
  LabeledDataset working = prepare_training_set(config, std::move(train));
  if (test) check_test_set(working, *test);
  if (working.size() < 2) throw std::invalid_argument("run: need at least 2 training samples");

  const auto gammas = gamma_schedule(config);
  const auto percents = m_percent_schedule(config);
  RunResult result;

  for (std::size_t m = 0; m < config.episodes; ++m) {
    const auto started = std::chrono::steady_clock::now();
    EpisodeReport report;
    report.episode = m + 1;
    report.gamma = gammas[m];
    if (config.correction == Correction::selknn) report.m_percent = percents[m];
    try {
      auto trained = train_episode(fresh_model(config, working, m + 1), working, gammas[m],
                                   config.epochs_per_episode, config.optimizer, config.loss,
                                   derive_seed(config.seed, kTrainTag + m + 1), options.sample_keys);
      report.train_accuracy = accuracy(predict(trained.model, working.embeddings), working.current_labels);

      const EmbeddingSet embeddings = embed_all(trained.model, working);
      auto outcome = correct(config, working.current_labels, embeddings, trained.ledger, percents[m],
                             working.num_classes);
      report.labels_changed = count_changes(outcome.labels, working.current_labels);
      working.current_labels = std::move(outcome.labels);

      if (working.true_labels) {
        report.label_recovery_rate = label_recovery_rate(working);
        report.label_error_rate = label_error_rate(working.current_labels, *working.true_labels);
      }
      if (test) {
        report.test_accuracy_head = accuracy(predict(trained.model, test->embeddings), *test->true_labels);
        report.test_accuracy_deep_knn =
            deep_knn_accuracy(config, embeddings, working.current_labels, outcome.reference_mask,
                              embed_all(trained.model, *test), *test->true_labels);
      }
      result.model = std::move(trained.model);
    } catch (...) {
      throw PipelineAborted(result.reports, std::current_exception(),
                            "episode " + std::to_string(m + 1) + " failed");
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.reports.push_back(report);
    if (options.on_episode) options.on_episode(report);
  }

  if (options.final_training) {
    try {
      const std::size_t final_index = config.episodes + 1;
      auto trained = train_episode(fresh_model(config, working, final_index), working, 0.0,
                                   config.epochs_per_episode, config.optimizer, config.loss,
                                   derive_seed(config.seed, kTrainTag + final_index), options.sample_keys);
      result.model = std::move(trained.model);
    } catch (...) {
      throw PipelineAborted(result.reports, std::current_exception(), "final training failed");
    }
  }

  auto& fin = result.final_metrics;
  fin.train_accuracy = accuracy(predict(result.model, working.embeddings), working.current_labels);
  if (working.true_labels) fin.label_recovery_rate = label_recovery_rate(working);
  if (test) {
    const auto eval = evaluate(result.model, working, *test, config);
    fin.test_accuracy_head = eval.head_accuracy;
    fin.test_accuracy_deep_knn = eval.deep_knn_accuracy;
  }
  result.corrected = std::move(working);
  return result;
}

Evaluation evaluate(const Classifier& model, const LabeledDataset& reference, const LabeledDataset& test,
                    const PipelineConfig& config) {
  reference.validate();
  check_test_set(reference, test);
  Evaluation out;
  out.head_accuracy = accuracy(predict(model, test.embeddings), *test.true_labels);
  out.deep_knn_accuracy = deep_knn_accuracy(config, embed_all(model, reference), reference.current_labels,
                                            {}, embed_all(model, test), *test.true_labels);
  return out;
}

std::vector<SweepRow> k_sweep(const PipelineConfig& config, LabeledDataset dataset,
                              std::vector<std::size_t> k_values, std::size_t interval) {
  config.validate();
  LabeledDataset working = prepare_training_set(config, std::move(dataset));
  if (!working.true_labels) throw std::invalid_argument("k_sweep: true labels required");
  if (k_values.empty()) throw std::invalid_argument("k_sweep: no k values");
  if (interval < 1) throw std::invalid_argument("k_sweep: interval must be >= 1");

  std::vector<std::size_t> unique;
  std::set<std::size_t> seen;
  for (auto k : k_values) {
    if (k < 1) throw std::invalid_argument("k_sweep: k must be >= 1");
    if (k >= working.size()) {
      throw std::invalid_argument("k_sweep: k=" + std::to_string(k) + " must be < n=" +
                                  std::to_string(working.size()));
    }
    if (seen.insert(k).second) {
      unique.push_back(k);
    } else {
      log_warning("k_sweep: duplicate k=" + std::to_string(k) + " ignored");
    }
  }
  const std::size_t k_max = *std::max_element(unique.begin(), unique.end());
  const auto& truth = *working.true_labels;
  const auto& current = working.current_labels;

  std::vector<SweepRow> rows;
  const std::size_t epochs = config.epochs_per_episode;
  auto checkpoint = [&](std::size_t epoch, const Classifier& model, const LossLedger& ledger) {
    if (epoch % interval != 0 && epoch != epochs) return;
    rows.push_back({epoch, "classifier", std::nullopt,
                    label_recovery_rate(predict(model, working.embeddings), truth)});
    const EmbeddingSet embeddings = embed_all(model, working);

    // IterKNN: one search at the largest k, each smaller k votes on a prefix.
    {
      const BruteForceSearch<float> search(embeddings, config.metric);
      const auto lists = search.query_all(embeddings, k_max, true);
      for (auto k : unique) {
        rows.push_back({epoch, "iterknn", k, label_recovery_rate(vote_all(lists, current, config.vote, k), truth)});
      }
    }

    const auto counts =
        per_class_counts_from_percent(current, working.num_classes, config.selknn_m_init_percent);
    const auto mask = select_reference(current, ledger.cumulative, counts);
    std::vector<std::size_t> reference_rows;
    std::vector<std::size_t> query_rows;
    LabelVector reference_labels;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) {
        reference_rows.push_back(i);
        reference_labels.push_back(current[i]);
      } else {
        query_rows.push_back(i);
      }
    }
    const auto reference = embeddings.subset(reference_rows);
    const std::size_t sel_max = clamp_k(k_max, reference.size(), "k_sweep selknn");
    const BruteForceSearch<float> search(reference, config.metric);
    const auto lists = query_rows.empty() ? std::vector<std::vector<Neighbor>>{}
                                          : search.query_all(embeddings.subset(query_rows), sel_max, false);
    for (auto k : unique) {
      const std::size_t k_eff = std::min(k, sel_max);
      LabelVector labels = current;
      const auto voted = vote_all(lists, reference_labels, config.vote, k_eff);
      for (std::size_t q = 0; q < query_rows.size(); ++q) labels[query_rows[q]] = voted[q];
      rows.push_back({epoch, "selknn", k, label_recovery_rate(labels, truth)});
    }
  };

  train_episode(fresh_model(config, working, 1), working, config.gamma_init, epochs, config.optimizer,
                config.loss, derive_seed(config.seed, kTrainTag + 1), {}, checkpoint);
  return rows;
}

}  // namespace knnclean
