#ifndef KNNCLEAN_PIPELINE_HPP
#define KNNCLEAN_PIPELINE_HPP

#include "knnclean/config.hpp"
#include "knnclean/embedstore.hpp"
#include "knnclean/trainer.hpp"

#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace knnclean {

/// Metrics for one episode of train -> embed -> correct.
struct EpisodeReport {
  std::size_t episode = 0;  // 1-based
  double gamma = 1.0;
  std::optional<double> m_percent;  // SelKNN only
  std::optional<double> label_recovery_rate;
  std::optional<double> label_error_rate;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy_head;
  std::optional<double> test_accuracy_deep_knn;
  std::size_t labels_changed = 0;
  double wall_seconds = 0.0;
};

/// Metrics of the model retrained on the final corrected labels.
struct FinalMetrics {
  double train_accuracy = 0.0;
  std::optional<double> label_recovery_rate;
  std::optional<double> test_accuracy_head;
  std::optional<double> test_accuracy_deep_knn;
};

struct RunResult {
  std::vector<EpisodeReport> reports;
  LabeledDataset corrected;
  Classifier model;
  FinalMetrics final_metrics;
};

struct RunOptions {
  /// Stable per-sample ids for batch ordering; empty means row indices.
  std::span<const std::uint64_t> sample_keys;
  /// Retrain on the corrected labels after the last episode.
  bool final_training = true;
  std::function<void(const EpisodeReport&)> on_episode;
};

/// Thrown when an episode fails; carries the reports finished before it.
class PipelineAborted : public std::runtime_error {
 public:
  PipelineAborted(std::vector<EpisodeReport> partial, std::exception_ptr cause, const std::string& what)
      : std::runtime_error(what), partial_(std::move(partial)), cause_(std::move(cause)) {}

  const std::vector<EpisodeReport>& partial() const { return partial_; }
  std::exception_ptr cause() const { return cause_; }

 private:
  std::vector<EpisodeReport> partial_;
  std::exception_ptr cause_;
};

/// gamma used in episode m (1-based): gamma_init / factor^(m-1).
std::vector<double> gamma_schedule(const PipelineConfig& config);
/// Reference percent in episode m: min(init + increment * (m-1), 100).
std::vector<double> m_percent_schedule(const PipelineConfig& config);

/// Fraction of samples whose current label equals the true label.
double label_recovery_rate(std::span<const Label> current_labels, std::span<const Label> true_labels);
double label_recovery_rate(const LabeledDataset& dataset);

/// Applies config.noise (if any) to the noisy labels and resets current to noisy.
LabeledDataset prepare_training_set(const PipelineConfig& config, LabeledDataset train);

/**
 * Iterative training and correction. Each episode reinitializes the
 * classifier, trains it with the hybrid loss at the current gamma, extracts
 * embeddings and corrects the labels, then decays gamma and widens the
 * SelKNN reference share. At 100% SelKNN falls back to IterKNN. True labels
 * are read only for metrics.
 */
RunResult run(const PipelineConfig& config, LabeledDataset train,
              const std::optional<LabeledDataset>& test = std::nullopt, const RunOptions& options = {});

struct Evaluation {
  double head_accuracy = 0.0;
  double deep_knn_accuracy = 0.0;
};

/// Head accuracy and deep-KNN accuracy against `reference` (its current labels).
Evaluation evaluate(const Classifier& model, const LabeledDataset& reference, const LabeledDataset& test,
                    const PipelineConfig& config);

struct SweepRow {
  std::size_t epoch = 0;
  std::string method;        // "selknn", "iterknn" or "classifier"
  std::optional<std::size_t> k;  // absent for the classifier head
  double recovery = 0.0;
};

/**
 * Recovery versus k within a single training episode on the noisy labels,
 * measured every `interval` epochs and at the last epoch, without changing
 * any label. Needs true labels.
 */
std::vector<SweepRow> k_sweep(const PipelineConfig& config, LabeledDataset dataset,
                              std::vector<std::size_t> k_values, std::size_t interval = 10);

/// Writes "warning: ..." to stderr.
void log_warning(const std::string& message);

}  // namespace knnclean

#endif  // KNNCLEAN_PIPELINE_HPP
