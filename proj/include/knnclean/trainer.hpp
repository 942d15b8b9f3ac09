#ifndef KNNCLEAN_TRAINER_HPP
#define KNNCLEAN_TRAINER_HPP

#include "knnclean/embedstore.hpp"
#include "knnclean/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace knnclean {

/**
 * Fully connected ReLU network with a softmax head.
 *
 * weights[l] maps layer l to layer l + 1 and has shape
 * layer_sizes[l + 1] x layer_sizes[l]. Activation index 0 is the input,
 * index l > 0 the output of layer l (ReLU on hidden layers, raw logits on
 * the last). embedding_layer selects which activation embed_all returns.
 */
template <typename Scalar>
struct Mlp {
  std::vector<std::size_t> layer_sizes;
  std::vector<RowMatrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;
  std::size_t embedding_layer = 0;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t embedding_size() const { return layer_sizes[embedding_layer]; }

  std::size_t parameter_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      count += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    }
    return count;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layer_sizes != b.layer_sizes || a.embedding_layer != b.embedding_layer) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

using Classifier = Mlp<double>;

/// Same layout as the model parameters.
struct Gradients {
  std::vector<RowMatrix<double>> weights;
  std::vector<Vector<double>> biases;
};

/// Fan-in scaled uniform weights (bound sqrt(6 / fan_in)), zero biases.
/// embedding_layer defaults to the last hidden layer.
Classifier init_classifier(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                           std::optional<std::size_t> embedding_layer = std::nullopt);

struct ForwardResult {
  Vector<double> probs;
  Vector<double> embedding;
};

ForwardResult forward(const Classifier& model, const Eigen::Ref<const Vector<double>>& x);

/// Row-wise softmax with max subtraction.
RowMatrix<double> softmax_rows(const RowMatrix<double>& logits);

enum class LossKind { ce, sl };

struct LossConfig {
  LossKind kind = LossKind::sl;
  double sl_alpha = 1.0;
  double sl_beta = 1.0;
  double rce_clip_A = -4.0;  // stands in for log 0 in the reverse term
};

std::string to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

/// Floor applied to probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

double loss_ce(std::span<const double> probs, Label label);
/// -clip_A * (1 - p[label]).
double loss_rce(std::span<const double> probs, Label label, double clip_A);
double loss_sl(std::span<const double> probs, Label label, double alpha, double beta, double clip_A);
double base_loss(std::span<const double> probs, Label label, const LossConfig& config);

/// d(base loss)/d(logits) given the softmax output.
Vector<double> base_loss_logit_gradient(std::span<const double> probs, Label label,
                                        const LossConfig& config);

/// (1 - gamma) * J(p, corrected) + gamma * J(p, noisy).
double hybrid_loss(const Classifier& model, const Eigen::Ref<const Vector<double>>& x, Label corrected,
                   Label noisy, double gamma, const LossConfig& config);

/// Analytic gradient of hybrid_loss for one sample.
Gradients loss_gradient(const Classifier& model, const Eigen::Ref<const Vector<double>>& x,
                        Label corrected, Label noisy, double gamma, const LossConfig& config);

/**
 * Max relative error between analytic and central-difference gradients
 * (step 1e-4) over all parameters. A parameter whose perturbation moves any
 * hidden pre-activation across zero is skipped, since the loss is not
 * differentiable there.
 */
double gradient_check(const Classifier& model, const Eigen::Ref<const Vector<double>>& x, Label corrected,
                      Label noisy, double gamma, const LossConfig& config);
double gradient_check(const Classifier& model, const Eigen::Ref<const Vector<double>>& x, Label label,
                      const LossConfig& config);

struct OptimizerParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;  // decoupled, weights only
  double lr_decay = 0.1;
  /// Epoch indices (0-based) at which the rate is multiplied by lr_decay.
  /// Empty means half and three quarters of the episode.
  std::vector<std::size_t> lr_milestones;
  std::size_t batch_size = 256;
};

/// Learning rate in effect during `epoch` (0-based).
double learning_rate_at(const OptimizerParams& params, std::size_t epoch, std::size_t epochs);

/// Per-sample loss normalized per epoch and summed over the episode.
struct LossLedger {
  std::vector<double> cumulative;
};

/// Called after each epoch with the 1-based number of completed epochs.
using EpochCallback = std::function<void(std::size_t, const Classifier&, const LossLedger&)>;

struct EpisodeResult {
  Classifier model;
  LossLedger ledger;
};

/**
 * Trains with the hybrid loss against dataset.current_labels (corrected)
 * and dataset.noisy_labels. Each epoch's batch order is the samples sorted
 * by a hash of (seed, epoch, sample key); keys default to row indices.
 * The ledger records J(p, current label) for every sample as it is visited,
 * divided by that epoch's dataset mean.
 */
EpisodeResult train_episode(Classifier model, const LabeledDataset& dataset, double gamma,
                            std::size_t epochs, const OptimizerParams& optimizer,
                            const LossConfig& loss, std::uint64_t seed,
                            std::span<const std::uint64_t> sample_keys = {},
                            const EpochCallback& on_epoch = {});

/// Activations of the embedding layer for every row.
EmbeddingSet embed_all(const Classifier& model, const EmbeddingSet& inputs);
inline EmbeddingSet embed_all(const Classifier& model, const LabeledDataset& dataset) {
  return embed_all(model, dataset.embeddings);
}

/// Softmax-head argmax for every row.
LabelVector predict(const Classifier& model, const EmbeddingSet& inputs);

/// Fraction of positions where the arrays agree.
double accuracy(std::span<const Label> predicted, std::span<const Label> expected);

}  // namespace knnclean

#endif  // KNNCLEAN_TRAINER_HPP
