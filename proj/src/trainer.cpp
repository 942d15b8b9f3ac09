#include "knnclean/trainer.hpp"

#include "knnclean/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace knnclean {

namespace {

constexpr std::uint64_t kStreamShuffle = 11;
constexpr double kFiniteDifferenceStep = 1e-4;

struct BatchTrace {
  // activations[l]: layer l output (index 0 = input); pre[l]: pre-ReLU of layer l (1-based).
  std::vector<RowMatrix<double>> activations;
  std::vector<RowMatrix<double>> pre;
  RowMatrix<double> probs;
};

BatchTrace forward_batch(const Classifier& model, const RowMatrix<double>& inputs) {
  BatchTrace trace;
  const std::size_t layers = model.num_layers();
  trace.activations.resize(layers + 1);
  trace.pre.resize(layers + 1);
  trace.activations[0] = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    RowMatrix<double> z = trace.activations[l] * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    trace.pre[l + 1] = z;
    trace.activations[l + 1] = (l + 1 < layers) ? RowMatrix<double>(z.cwiseMax(0.0)) : z;
  }
  trace.probs = softmax_rows(trace.activations[layers]);
  return trace;
}

/// Backpropagates d(loss)/d(logits) through the trace.
Gradients backward(const Classifier& model, const BatchTrace& trace, RowMatrix<double> delta) {
  const std::size_t layers = model.num_layers();
  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = delta.transpose() * trace.activations[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      RowMatrix<double> upstream = delta * model.weights[l];
      delta = upstream.cwiseProduct((trace.pre[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

RowMatrix<double> to_double(const EmbeddingSet& set) { return set.matrix().cast<double>(); }

std::span<const double> row_span(const RowMatrix<double>& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

void check_input(const Classifier& model, Eigen::Index size) {
  if (static_cast<std::size_t>(size) != model.input_size()) {
    throw std::invalid_argument("classifier input size " + std::to_string(model.input_size()) +
                                " does not match vector size " + std::to_string(size));
  }
}

double hybrid_from_probs(std::span<const double> probs, Label corrected, Label noisy, double gamma,
                         const LossConfig& config) {
  return (1.0 - gamma) * base_loss(probs, corrected, config) + gamma * base_loss(probs, noisy, config);
}

Vector<double> hybrid_logit_gradient(std::span<const double> probs, Label corrected, Label noisy,
                                     double gamma, const LossConfig& config) {
  return (1.0 - gamma) * base_loss_logit_gradient(probs, corrected, config) +
         gamma * base_loss_logit_gradient(probs, noisy, config);
}

void check_label(std::span<const double> probs, Label label) {
  if (label >= probs.size()) throw std::invalid_argument("loss: label out of range");
}

}  // namespace

Classifier init_classifier(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                           std::optional<std::size_t> embedding_layer) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("classifier needs at least 2 layers");
  if (std::find(layer_sizes.begin(), layer_sizes.end(), 0u) != layer_sizes.end()) {
    throw std::invalid_argument("layer sizes must be >= 1");
  }
  Classifier model;
  model.layer_sizes = layer_sizes;
  model.embedding_layer = embedding_layer.value_or(layer_sizes.size() - 2);
  if (model.embedding_layer >= layer_sizes.size()) {
    throw std::invalid_argument("embedding layer out of range");
  }
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(layer_sizes[l]);
    const auto fan_out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    RowMatrix<double> w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = bound * (2.0 * counter_uniform(seed, l + 1, static_cast<std::uint64_t>(i)) - 1.0);
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Vector<double>::Zero(fan_out));
  }
  return model;
}

RowMatrix<double> softmax_rows(const RowMatrix<double>& logits) {
  RowMatrix<double> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

ForwardResult forward(const Classifier& model, const Eigen::Ref<const Vector<double>>& x) {
  check_input(model, x.size());
  const BatchTrace trace = forward_batch(model, x.transpose());
  return {trace.probs.row(0).transpose(), trace.activations[model.embedding_layer].row(0).transpose()};
}

std::string to_string(LossKind kind) { return kind == LossKind::ce ? "ce" : "sl"; }

LossKind parse_loss_kind(std::string_view text) {
  if (text == "ce") return LossKind::ce;
  if (text == "sl") return LossKind::sl;
  throw ConfigError("unknown loss kind '" + std::string(text) + "'");
}

double loss_ce(std::span<const double> probs, Label label) {
  check_label(probs, label);
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

double loss_rce(std::span<const double> probs, Label label, double clip_A) {
  check_label(probs, label);
  return -clip_A * (1.0 - probs[label]);
}

double loss_sl(std::span<const double> probs, Label label, double alpha, double beta, double clip_A) {
  return alpha * loss_ce(probs, label) + beta * loss_rce(probs, label, clip_A);
}

double base_loss(std::span<const double> probs, Label label, const LossConfig& config) {
  if (config.kind == LossKind::ce) return loss_ce(probs, label);
  return loss_sl(probs, label, config.sl_alpha, config.sl_beta, config.rce_clip_A);
}

Vector<double> base_loss_logit_gradient(std::span<const double> probs, Label label,
                                        const LossConfig& config) {
  check_label(probs, label);
  const Eigen::Map<const Vector<double>> p(probs.data(), static_cast<Eigen::Index>(probs.size()));
  Vector<double> onehot = Vector<double>::Zero(p.size());
  onehot[label] = 1.0;
  // ce: p - e_y.  rce: clip_A * p_y * (e_y - p).
  const Vector<double> ce = p - onehot;
  if (config.kind == LossKind::ce) return ce;
  const Vector<double> rce = config.rce_clip_A * probs[label] * (onehot - p);
  return config.sl_alpha * ce + config.sl_beta * rce;
}

double hybrid_loss(const Classifier& model, const Eigen::Ref<const Vector<double>>& x, Label corrected,
                   Label noisy, double gamma, const LossConfig& config) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  const auto out = forward(model, x);
  const std::span<const double> probs(out.probs.data(), static_cast<std::size_t>(out.probs.size()));
  return hybrid_from_probs(probs, corrected, noisy, gamma, config);
}

Gradients loss_gradient(const Classifier& model, const Eigen::Ref<const Vector<double>>& x,
                        Label corrected, Label noisy, double gamma, const LossConfig& config) {
  check_input(model, x.size());
  const BatchTrace trace = forward_batch(model, x.transpose());
  const Vector<double> delta =
      hybrid_logit_gradient(row_span(trace.probs, 0), corrected, noisy, gamma, config);
  return backward(model, trace, delta.transpose());
}

double gradient_check(const Classifier& model, const Eigen::Ref<const Vector<double>>& x, Label corrected,
                      Label noisy, double gamma, const LossConfig& config) {
  const Gradients analytic = loss_gradient(model, x, corrected, noisy, gamma, config);
  const RowMatrix<double> input = x.transpose();
  const BatchTrace base = forward_batch(model, input);

  auto crosses_kink = [&](const BatchTrace& t) {
    for (std::size_t l = 1; l < model.num_layers(); ++l) {
      if (((t.pre[l].array() > 0.0) != (base.pre[l].array() > 0.0)).any()) return true;
    }
    return false;
  };
  Classifier probe = model;
  auto evaluate = [&](bool& kink) {
    const BatchTrace t = forward_batch(probe, input);
    kink = kink || crosses_kink(t);
    return hybrid_from_probs(row_span(t.probs, 0), corrected, noisy, gamma, config);
  };
  auto relative_error = [](double a, double n) {
    const double scale = std::max({std::abs(a), std::abs(n), 1e-8});
    return std::abs(a - n) / scale;
  };

  double worst = 0.0;
  auto check_param = [&](double& slot, double analytic_value) {
    const double saved = slot;
    bool kink = false;
    slot = saved + kFiniteDifferenceStep;
    const double up = evaluate(kink);
    slot = saved - kFiniteDifferenceStep;
    const double down = evaluate(kink);
    slot = saved;
    if (kink) return;
    const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
    worst = std::max(worst, relative_error(analytic_value, numeric));
  };
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < probe.weights[l].size(); ++i) {
      check_param(probe.weights[l].data()[i], analytic.weights[l].data()[i]);
    }
    for (Eigen::Index i = 0; i < probe.biases[l].size(); ++i) {
      check_param(probe.biases[l][i], analytic.biases[l][i]);
    }
  }
  return worst;
}

double gradient_check(const Classifier& model, const Eigen::Ref<const Vector<double>>& x, Label label,
                      const LossConfig& config) {
  return gradient_check(model, x, label, label, 0.0, config);
}

double learning_rate_at(const OptimizerParams& params, std::size_t epoch, std::size_t epochs) {
  std::vector<std::size_t> milestones = params.lr_milestones;
  if (milestones.empty()) milestones = {epochs / 2, (3 * epochs) / 4};
  double rate = params.learning_rate;
  for (auto m : milestones) {
    if (m > 0 && epoch >= m) rate *= params.lr_decay;
  }
  return rate;
}

EpisodeResult train_episode(Classifier model, const LabeledDataset& dataset, double gamma,
                            std::size_t epochs, const OptimizerParams& optimizer,
                            const LossConfig& loss, std::uint64_t seed,
                            std::span<const std::uint64_t> sample_keys, const EpochCallback& on_epoch) {
  dataset.validate();
  if (epochs < 1) throw std::invalid_argument("train_episode: epochs must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (optimizer.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (dataset.dim() != model.input_size()) {
    throw std::invalid_argument("train_episode: dataset dimension does not match classifier input");
  }
  if (dataset.num_classes != model.num_classes()) {
    throw std::invalid_argument("train_episode: class count does not match classifier output");
  }
  const std::size_t n = dataset.size();
  if (!sample_keys.empty() && sample_keys.size() != n) {
    throw std::invalid_argument("train_episode: one sample key per row required");
  }

  const RowMatrix<double> inputs = to_double(dataset.embeddings);
  const auto& corrected = dataset.current_labels;
  const auto& noisy = dataset.noisy_labels;

  Gradients m1;
  Gradients m2;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    m1.weights.push_back(RowMatrix<double>::Zero(model.weights[l].rows(), model.weights[l].cols()));
    m1.biases.push_back(Vector<double>::Zero(model.biases[l].size()));
  }
  m2 = m1;

  LossLedger ledger{std::vector<double>(n, 0.0)};
  std::vector<double> epoch_loss(n, 0.0);
  std::vector<std::size_t> order(n);
  std::vector<std::uint64_t> sort_key(n);
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double rate = learning_rate_at(optimizer, epoch, epochs);
    const std::uint64_t epoch_seed = derive_seed(seed, epoch);
    for (std::size_t i = 0; i < n; ++i) {
      sort_key[i] = counter_hash(epoch_seed, kStreamShuffle, sample_keys.empty() ? i : sample_keys[i]);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ka = sample_keys.empty() ? a : sample_keys[a];
      const auto kb = sample_keys.empty() ? b : sample_keys[b];
      return sort_key[a] < sort_key[b] || (sort_key[a] == sort_key[b] && ka < kb);
    });

    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < n; start += optimizer.batch_size) {
      const std::size_t stop = std::min(n, start + optimizer.batch_size);
      const auto rows = static_cast<Eigen::Index>(stop - start);
      RowMatrix<double> batch(rows, inputs.cols());
      for (Eigen::Index r = 0; r < rows; ++r) batch.row(r) = inputs.row(order[start + r]);

      const BatchTrace trace = forward_batch(model, batch);
      RowMatrix<double> delta(rows, trace.probs.cols());
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t i = order[start + r];
        const auto probs = row_span(trace.probs, r);
        const double sample_loss = base_loss(probs, corrected[i], loss);
        if (!std::isfinite(sample_loss)) {
          throw NumericError("non-finite loss at sample " + std::to_string(i) + ", epoch " +
                             std::to_string(epoch));
        }
        epoch_loss[i] = sample_loss;
        epoch_sum += sample_loss;
        delta.row(r) = hybrid_logit_gradient(probs, corrected[i], noisy[i], gamma, loss).transpose();
      }
      delta /= static_cast<double>(rows);
      const Gradients grad = backward(model, trace, std::move(delta));

      ++step;
      const double correction1 = 1.0 - std::pow(optimizer.beta1, static_cast<double>(step));
      const double correction2 = 1.0 - std::pow(optimizer.beta2, static_cast<double>(step));
      auto adam = [&](auto& param, auto& first, auto& second, const auto& g, bool decay) {
        first = optimizer.beta1 * first + (1.0 - optimizer.beta1) * g;
        second = optimizer.beta2 * second + (1.0 - optimizer.beta2) * g.cwiseProduct(g);
        if (decay) param -= rate * optimizer.weight_decay * param;
        param.array() -= rate * (first.array() / correction1) /
                         ((second.array() / correction2).sqrt() + optimizer.epsilon);
      };
      for (std::size_t l = 0; l < model.num_layers(); ++l) {
        adam(model.weights[l], m1.weights[l], m2.weights[l], grad.weights[l], true);
        adam(model.biases[l], m1.biases[l], m2.biases[l], grad.biases[l], false);
      }
    }

    const double mean = epoch_sum / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      ledger.cumulative[i] += mean > 0.0 ? epoch_loss[i] / mean : 1.0;
    }
    if (on_epoch) on_epoch(epoch + 1, model, ledger);
  }
  return {std::move(model), std::move(ledger)};
}

EmbeddingSet embed_all(const Classifier& model, const EmbeddingSet& inputs) {
  check_input(model, static_cast<Eigen::Index>(inputs.dim()));
  const BatchTrace trace = forward_batch(model, to_double(inputs));
  return EmbeddingSet(trace.activations[model.embedding_layer].cast<float>());
}

LabelVector predict(const Classifier& model, const EmbeddingSet& inputs) {
  check_input(model, static_cast<Eigen::Index>(inputs.dim()));
  const BatchTrace trace = forward_batch(model, to_double(inputs));
  LabelVector out(inputs.size());
  for (Eigen::Index r = 0; r < trace.probs.rows(); ++r) {
    Eigen::Index best = 0;
    trace.probs.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<Label>(best);
  }
  return out;
}

double accuracy(std::span<const Label> predicted, std::span<const Label> expected) {
  if (predicted.size() != expected.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (predicted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == expected[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace knnclean
