#ifndef KNNCLEAN_CONFIG_HPP
#define KNNCLEAN_CONFIG_HPP

#include "knnclean/knn.hpp"
#include "knnclean/noise.hpp"
#include "knnclean/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace knnclean {

enum class Correction { iterknn, selknn };
enum class DeepKnnReference { corrected, clean_subset };

struct ClassifierSpec {
  std::vector<std::size_t> hidden = {64, 32};
  /// Activation index used as the embedding; default is the last hidden layer.
  std::optional<std::size_t> embedding_layer;
};

/// Every field carries its default; a config file overrides any subset.
struct PipelineConfig {
  std::size_t episodes = 10;
  std::size_t epochs_per_episode = 30;
  std::size_t k = 100;
  Metric metric = Metric::l2;
  VoteConfig vote;
  Correction correction = Correction::selknn;
  double gamma_init = 1.0;
  double gamma_decay_factor = 1.2;
  double selknn_m_init_percent = 20.0;
  double selknn_m_increment_percent = 10.0;
  ClassifierSpec classifier;
  OptimizerParams optimizer;
  LossConfig loss;
  std::optional<NoiseSpec> noise;
  std::uint64_t seed = 0;
  DeepKnnReference deep_knn_reference = DeepKnnReference::corrected;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::string to_string(Correction correction);
Correction parse_correction(std::string_view text);
std::string to_string(DeepKnnReference reference);

/// Strict conversion: unknown keys and wrongly typed values raise ConfigError.
PipelineConfig config_from_json(const nlohmann::json& json);
/// Parses JSON text; syntax errors report line and column.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical form with every field present (keys sorted).
nlohmann::json to_json(const PipelineConfig& config);

}  // namespace knnclean

#endif  // KNNCLEAN_CONFIG_HPP
