#ifndef KNNCLEAN_NOISE_HPP
#define KNNCLEAN_NOISE_HPP

#include "knnclean/types.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace knnclean {

/// Class-confusion map for asymmetric noise: source class -> target class.
using TransitionMap = std::map<Label, Label>;

enum class NoiseKind { symmetric, asymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double level = 0.0;
  TransitionMap transitions;  // asymmetric only
  std::uint64_t seed = 0;

  /// Throws ConfigError when the spec is inconsistent.
  void validate() const;
};

/**
 * Each label is kept with probability 1 - level, otherwise replaced by one
 * of the other num_classes - 1 classes uniformly at random. Draws depend
 * only on (seed, position), so the result is independent of evaluation order.
 */
LabelVector inject_symmetric(std::span<const Label> labels, std::uint32_t num_classes,
                             double level, std::uint64_t seed);

/// With probability `level`, every label that is a transition source becomes its target.
LabelVector inject_asymmetric(std::span<const Label> labels, const TransitionMap& transitions,
                              double level, std::uint64_t seed);

/// Dispatches on spec.kind.
LabelVector inject(std::span<const Label> labels, std::uint32_t num_classes, const NoiseSpec& spec);

/// "mnist" or "cifar10" (airplane=0 ... truck=9).
TransitionMap builtin_transitions(std::string_view name);

/// Builtin name, or a comma/space separated list of "source:target" pairs.
TransitionMap parse_transitions(std::string_view text);

/// Fraction of positions where the two arrays differ.
double label_error_rate(std::span<const Label> a, std::span<const Label> b);

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view text);

}  // namespace knnclean

#endif  // KNNCLEAN_NOISE_HPP
