#include "knnclean/noise.hpp"

#include "knnclean/rng.hpp"

#include <charconv>
#include <stdexcept>

namespace knnclean {

namespace {

constexpr std::uint64_t kStreamFlip = 1;
constexpr std::uint64_t kStreamTarget = 2;

void check_level(double level) {
  if (!(level >= 0.0 && level <= 1.0)) {
    throw ConfigError("noise level out of range [0, 1]: " + std::to_string(level));
  }
}

void check_transitions(const TransitionMap& transitions) {
  for (const auto& [source, target] : transitions) {
    if (source == target) {
      throw ConfigError("transition maps class " + std::to_string(source) + " to itself");
    }
  }
}

Label parse_label(std::string_view text, std::string_view pair) {
  Label value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("bad transition pair '" + std::string(pair) + "'");
  }
  return value;
}

}  // namespace

void NoiseSpec::validate() const {
  check_level(level);
  if (kind == NoiseKind::symmetric && !transitions.empty()) {
    throw ConfigError("symmetric noise takes no transitions");
  }
  if (kind == NoiseKind::asymmetric) {
    if (transitions.empty()) throw ConfigError("asymmetric noise needs transitions");
    check_transitions(transitions);
  }
}

LabelVector inject_symmetric(std::span<const Label> labels, std::uint32_t num_classes,
                             double level, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("inject_symmetric: need at least 2 classes");
  check_level(level);
  LabelVector out(labels.begin(), labels.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] >= num_classes) throw std::invalid_argument("inject_symmetric: label out of range");
    if (counter_uniform(seed, kStreamFlip, i) < level) {
      const auto r = static_cast<Label>(counter_below(seed, kStreamTarget, i, num_classes - 1));
      out[i] = r >= out[i] ? r + 1 : r;
    }
  }
  return out;
}

LabelVector inject_asymmetric(std::span<const Label> labels, const TransitionMap& transitions,
                              double level, std::uint64_t seed) {
  check_level(level);
  check_transitions(transitions);
  LabelVector out(labels.begin(), labels.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto it = transitions.find(out[i]);
    if (it != transitions.end() && counter_uniform(seed, kStreamFlip, i) < level) {
      out[i] = it->second;
    }
  }
  return out;
}

LabelVector inject(std::span<const Label> labels, std::uint32_t num_classes, const NoiseSpec& spec) {
  spec.validate();
  if (spec.kind == NoiseKind::symmetric) {
    return inject_symmetric(labels, num_classes, spec.level, spec.seed);
  }
  for (const auto& [source, target] : spec.transitions) {
    if (source >= num_classes || target >= num_classes) {
      throw ConfigError("transition class outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  return inject_asymmetric(labels, spec.transitions, spec.level, spec.seed);
}

TransitionMap builtin_transitions(std::string_view name) {
  if (name == "mnist") {
    return {{7, 1}, {2, 7}, {5, 6}, {6, 5}, {3, 8}};
  }
  if (name == "cifar10") {
    // truck->automobile, bird->airplane, cat<->dog, deer->horse
    return {{9, 1}, {2, 0}, {3, 5}, {5, 3}, {4, 7}};
  }
  throw ConfigError("unknown transition set '" + std::string(name) + "'");
}

TransitionMap parse_transitions(std::string_view text) {
  if (text == "mnist" || text == "cifar10") return builtin_transitions(text);
  TransitionMap out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto stop = text.find_first_of(", ", pos);
    const auto pair = text.substr(pos, stop == std::string_view::npos ? text.npos : stop - pos);
    pos = stop == std::string_view::npos ? text.size() : stop + 1;
    if (pair.empty()) continue;
    const auto colon = pair.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("unknown transition set '" + std::string(pair) + "'");
    }
    const Label source = parse_label(pair.substr(0, colon), pair);
    const Label target = parse_label(pair.substr(colon + 1), pair);
    if (!out.emplace(source, target).second) {
      throw ConfigError("duplicate transition source " + std::to_string(source));
    }
  }
  if (out.empty()) throw ConfigError("empty transition list");
  check_transitions(out);
  return out;
}

double label_error_rate(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) throw std::invalid_argument("label_error_rate: length mismatch");
  if (a.empty()) return 0.0;
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i];
  return static_cast<double>(differ) / static_cast<double>(a.size());
}

std::string to_string(NoiseKind kind) {
  return kind == NoiseKind::symmetric ? "symmetric" : "asymmetric";
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "symmetric") return NoiseKind::symmetric;
  if (text == "asymmetric") return NoiseKind::asymmetric;
  throw ConfigError("unknown noise kind '" + std::string(text) + "'");
}

}  // namespace knnclean
