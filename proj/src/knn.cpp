#include "knnclean/knn.hpp"

#include <atomic>
#include <limits>
#include <cstdlib>
#include <numeric>

namespace knnclean {

namespace {

std::atomic<unsigned> g_thread_override{0};

void check_vote_inputs(std::span<const Neighbor> neighbors, std::span<const Label> labels) {
  if (neighbors.empty()) throw std::invalid_argument("vote: no neighbors");
  for (const auto& nb : neighbors) {
    if (nb.index >= labels.size()) throw std::invalid_argument("vote: neighbor index outside labels");
  }
}

std::size_t class_span(std::span<const Neighbor> neighbors, std::span<const Label> labels) {
  Label top = 0;
  for (const auto& nb : neighbors) top = std::max(top, labels[nb.index]);
  return static_cast<std::size_t>(top) + 1;
}

}  // namespace

unsigned worker_threads() {
  if (const unsigned forced = g_thread_override.load()) return forced;
  if (const char* env = std::getenv("KNNCLEAN_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return static_cast<unsigned>(parsed);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_threads(unsigned count) { g_thread_override.store(count); }

std::string to_string(Metric metric) { return metric == Metric::l2 ? "l2" : "cosine"; }

std::string to_string(VoteScheme scheme) {
  switch (scheme) {
    case VoteScheme::hard_majority: return "hard_majority";
    case VoteScheme::distance_weighted: return "distance_weighted";
    case VoteScheme::soft: return "soft";
  }
  return "?";
}

std::string to_string(TieRule rule) {
  return rule == TieRule::nearest_neighbor_wins ? "nearest_neighbor_wins" : "lowest_class_id";
}

Metric parse_metric(std::string_view text) {
  if (text == "l2") return Metric::l2;
  if (text == "cosine") return Metric::cosine;
  throw ConfigError("unknown metric '" + std::string(text) + "'");
}

VoteScheme parse_vote_scheme(std::string_view text) {
  if (text == "hard_majority") return VoteScheme::hard_majority;
  if (text == "distance_weighted") return VoteScheme::distance_weighted;
  if (text == "soft") return VoteScheme::soft;
  throw ConfigError("unknown vote scheme '" + std::string(text) + "'");
}

TieRule parse_tie_rule(std::string_view text) {
  if (text == "nearest_neighbor_wins") return TieRule::nearest_neighbor_wins;
  if (text == "lowest_class_id") return TieRule::lowest_class_id;
  throw ConfigError("unknown tie rule '" + std::string(text) + "'");
}

Label resolve_vote(std::span<const double> scores, std::span<const Neighbor> neighbors,
                   std::span<const Label> labels, TieRule rule) {
  const double best = *std::max_element(scores.begin(), scores.end());
  auto tied = [&](Label c) { return c < scores.size() && scores[c] == best; };
  if (rule == TieRule::nearest_neighbor_wins) {
    // Nearest distance held by any tied class; among classes sharing it, lowest id.
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& nb : neighbors) {
      if (tied(labels[nb.index])) nearest = std::min(nearest, nb.distance);
    }
    Label winner = std::numeric_limits<Label>::max();
    for (const auto& nb : neighbors) {
      const Label c = labels[nb.index];
      if (tied(c) && nb.distance == nearest) winner = std::min(winner, c);
    }
    if (winner != std::numeric_limits<Label>::max()) return winner;
  }
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] == best) return static_cast<Label>(c);
  }
  throw std::logic_error("resolve_vote: empty score table");
}

Label vote_hard(std::span<const Neighbor> neighbors, std::span<const Label> labels,
                const VoteConfig& config) {
  check_vote_inputs(neighbors, labels);
  std::vector<double> counts(class_span(neighbors, labels), 0.0);
  for (const auto& nb : neighbors) counts[labels[nb.index]] += 1.0;
  return resolve_vote(counts, neighbors, labels, config.tie_rule);
}

Label vote_weighted(std::span<const Neighbor> neighbors, std::span<const Label> labels,
                    const VoteConfig& config) {
  check_vote_inputs(neighbors, labels);
  if (!(config.epsilon > 0.0)) throw std::invalid_argument("vote: epsilon must be > 0");
  std::vector<double> weights(class_span(neighbors, labels), 0.0);
  for (const auto& nb : neighbors) weights[labels[nb.index]] += 1.0 / (nb.distance + config.epsilon);
  return resolve_vote(weights, neighbors, labels, config.tie_rule);
}

std::vector<double> vote_soft(std::span<const Neighbor> neighbors, std::span<const Label> labels,
                              std::uint32_t num_classes) {
  check_vote_inputs(neighbors, labels);
  std::vector<double> probs(num_classes, 0.0);
  for (const auto& nb : neighbors) {
    const Label c = labels[nb.index];
    if (c >= num_classes) throw std::invalid_argument("vote_soft: label out of range");
    probs[c] += 1.0;
  }
  const double k = static_cast<double>(neighbors.size());
  for (auto& p : probs) p /= k;
  return probs;
}

Label vote(std::span<const Neighbor> neighbors, std::span<const Label> labels,
           const VoteConfig& config) {
  switch (config.scheme) {
    case VoteScheme::hard_majority: return vote_hard(neighbors, labels, config);
    case VoteScheme::distance_weighted: return vote_weighted(neighbors, labels, config);
    case VoteScheme::soft: {
      check_vote_inputs(neighbors, labels);
      const auto probs =
          vote_soft(neighbors, labels, static_cast<std::uint32_t>(class_span(neighbors, labels)));
      return resolve_vote(probs, neighbors, labels, config.tie_rule);
    }
  }
  throw std::invalid_argument("vote: unknown scheme");
}

LabelVector vote_all(const std::vector<std::vector<Neighbor>>& neighbor_lists,
                     std::span<const Label> labels, const VoteConfig& config, std::size_t k) {
  LabelVector out(neighbor_lists.size());
  for (std::size_t i = 0; i < neighbor_lists.size(); ++i) {
    std::span<const Neighbor> list(neighbor_lists[i]);
    if (k > 0) {
      if (k > list.size()) throw std::invalid_argument("vote_all: k exceeds neighbor list length");
      list = list.first(k);
    }
    out[i] = vote(list, labels, config);
  }
  return out;
}

std::vector<bool> select_reference(std::span<const Label> current_labels,
                                   std::span<const double> cumulative_loss,
                                   std::span<const std::size_t> per_class_count) {
  if (cumulative_loss.size() != current_labels.size()) {
    throw std::invalid_argument("select_reference: loss array not row-aligned");
  }
  std::vector<std::vector<std::size_t>> members(per_class_count.size());
  for (std::size_t i = 0; i < current_labels.size(); ++i) {
    if (current_labels[i] >= per_class_count.size()) {
      throw std::invalid_argument("select_reference: label without a per-class count");
    }
    members[current_labels[i]].push_back(i);
  }
  std::vector<bool> mask(current_labels.size(), false);
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& idx = members[c];
    const std::size_t take = std::min(per_class_count[c], idx.size());
    // The threshold l_c is the take-th smallest loss; sorting by
    // (loss, index) makes |B_c| exactly `take` even with tied losses.
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        return cumulative_loss[a] < cumulative_loss[b] ||
                               (cumulative_loss[a] == cumulative_loss[b] && a < b);
                      });
    for (std::size_t j = 0; j < take; ++j) mask[idx[j]] = true;
  }
  return mask;
}

std::vector<std::size_t> per_class_counts_from_percent(std::span<const Label> current_labels,
                                                       std::uint32_t num_classes, double percent) {
  if (!(percent > 0.0 && percent <= 100.0)) {
    throw std::invalid_argument("reference percent must be in (0, 100]");
  }
  std::vector<std::size_t> sizes(num_classes, 0);
  for (Label y : current_labels) {
    if (y >= num_classes) throw std::invalid_argument("label out of range");
    ++sizes[y];
  }
  std::vector<std::size_t> counts(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    // Integer ceil of percent * size / 100, exact for integral percents.
    counts[c] = static_cast<std::size_t>(std::ceil(percent * static_cast<double>(sizes[c]) / 100.0 - 1e-9));
  }
  return counts;
}

}  // namespace knnclean
