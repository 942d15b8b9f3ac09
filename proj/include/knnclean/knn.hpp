#ifndef KNNCLEAN_KNN_HPP
#define KNNCLEAN_KNN_HPP

#include "knnclean/embedstore.hpp"
#include "knnclean/parallel.hpp"
#include "knnclean/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace knnclean {

enum class Metric { l2, cosine };

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Total order used everywhere: distance first, then lower index.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

enum class VoteScheme { hard_majority, distance_weighted, soft };
enum class TieRule { nearest_neighbor_wins, lowest_class_id };

struct VoteConfig {
  VoteScheme scheme = VoteScheme::hard_majority;
  TieRule tie_rule = TieRule::nearest_neighbor_wins;
  double epsilon = 1e-8;  // w = 1 / (distance + epsilon)
};

std::string to_string(Metric metric);
std::string to_string(VoteScheme scheme);
std::string to_string(TieRule rule);
Metric parse_metric(std::string_view text);
VoteScheme parse_vote_scheme(std::string_view text);
TieRule parse_tie_rule(std::string_view text);

namespace detail {

// Both kernels accumulate in double, in index order, so a query scanned by
// the search and the same pair passed to distance() agree bit for bit.
template <typename A, typename B>
double l2_kernel(const A* a, const B* b, std::size_t dim) {
  double sum = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double t = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    sum += t * t;
  }
  return std::sqrt(sum);
}

template <typename A>
double norm_kernel(const A* a, std::size_t dim) {
  double sum = 0.0;
  for (std::size_t j = 0; j < dim; ++j) sum += static_cast<double>(a[j]) * static_cast<double>(a[j]);
  return std::sqrt(sum);
}

template <typename A, typename B>
double cosine_kernel(const A* a, const B* b, std::size_t dim, double norm_a, double norm_b) {
  double dot = 0.0;
  for (std::size_t j = 0; j < dim; ++j) dot += static_cast<double>(a[j]) * static_cast<double>(b[j]);
  return std::clamp(1.0 - dot / (norm_a * norm_b), 0.0, 2.0);
}

}  // namespace detail

/// L2: Euclidean distance. Cosine: 1 - a.b / (|a| |b|), clamped to [0, 2].
template <typename DerivedA, typename DerivedB>
double distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                Metric metric) {
  if (a.size() != b.size()) throw std::invalid_argument("distance: dimension mismatch");
  // Materialize contiguous copies; the kernels walk raw arrays.
  const Vector<typename DerivedA::Scalar> va = a.reshaped();
  const Vector<typename DerivedB::Scalar> vb = b.reshaped();
  const auto dim = static_cast<std::size_t>(va.size());
  if (metric == Metric::l2) return detail::l2_kernel(va.data(), vb.data(), dim);
  const double na = detail::norm_kernel(va.data(), dim);
  const double nb = detail::norm_kernel(vb.data(), dim);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("distance: zero vector under cosine");
  return detail::cosine_kernel(va.data(), vb.data(), dim, na, nb);
}

/**
 * Exact brute-force search over a fixed reference set.
 *
 * One pass over the references per query keeps a bounded max-heap of the k
 * best (distance, index) pairs. Queries are independent, so batch search
 * runs them in parallel with identical output for any thread count.
 */
template <typename Scalar>
class BruteForceSearch {
 public:
  BruteForceSearch(const BasicEmbeddingSet<Scalar>& reference, Metric metric)
      : reference_(reference), metric_(metric) {
    if (metric_ == Metric::cosine) {
      norms_.resize(reference_.size());
      for (std::size_t i = 0; i < reference_.size(); ++i) {
        norms_[i] = detail::norm_kernel(reference_.row_data(i), reference_.dim());
        if (norms_[i] == 0.0) {
          throw std::invalid_argument("zero reference vector " + std::to_string(i) +
                                      " under cosine");
        }
      }
    }
  }

  std::size_t size() const { return reference_.size(); }
  std::size_t dim() const { return reference_.dim(); }
  Metric metric() const { return metric_; }

  /// k nearest references ascending by (distance, index), never `exclude`.
  template <typename Q>
  std::vector<Neighbor> query(const Q* q, std::size_t k, std::optional<std::size_t> exclude = {}) const {
    const std::size_t n = reference_.size();
    const std::size_t usable = (exclude && *exclude < n) ? n - 1 : n;
    if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
    if (k > usable) {
      throw std::invalid_argument("knn: k=" + std::to_string(k) + " exceeds usable reference size " +
                                  std::to_string(usable));
    }
    const std::size_t d = reference_.dim();
    double q_norm = 0.0;
    if (metric_ == Metric::cosine) {
      q_norm = detail::norm_kernel(q, d);
      if (q_norm == 0.0) throw std::invalid_argument("knn: zero query vector under cosine");
    }
    auto worse = [](const Neighbor& a, const Neighbor& b) { return closer(a, b); };
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);
    for (std::size_t i = 0; i < n; ++i) {
      if (exclude && i == *exclude) continue;
      const Neighbor candidate{
          i, metric_ == Metric::l2
                 ? detail::l2_kernel(q, reference_.row_data(i), d)
                 : detail::cosine_kernel(q, reference_.row_data(i), d, q_norm, norms_[i])};
      if (heap.size() < k) {
        heap.push(candidate);
      } else if (closer(candidate, heap.top())) {
        heap.pop();
        heap.push(candidate);
      }
    }
    std::vector<Neighbor> out(heap.size());
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
      *it = heap.top();
      heap.pop();
    }
    return out;
  }

  /// Neighbors for every row of `queries`. With `self_exclusion`, query row i
  /// is the same sample as reference row i and is skipped.
  template <typename Q>
  std::vector<std::vector<Neighbor>> query_all(const BasicEmbeddingSet<Q>& queries, std::size_t k,
                                               bool self_exclusion) const {
    if (queries.dim() != dim()) throw std::invalid_argument("knn: dimension mismatch");
    if (self_exclusion && queries.size() != size()) {
      throw std::invalid_argument("knn: self exclusion needs row-aligned sets");
    }
    std::vector<std::vector<Neighbor>> out(queries.size());
    parallel_for(queries.size(), [&](std::size_t i) {
      out[i] = query(queries.row_data(i), k,
                     self_exclusion ? std::optional<std::size_t>(i) : std::nullopt);
    });
    return out;
  }

 private:
  const BasicEmbeddingSet<Scalar>& reference_;
  Metric metric_;
  std::vector<double> norms_;
};

/// Single-query convenience wrapper.
template <typename Scalar, typename Derived>
std::vector<Neighbor> knn_query(const BasicEmbeddingSet<Scalar>& reference,
                                const Eigen::MatrixBase<Derived>& query, std::size_t k, Metric metric,
                                std::optional<std::size_t> exclude = {}) {
  if (static_cast<std::size_t>(query.size()) != reference.dim()) {
    throw std::invalid_argument("knn: dimension mismatch");
  }
  const Vector<typename Derived::Scalar> q = query.reshaped();
  return BruteForceSearch<Scalar>(reference, metric).query(q.data(), k, exclude);
}

Label vote_hard(std::span<const Neighbor> neighbors, std::span<const Label> labels,
                const VoteConfig& config = {});
Label vote_weighted(std::span<const Neighbor> neighbors, std::span<const Label> labels,
                    const VoteConfig& config = {});
/// Per-class fraction of the neighbors carrying that label.
std::vector<double> vote_soft(std::span<const Neighbor> neighbors, std::span<const Label> labels,
                              std::uint32_t num_classes);
/// Hard label from the configured scheme; soft reduces to its tie-broken argmax.
Label vote(std::span<const Neighbor> neighbors, std::span<const Label> labels,
           const VoteConfig& config);

/// Class with the highest score, ties broken by `rule` against the neighbor list.
/// `scores` is indexed by class id.
Label resolve_vote(std::span<const double> scores, std::span<const Neighbor> neighbors,
                   std::span<const Label> labels, TieRule rule);

/// Votes every neighbor list, truncated to its first k entries when k > 0.
LabelVector vote_all(const std::vector<std::vector<Neighbor>>& neighbor_lists,
                     std::span<const Label> labels, const VoteConfig& config, std::size_t k = 0);

/**
 * Whole-dataset correction: each sample is relabeled by a vote over its k
 * nearest other samples, all votes read the pre-pass labels. Takes only the
 * current labels, never ground truth.
 */
template <typename Scalar>
LabelVector correct_iterknn(std::span<const Label> current_labels,
                            const BasicEmbeddingSet<Scalar>& embeddings, std::size_t k, Metric metric,
                            const VoteConfig& vote_config) {
  if (current_labels.size() != embeddings.size()) {
    throw std::invalid_argument("correct_iterknn: labels not row-aligned with embeddings");
  }
  if (k >= embeddings.size()) {
    throw std::invalid_argument("correct_iterknn: k must be < n");
  }
  const BruteForceSearch<Scalar> search(embeddings, metric);
  return vote_all(search.query_all(embeddings, k, true), current_labels, vote_config);
}

struct SelectiveCorrection {
  LabelVector labels;
  std::vector<bool> reference_mask;
};

/**
 * Per class (by current label), marks the `per_class_count[c]` samples with
 * the lowest cumulative loss, ties to the lower index. Classes smaller than
 * their count contribute all members.
 */
std::vector<bool> select_reference(std::span<const Label> current_labels,
                                   std::span<const double> cumulative_loss,
                                   std::span<const std::size_t> per_class_count);

/// Per-class counts ceil(percent * class_size / 100) for the current labels.
std::vector<std::size_t> per_class_counts_from_percent(std::span<const Label> current_labels,
                                                       std::uint32_t num_classes, double percent);

namespace detail {

template <typename Scalar>
SelectiveCorrection correct_with_reference(std::span<const Label> current_labels,
                                           const BasicEmbeddingSet<Scalar>& embeddings,
                                           std::vector<bool> mask, std::size_t k, Metric metric,
                                           const VoteConfig& vote_config) {
  std::vector<std::size_t> reference_rows;
  std::vector<std::size_t> query_rows;
  for (std::size_t i = 0; i < mask.size(); ++i) (mask[i] ? reference_rows : query_rows).push_back(i);
  if (reference_rows.empty()) throw std::invalid_argument("correct_selknn: empty reference set");
  if (k < 1 || k > reference_rows.size()) {
    throw std::invalid_argument("correct_selknn: k=" + std::to_string(k) +
                                " exceeds reference set size " + std::to_string(reference_rows.size()));
  }
  SelectiveCorrection out{LabelVector(current_labels.begin(), current_labels.end()), std::move(mask)};
  if (query_rows.empty()) return out;

  const auto reference = embeddings.subset(reference_rows);
  LabelVector reference_labels;
  reference_labels.reserve(reference_rows.size());
  for (auto r : reference_rows) reference_labels.push_back(current_labels[r]);
  const auto queries = embeddings.subset(query_rows);
  const BruteForceSearch<Scalar> search(reference, metric);
  const auto voted = vote_all(search.query_all(queries, k, false), reference_labels, vote_config);
  for (std::size_t q = 0; q < query_rows.size(); ++q) out.labels[query_rows[q]] = voted[q];
  return out;
}

}  // namespace detail

/**
 * Loss-ranked selective correction. The lowest-cumulative-loss samples of
 * each class form the trusted reference set and keep their labels; every
 * other sample is relabeled by a vote over its k nearest reference samples.
 */
template <typename Scalar>
SelectiveCorrection correct_selknn(std::span<const Label> current_labels,
                                   const BasicEmbeddingSet<Scalar>& embeddings,
                                   std::span<const double> cumulative_loss,
                                   std::span<const std::size_t> per_class_count, std::size_t k,
                                   Metric metric, const VoteConfig& vote_config) {
  if (current_labels.size() != embeddings.size() || cumulative_loss.size() != embeddings.size()) {
    throw std::invalid_argument("correct_selknn: inputs not row-aligned");
  }
  return detail::correct_with_reference(
      current_labels, embeddings, select_reference(current_labels, cumulative_loss, per_class_count),
      k, metric, vote_config);
}

/// Same count M for every class.
template <typename Scalar>
SelectiveCorrection correct_selknn(std::span<const Label> current_labels,
                                   const BasicEmbeddingSet<Scalar>& embeddings,
                                   std::span<const double> cumulative_loss, std::size_t per_class_count,
                                   std::size_t k, Metric metric, const VoteConfig& vote_config) {
  if (per_class_count < 1) throw std::invalid_argument("correct_selknn: M must be >= 1");
  const Label max_label =
      current_labels.empty() ? 0 : *std::max_element(current_labels.begin(), current_labels.end());
  const std::vector<std::size_t> counts(static_cast<std::size_t>(max_label) + 1, per_class_count);
  return correct_selknn(current_labels, embeddings, cumulative_loss, std::span(counts), k, metric,
                        vote_config);
}

/// Test-time classification by vote over stored reference embeddings.
template <typename Scalar>
LabelVector predict_deep_knn(const BasicEmbeddingSet<Scalar>& reference,
                             std::span<const Label> reference_labels,
                             const BasicEmbeddingSet<Scalar>& queries, std::size_t k, Metric metric,
                             const VoteConfig& vote_config) {
  if (reference.dim() != queries.dim()) throw std::invalid_argument("predict_deep_knn: dimension mismatch");
  if (reference_labels.size() != reference.size()) {
    throw std::invalid_argument("predict_deep_knn: labels not row-aligned with reference");
  }
  const BruteForceSearch<Scalar> search(reference, metric);
  return vote_all(search.query_all(queries, k, false), reference_labels, vote_config);
}

}  // namespace knnclean

#endif  // KNNCLEAN_KNN_HPP
