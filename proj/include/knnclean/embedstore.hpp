#ifndef KNNCLEAN_EMBEDSTORE_HPP
#define KNNCLEAN_EMBEDSTORE_HPP

#include "knnclean/types.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

namespace knnclean {

/**
 * Dense n x d feature matrix, row-major, one sample per row.
 *
 * Construction validates that the matrix is non-empty and every scalar is
 * finite; after that the set is immutable.
 */
template <typename Scalar>
class BasicEmbeddingSet {
 public:
  using scalar_type = Scalar;
  using matrix_type = RowMatrix<Scalar>;

  BasicEmbeddingSet() = default;

  explicit BasicEmbeddingSet(matrix_type data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw std::invalid_argument("embedding set needs n >= 1 and d >= 1");
    }
    for (Eigen::Index i = 0; i < data_.rows(); ++i) {
      for (Eigen::Index j = 0; j < data_.cols(); ++j) {
        if (!std::isfinite(data_(i, j))) {
          throw NumericError("non-finite scalar at row " + std::to_string(i) + ", column " +
                             std::to_string(j));
        }
      }
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }

  auto row(std::size_t i) const { return data_.row(static_cast<Eigen::Index>(i)); }
  const Scalar* row_data(std::size_t i) const { return data_.data() + i * dim(); }

  const matrix_type& matrix() const { return data_; }

  template <typename Other>
  BasicEmbeddingSet<Other> cast() const {
    return BasicEmbeddingSet<Other>(data_.template cast<Other>());
  }

  /// Rows selected by index, in the given order.
  template <typename IndexRange>
  BasicEmbeddingSet subset(const IndexRange& indices) const {
    matrix_type out(static_cast<Eigen::Index>(std::size(indices)), data_.cols());
    Eigen::Index r = 0;
    for (auto i : indices) out.row(r++) = data_.row(static_cast<Eigen::Index>(i));
    return BasicEmbeddingSet(std::move(out));
  }

  friend bool operator==(const BasicEmbeddingSet& a, const BasicEmbeddingSet& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  matrix_type data_;
};

using EmbeddingSet = BasicEmbeddingSet<float>;
using EmbeddingSetD = BasicEmbeddingSet<double>;

/// Embeddings plus true / noisy / current label arrays.
struct LabeledDataset {
  EmbeddingSet embeddings;
  std::optional<LabelVector> true_labels;
  LabelVector noisy_labels;
  LabelVector current_labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const { return embeddings.size(); }
  std::size_t dim() const { return embeddings.dim(); }

  /// Throws std::invalid_argument when any invariant is broken.
  void validate() const;

  /// Rows selected by index, labels carried along.
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

LabeledDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);

/// EMB1 byte image of a dataset; save_dataset writes exactly these bytes.
std::string encode_dataset(const LabeledDataset& dataset);
/// Parses an EMB1 byte image. Errors carry the byte offset of the problem.
LabeledDataset decode_dataset(const std::string& bytes);

/**
 * Isotropic unit-variance Gaussian clusters, one per class, with centers
 * mutually at least `separation` apart. Samples are stored class-major
 * (all of class 0, then class 1, ...). All three label arrays equal the
 * generating class. Pure function of its arguments.
 */
LabeledDataset synth_gaussian(std::uint32_t num_classes, std::size_t per_class, std::size_t dim,
                              double separation, std::uint64_t seed);

/// Moves the last `test_per_class` samples of every true class into a second set.
std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& dataset,
                                                          std::size_t test_per_class);

/// Scales every row to unit L2 norm. Throws std::invalid_argument naming a zero row.
template <typename Scalar>
BasicEmbeddingSet<Scalar> normalize_rows(const BasicEmbeddingSet<Scalar>& set) {
  RowMatrix<Scalar> out = set.matrix();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double norm2 = 0.0;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      norm2 += static_cast<double>(out(i, j)) * static_cast<double>(out(i, j));
    }
    if (norm2 == 0.0) {
      throw std::invalid_argument("zero-norm row " + std::to_string(i));
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = static_cast<Scalar>(static_cast<double>(out(i, j)) * inv);
    }
  }
  return BasicEmbeddingSet<Scalar>(std::move(out));
}

}  // namespace knnclean

#endif  // KNNCLEAN_EMBEDSTORE_HPP
