#ifndef KNNCLEAN_TYPES_HPP
#define KNNCLEAN_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace knnclean {

using Label = std::uint32_t;
using LabelVector = std::vector<Label>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Configuration or argument error (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent on-disk data (CLI exit code 3).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or diverged optimization (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of worker threads for embarrassingly parallel loops. Reads
/// KNNCLEAN_THREADS when set, else the hardware concurrency.
unsigned worker_threads();

/// Overrides the worker thread count for the current process; 0 restores the default.
void set_worker_threads(unsigned count);

}  // namespace knnclean

#endif  // KNNCLEAN_TYPES_HPP
