#include "knnclean/embedstore.hpp"

#include "knnclean/rng.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

namespace knnclean {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kFlagTrueLabels = 1u;
constexpr std::size_t kHeaderBytes = 24;

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xffu));
  }
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  }
  return v;
}

[[noreturn]] void format_error(std::size_t offset, const std::string& what) {
  throw FormatError(what + " at byte offset " + std::to_string(offset));
}

void check_labels(const LabelVector& labels, std::uint32_t num_classes, const char* name) {
  if (labels.size() != 0 && *std::max_element(labels.begin(), labels.end()) >= num_classes) {
    throw std::invalid_argument(std::string(name) + ": label out of range");
  }
}

}  // namespace

void LabeledDataset::validate() const {
  const std::size_t n = embeddings.size();
  if (n == 0) throw std::invalid_argument("dataset is empty");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (noisy_labels.size() != n || current_labels.size() != n ||
      (true_labels && true_labels->size() != n)) {
    throw std::invalid_argument("label arrays must have one entry per sample");
  }
  check_labels(noisy_labels, num_classes, "noisy_labels");
  check_labels(current_labels, num_classes, "current_labels");
  if (true_labels) check_labels(*true_labels, num_classes, "true_labels");
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  auto pick = [&](const LabelVector& src) {
    LabelVector out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(src.at(i));
    return out;
  };
  LabeledDataset out;
  out.embeddings = embeddings.subset(indices);
  out.noisy_labels = pick(noisy_labels);
  out.current_labels = pick(current_labels);
  if (true_labels) out.true_labels = pick(*true_labels);
  out.num_classes = num_classes;
  return out;
}

std::string encode_dataset(const LabeledDataset& dataset) {
  dataset.validate();
  const std::size_t n = dataset.size();
  const std::size_t d = dataset.dim();
  std::string out;
  out.reserve(kHeaderBytes + 4 * (n * d + 3 * n));
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, dataset.num_classes);
  put_u32(out, dataset.true_labels ? kFlagTrueLabels : 0u);
  const auto& m = dataset.embeddings.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put_u32(out, std::bit_cast<std::uint32_t>(m(i, j)));
    }
  }
  for (Label y : dataset.noisy_labels) put_u32(out, y);
  for (Label y : dataset.current_labels) put_u32(out, y);
  if (dataset.true_labels) {
    for (Label y : *dataset.true_labels) put_u32(out, y);
  }
  return out;
}

LabeledDataset decode_dataset(const std::string& bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    format_error(0, "bad magic (expected EMB1)");
  }
  if (bytes.size() < kHeaderBytes) format_error(bytes.size(), "truncated header");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFormatVersion) {
    format_error(4, "unsupported format version " + std::to_string(version));
  }
  const std::uint32_t n = get_u32(bytes, 8);
  const std::uint32_t d = get_u32(bytes, 12);
  const std::uint32_t num_classes = get_u32(bytes, 16);
  const std::uint32_t flags = get_u32(bytes, 20);
  if (n < 1) format_error(8, "n must be >= 1");
  if (d < 1) format_error(12, "d must be >= 1");
  if (num_classes < 2) format_error(16, "C must be >= 2");
  if ((flags & ~kFlagTrueLabels) != 0) format_error(20, "unknown flag bits");
  const bool has_true = (flags & kFlagTrueLabels) != 0;

  const std::uint64_t label_arrays = has_true ? 3 : 2;
  const std::uint64_t expected =
      kHeaderBytes + 4ull * (static_cast<std::uint64_t>(n) * d + label_arrays * n);
  if (bytes.size() < expected) format_error(bytes.size(), "truncated payload");
  if (bytes.size() > expected) format_error(expected, "trailing bytes after payload");

  std::size_t offset = kHeaderBytes;
  RowMatrix<float> data(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, offset += 4) {
      const float v = std::bit_cast<float>(get_u32(bytes, offset));
      if (!std::isfinite(v)) format_error(offset, "non-finite scalar");
      data(i, j) = v;
    }
  }
  auto read_labels = [&] {
    LabelVector labels(n);
    for (auto& y : labels) {
      y = get_u32(bytes, offset);
      if (y >= num_classes) format_error(offset, "label out of range");
      offset += 4;
    }
    return labels;
  };

  LabeledDataset out;
  out.embeddings = EmbeddingSet(std::move(data));
  out.num_classes = num_classes;
  out.noisy_labels = read_labels();
  out.current_labels = read_labels();
  if (has_true) out.true_labels = read_labels();
  return out;
}

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
  const std::string bytes = encode_dataset(dataset);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return decode_dataset(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

LabeledDataset synth_gaussian(std::uint32_t num_classes, std::size_t per_class, std::size_t dim,
                              double separation, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("synth_gaussian: need at least 2 classes");
  if (per_class < 1) throw std::invalid_argument("synth_gaussian: per_class must be >= 1");
  if (dim < 1) throw std::invalid_argument("synth_gaussian: dim must be >= 1");
  if (!(separation > 0.0)) throw std::invalid_argument("synth_gaussian: separation must be > 0");

  std::mt19937_64 gen(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto C = static_cast<Eigen::Index>(num_classes);
  const auto D = static_cast<Eigen::Index>(dim);

  // Centers on a sphere of growing radius; rejection keeps them mutually
  // `separation` apart. The radius grows whenever a sphere is too crowded.
  RowMatrix<double> centers(C, D);
  double radius = separation;
  constexpr int kMaxRejections = 1000;
  for (Eigen::Index placed = 0; placed < C;) {
    int rejections = 0;
    bool accepted = false;
    while (!accepted && rejections < kMaxRejections) {
      Vector<double> dir(D);
      for (auto& v : dir) v = normal(gen);
      const double norm = dir.norm();
      if (norm == 0.0) continue;
      Vector<double> candidate = dir * (radius / norm);
      accepted = true;
      for (Eigen::Index c = 0; c < placed; ++c) {
        if ((centers.row(c).transpose() - candidate).norm() < separation) {
          accepted = false;
          break;
        }
      }
      if (accepted) {
        centers.row(placed++) = candidate.transpose();
      } else {
        ++rejections;
      }
    }
    if (!accepted) {
      radius *= 1.25;
      placed = 0;
    }
  }

  const std::size_t n = per_class * num_classes;
  RowMatrix<float> data(static_cast<Eigen::Index>(n), D);
  LabelVector labels(n);
  std::size_t row = 0;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s, ++row) {
      for (Eigen::Index j = 0; j < D; ++j) {
        data(static_cast<Eigen::Index>(row), j) = static_cast<float>(centers(c, j) + normal(gen));
      }
      labels[row] = c;
    }
  }

  LabeledDataset out;
  out.embeddings = EmbeddingSet(std::move(data));
  out.true_labels = labels;
  out.noisy_labels = labels;
  out.current_labels = std::move(labels);
  out.num_classes = num_classes;
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& dataset,
                                                          std::size_t test_per_class) {
  if (!dataset.true_labels) {
    throw std::invalid_argument("split_per_class needs true labels");
  }
  const auto& truth = *dataset.true_labels;
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) by_class[truth[i]].push_back(i);

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (const auto& members : by_class) {
    if (members.size() <= test_per_class) {
      throw std::invalid_argument("split_per_class: a class has too few samples");
    }
    const auto cut = members.end() - static_cast<std::ptrdiff_t>(test_per_class);
    train_idx.insert(train_idx.end(), members.begin(), cut);
    test_idx.insert(test_idx.end(), cut, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {dataset.subset(train_idx), dataset.subset(test_idx)};
}

}  // namespace knnclean
