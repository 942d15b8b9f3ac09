#include "knnclean/report.hpp"

#include <array>
#include <charconv>
#include <fstream>

namespace knnclean {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 9> kEpisodeColumns = {
    "episode",        "gamma",          "m_percent",          "label_recovery_rate",
    "label_error_rate", "train_accuracy", "test_accuracy_head", "test_accuracy_deep_knn",
    "labels_changed"};

std::string optional_real(const std::optional<double>& value) {
  return value ? format_real(*value) : std::string();
}

json optional_json(const std::optional<double>& value) { return value ? json(*value) : json(nullptr); }

template <typename Fields>
void write_row(std::ostream& os, const Fields& fields) {
  bool first = true;
  for (const auto& f : fields) {
    if (!first) os << ',';
    os << csv_field(f);
    first = false;
  }
  os << "\r\n";
}

}  // namespace

std::string format_real(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), end);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_episode_csv(std::ostream& os, const std::vector<EpisodeReport>& reports) {
  write_row(os, std::vector<std::string>(kEpisodeColumns.begin(), kEpisodeColumns.end()));
  for (const auto& r : reports) {
    write_row(os, std::vector<std::string>{
                      std::to_string(r.episode), format_real(r.gamma), optional_real(r.m_percent),
                      optional_real(r.label_recovery_rate), optional_real(r.label_error_rate),
                      format_real(r.train_accuracy), optional_real(r.test_accuracy_head),
                      optional_real(r.test_accuracy_deep_knn), std::to_string(r.labels_changed)});
  }
}

void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeReport>& reports) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_episode_csv(os, reports);
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  write_row(os, std::vector<std::string>{"epoch", "method", "k", "label_recovery_rate"});
  for (const auto& r : rows) {
    write_row(os, std::vector<std::string>{std::to_string(r.epoch), r.method,
                                           r.k ? std::to_string(*r.k) : std::string(),
                                           format_real(r.recovery)});
  }
}

json to_json(const EpisodeReport& r) {
  return {{"episode", r.episode},
          {"gamma", r.gamma},
          {"m_percent", optional_json(r.m_percent)},
          {"label_recovery_rate", optional_json(r.label_recovery_rate)},
          {"label_error_rate", optional_json(r.label_error_rate)},
          {"train_accuracy", r.train_accuracy},
          {"test_accuracy_head", optional_json(r.test_accuracy_head)},
          {"test_accuracy_deep_knn", optional_json(r.test_accuracy_deep_knn)},
          {"labels_changed", r.labels_changed},
          {"wall_seconds", r.wall_seconds}};
}

json to_json(const FinalMetrics& m) {
  return {{"train_accuracy", m.train_accuracy},
          {"label_recovery_rate", optional_json(m.label_recovery_rate)},
          {"test_accuracy_head", optional_json(m.test_accuracy_head)},
          {"test_accuracy_deep_knn", optional_json(m.test_accuracy_deep_knn)}};
}

json run_summary(const PipelineConfig& config, const std::vector<EpisodeReport>& reports,
                 const FinalMetrics* final_metrics) {
  json episodes = json::array();
  for (const auto& r : reports) episodes.push_back(to_json(r));
  json out = {{"config", to_json(config)}, {"episodes", episodes}, {"completed", final_metrics != nullptr}};
  out["final"] = final_metrics ? to_json(*final_metrics) : json(nullptr);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace knnclean
