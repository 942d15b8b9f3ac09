#ifndef KNNCLEAN_REPORT_HPP
#define KNNCLEAN_REPORT_HPP

#include "knnclean/pipeline.hpp"

#include "json.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace knnclean {

/// Shortest decimal that round-trips to the same double.
std::string format_real(double value);

/// RFC-4180 field: quoted when it holds a comma, quote, CR or LF.
std::string csv_field(std::string_view text);

/// Header plus one row per episode. Wall time is left to the JSON summary
/// so identical runs give identical bytes.
void write_episode_csv(std::ostream& os, const std::vector<EpisodeReport>& reports);
void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeReport>& reports);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

nlohmann::json to_json(const EpisodeReport& report);
nlohmann::json to_json(const FinalMetrics& metrics);

/// Config echo, per-episode reports (with wall time) and final metrics.
nlohmann::json run_summary(const PipelineConfig& config, const std::vector<EpisodeReport>& reports,
                           const FinalMetrics* final_metrics);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace knnclean

#endif  // KNNCLEAN_REPORT_HPP
