#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "uadce/trainer.hpp"

namespace uadce {

// Line-delimited JSON sink. One object per write, flushed immediately so the
// file is useful even after a crash.
class JsonlWriter {
public:
  explicit JsonlWriter(const std::string& path);
  void write(const nlohmann::json& record);
  const std::string& path() const { return path_; }

private:
  std::string path_;
  std::ofstream out_;
};

nlohmann::json config_json(const ExperimentConfig& config);
nlohmann::json session_metrics_json(const SessionMetrics& m);
SessionMetrics session_metrics_from_json(const nlohmann::json& j);

// metrics.csv: header session_index,overall,base,novel; fixed two-decimal
// percentages; the novel cell is empty for the base session. No timestamps,
// so identical runs produce identical bytes.
void write_metrics_csv(const RunReport& report, const std::string& path);

void write_report_json(const RunReport& report, const std::string& path);
RunReport load_report_json(const std::string& path);

// Accuracy-versus-session line chart (overall, base, novel), self-contained.
void write_accuracy_svg(const RunReport& report, const std::string& path);

// Fixed-width table of the per-session metrics plus the summary line.
std::string render_report_text(const RunReport& report);

}  // namespace uadce
