#pragma once

#include <string>
#include <vector>

namespace uadce {

// One published comparison row: per-session accuracies plus the printed
// summary columns. The summary columns are pure arithmetic over the session
// values, which makes them exact regression targets for performance_drop and
// average_accuracy.
struct GoldenRow {
  std::string table;
  std::string method;
  std::vector<double> sessions;
  double printed_pd = 0.0;
  double printed_avg = 0.0;
  // Averages are held binding only for this implementation's own method rows;
  // other methods' averages are reported informationally (two rows in the
  // source tables disagree with their own session values).
  bool avg_binding = false;
};

const std::vector<GoldenRow>& golden_rows();

struct GoldenCheck {
  std::string table;
  std::string method;
  std::string field;  // "pd" or "average"
  double printed = 0.0;
  double computed = 0.0;
  bool binding = false;
  bool ok = false;  // |round2(computed) - printed| <= 0.01
};

// Recomputes every row's summary columns from its session values. mismatches,
// when given, receives the number of binding checks that failed.
std::vector<GoldenCheck> verify_goldens(int* mismatches = nullptr);

std::string render_golden_report(const std::vector<GoldenCheck>& checks);

}  // namespace uadce
