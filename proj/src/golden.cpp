#include "uadce/golden.hpp"

#include <cmath>
#include <cstdio>

#include "uadce/trainer.hpp"

namespace uadce {

namespace {

std::vector<GoldenRow> build_rows() {
  // clang-format off
  return {
      // 100-class fine-grained benchmark, 11 sessions.
      {"cub200", "Ft-CNN",     {68.68, 44.81, 32.26, 25.83, 25.62, 25.22, 20.84, 16.77, 18.82, 18.25, 17.18}, 51.50, 28.57, false},
      {"cub200", "Joint-CNN",  {68.68, 62.43, 57.23, 52.80, 49.50, 46.10, 42.80, 40.10, 38.70, 37.10, 35.60}, 33.08, 48.28, false},
      {"cub200", "iCaRL",      {68.68, 52.65, 48.61, 44.16, 36.62, 29.52, 27.83, 26.26, 24.01, 23.89, 21.16}, 47.52, 36.67, false},
      {"cub200", "EEIL",       {68.68, 53.63, 47.91, 44.20, 36.30, 27.46, 25.93, 24.70, 23.95, 24.13, 22.11}, 46.57, 36.27, false},
      {"cub200", "NCM",        {68.68, 57.12, 44.21, 28.78, 26.71, 25.66, 24.62, 21.52, 20.12, 20.06, 19.87}, 48.81, 32.49, false},
      {"cub200", "TOPIC",      {68.68, 62.49, 54.81, 49.99, 45.25, 41.40, 38.35, 35.36, 32.22, 28.31, 26.28}, 42.40, 43.92, false},
      {"cub200", "SAKD",       {68.23, 60.45, 55.70, 50.45, 45.72, 42.90, 40.89, 38.77, 36.51, 34.87, 32.96}, 35.27, 46.13, false},
      {"cub200", "SPPR",       {68.68, 61.85, 57.43, 52.68, 50.19, 46.88, 44.65, 43.07, 40.17, 39.63, 37.33}, 31.35, 49.32, false},
      {"cub200", "CEC",        {75.85, 71.94, 68.50, 63.50, 62.43, 58.27, 57.73, 55.81, 54.83, 53.52, 52.28}, 23.57, 61.33, false},
      {"cub200", "ERDIL",      {73.52, 71.09, 66.13, 63.25, 59.49, 59.89, 58.64, 57.72, 56.15, 54.75, 52.28}, 21.24, 61.17, false},
      {"cub200", "SFMS",       {68.78, 59.37, 59.32, 54.96, 52.58, 49.81, 48.09, 46.32, 44.33, 43.43, 43.23}, 25.55, 51.84, false},
      {"cub200", "IDLVQ-C",    {77.37, 74.72, 70.28, 67.13, 65.34, 63.52, 62.10, 61.54, 59.04, 58.68, 57.81}, 19.56, 65.18, false},
      {"cub200", "FACT",       {75.90, 73.23, 70.84, 66.13, 65.56, 62.15, 61.74, 59.83, 58.41, 57.89, 56.94}, 18.96, 64.42, false},
      {"cub200", "MetaFSCIL",  {75.90, 72.41, 68.78, 64.78, 62.96, 59.99, 58.30, 56.85, 54.78, 53.82, 52.64}, 23.26, 61.92, false},
      {"cub200", "Liu et al.", {75.90, 72.14, 68.64, 63.76, 62.58, 59.11, 57.82, 55.89, 54.92, 53.58, 52.39}, 23.51, 61.52, false},
      {"cub200", "SS-iCaRL",   {69.89, 61.24, 55.81, 50.99, 48.18, 46.91, 43.99, 39.78, 37.50, 34.54, 31.33}, 38.56, 47.29, false},
      {"cub200", "SS-NCM",     {69.89, 61.91, 55.51, 51.71, 49.68, 46.11, 42.19, 39.03, 37.96, 34.05, 32.60}, 37.24, 47.33, false},
      {"cub200", "SS-NCM-CNN", {69.89, 64.87, 59.82, 55.14, 52.48, 49.60, 47.87, 45.10, 40.47, 38.10, 35.25}, 34.64, 50.78, false},
      {"cub200", "Semi-SPPR",  {68.44, 61.66, 57.11, 53.41, 50.15, 46.68, 44.93, 43.21, 40.61, 39.21, 37.43}, 31.01, 49.34, false},
      {"cub200", "Semi-CEC",   {75.82, 71.91, 68.52, 63.53, 62.45, 58.27, 57.62, 55.81, 54.85, 53.52, 52.26}, 23.56, 61.32, false},
      {"cub200", "Us-KD",      {74.69, 71.71, 69.04, 65.08, 63.60, 60.96, 59.06, 58.68, 57.01, 56.41, 55.54}, 19.15, 62.89, false},
      {"cub200", "UaD-CE",     {75.17, 73.27, 70.87, 67.14, 65.49, 63.66, 62.42, 62.55, 60.99, 60.48, 60.72}, 14.45, 65.70, true},

      // 100-class small-image benchmark, 9 sessions.
      {"cifar100 fscil", "SPPR",   {76.68, 72.69, 67.61, 63.52, 59.18, 55.82, 53.08, 50.89, 48.12}, 28.56, 60.84, false},
      {"cifar100 fscil", "CEC",    {73.03, 70.86, 65.20, 61.27, 58.03, 55.53, 53.17, 51.19, 49.06}, 23.97, 59.70, false},
      {"cifar100 fscil", "UaD-CE", {75.55, 71.78, 65.47, 62.83, 55.56, 55.08, 50.11, 46.35, 40.46}, 35.09, 58.13, true},
      {"cifar100 semi", "Semi-SPPR",   {76.68, 72.63, 67.59, 63.69, 59.24, 56.02, 53.23, 50.46, 48.29}, 28.39, 60.87, false},
      {"cifar100 semi", "Semi-CEC",    {73.03, 70.72, 65.79, 61.91, 58.64, 55.84, 53.70, 51.37, 49.37}, 23.66, 60.04, false},
      {"cifar100 semi", "SS-iCaRL",    {64.13, 56.02, 51.16, 50.93, 43.46, 41.69, 38.41, 39.25, 34.80}, 29.33, 46.65, false},
      {"cifar100 semi", "SS-NCM-CNN",  {64.13, 62.29, 61.31, 57.96, 54.26, 50.95, 49.02, 45.85, 44.59}, 19.54, 54.51, false},
      {"cifar100 semi", "Us-KD",       {76.85, 69.87, 65.46, 62.36, 59.86, 57.29, 55.22, 54.91, 54.42}, 22.43, 61.80, false},
      {"cifar100 semi", "UaD-CE",      {75.55, 72.17, 68.57, 65.35, 62.80, 60.27, 59.12, 57.05, 54.50}, 21.05, 63.93, true},

      // 100-class downsampled-image benchmark, 9 sessions.
      {"miniimagenet fscil", "SPPR",   {80.27, 74.22, 68.89, 64.43, 60.54, 56.82, 53.81, 51.22, 48.54}, 31.73, 62.08, false},
      {"miniimagenet fscil", "CEC",    {72.22, 67.06, 63.17, 59.79, 56.96, 53.91, 51.36, 49.32, 47.60}, 24.62, 57.93, false},
      {"miniimagenet fscil", "UaD-CE", {72.35, 66.83, 61.94, 58.48, 55.77, 52.20, 49.96, 47.96, 46.81}, 25.54, 56.92, true},
      {"miniimagenet semi", "Semi-SPPR",  {80.10, 74.21, 69.31, 64.83, 60.53, 57.36, 53.70, 52.01, 49.61}, 30.49, 62.41, false},
      {"miniimagenet semi", "Semi-CEC",   {71.91, 66.81, 63.87, 59.41, 56.42, 53.83, 51.92, 49.57, 47.58}, 24.33, 57.92, false},
      {"miniimagenet semi", "SS-iCaRL",   {62.98, 51.64, 47.43, 43.92, 41.69, 38.74, 36.67, 34.54, 33.92}, 29.06, 43.50, false},
      {"miniimagenet semi", "SS-NCM-CNN", {62.98, 60.88, 57.63, 52.80, 50.66, 48.28, 45.27, 41.65, 40.51}, 22.47, 51.26, false},
      {"miniimagenet semi", "Us-KD",      {72.35, 67.22, 62.41, 59.85, 57.81, 55.52, 52.64, 50.86, 50.47}, 21.88, 58.79, false},
      {"miniimagenet semi", "UaD-CE",     {72.35, 66.91, 62.13, 59.89, 57.41, 55.52, 53.26, 51.46, 50.52}, 21.83, 58.82, true},
  };
  // clang-format on
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

bool within_cell(double computed, double printed) {
  return std::fabs(round2(computed) - printed) <= 0.01 + 1e-9;
}

}  // namespace

const std::vector<GoldenRow>& golden_rows() {
  static const std::vector<GoldenRow> rows = build_rows();
  return rows;
}

std::vector<GoldenCheck> verify_goldens(int* mismatches) {
  std::vector<GoldenCheck> out;
  int bad = 0;
  for (const GoldenRow& row : golden_rows()) {
    GoldenCheck pd;
    pd.table = row.table;
    pd.method = row.method;
    pd.field = "pd";
    pd.printed = row.printed_pd;
    pd.computed = performance_drop(row.sessions.front(), row.sessions.back());
    pd.binding = true;
    pd.ok = within_cell(pd.computed, pd.printed);
    if (pd.binding && !pd.ok) ++bad;
    out.push_back(pd);

    GoldenCheck avg;
    avg.table = row.table;
    avg.method = row.method;
    avg.field = "average";
    avg.printed = row.printed_avg;
    avg.computed = average_accuracy(row.sessions);
    avg.binding = row.avg_binding;
    avg.ok = within_cell(avg.computed, avg.printed);
    if (avg.binding && !avg.ok) ++bad;
    out.push_back(avg);
  }
  if (mismatches) *mismatches = bad;
  return out;
}

std::string render_golden_report(const std::vector<GoldenCheck>& checks) {
  std::string s;
  char buf[192];
  int binding_bad = 0, info_bad = 0;
  for (const GoldenCheck& c : checks) {
    const char* status = c.ok ? "ok      " : (c.binding ? "MISMATCH" : "mismatch");
    if (!c.ok) (c.binding ? binding_bad : info_bad) += 1;
    std::snprintf(buf, sizeof(buf), "%s  %-18s %-12s %-7s printed %6.2f  computed %6.2f%s\n",
                  status, c.table.c_str(), c.method.c_str(), c.field.c_str(), c.printed,
                  c.computed, c.binding ? "" : "  (informational)");
    s += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "%zu checks: %d binding mismatch(es), %d informational mismatch(es)\n",
                checks.size(), binding_bad, info_bad);
  s += buf;
  return s;
}

}  // namespace uadce
