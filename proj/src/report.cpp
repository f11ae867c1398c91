#include "uadce/report.hpp"

#include <cstdio>

#include "uadce/error.hpp"

namespace uadce {

using nlohmann::json;

namespace {

std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string fixed2(double v) { return fixed(v, 2); }

const char* mode_name(SelectionMode m) {
  switch (m) {
    case SelectionMode::EqualQuota: return "equal_quota";
    case SelectionMode::Proportions: return "proportions";
    case SelectionMode::Plain: return "plain";
  }
  return "equal_quota";
}

}  // namespace

JsonlWriter::JsonlWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw_io("cannot open audit file: " + path);
}

void JsonlWriter::write(const json& record) {
  out_ << record.dump() << '\n';
  out_.flush();
  if (!out_) throw_io("write failed: " + path_);
}

json config_json(const ExperimentConfig& c) {
  json proportions = json::object();
  for (const auto& [cls, p] : c.proportions) proportions[std::to_string(cls)] = p;
  return json{
      {"experiment",
       {{"name", c.name},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"ablation", ablation_name(c.ablation)}}},
      {"dataset",
       {{"kind", c.dataset_kind},
        {"path", c.dataset_path},
        {"classes", c.classes},
        {"samples_per_class", c.samples_per_class},
        {"dimension", c.dimension},
        {"separation", c.separation}}},
      {"protocol",
       {{"base_classes", c.base_classes},
        {"n_way", c.n_way},
        {"k_shot", c.k_shot},
        {"sessions", c.sessions},
        {"unlabeled_per_session", c.unlabeled_per_session},
        {"train_fraction", c.train_fraction},
        {"cross_session_distractors", c.cross_session_distractors}}},
      {"backbone",
       {{"kind", c.backbone_kind},
        {"hidden", c.hidden},
        {"feature_dim", c.feature_dim},
        {"activation", c.activation},
        {"image_side", c.image_side},
        {"channels", c.channels}}},
      {"optimizer",
       {{"base_lr", c.base_lr},
        {"incremental_lr", c.incremental_lr},
        {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},
        {"lr_decay_epochs", c.lr_decay_epochs},
        {"lr_decay_rate", c.lr_decay_rate}}},
      {"train",
       {{"base_epochs", c.base_epochs},
        {"supervised_epochs", c.supervised_epochs},
        {"extra_epochs", c.extra_epochs},
        {"batch_size", c.batch_size},
        {"freeze_groups", c.freeze_groups},
        {"labeled_first", c.labeled_first}}},
      {"equilibrium",
       {{"enabled", c.equilibrium_enabled},
        {"gamma", c.gamma},
        {"iterations", c.iterations},
        {"iteration_budget", c.iteration_budget},
        {"policy", mode_name(c.selection_mode)},
        {"proportions", proportions}}},
      {"memory",
       {{"per_class", c.memory_per_class},
        {"policy", c.memory_policy},
        {"pseudo_in_memory", c.pseudo_in_memory}}},
      {"distill",
       {{"zeta_base", c.zeta_base},
        {"temperature", c.temperature},
        {"keep_fraction", c.keep_fraction},
        {"noise_passes", c.noise_passes},
        {"noise_scale", c.noise_scale},
        {"eq5_literal", c.eq5_literal}}},
      {"eval",
       {{"prototypes", c.prototypes_exemplars_only ? "exemplars_only" : "exemplars_and_labeled"},
        {"normalize_features", c.normalize_features}}},
      {"checkpoint", {{"enabled", c.checkpoints_enabled}}}};
}

json session_metrics_json(const SessionMetrics& m) {
  json j{{"session_index", m.session_index}, {"overall", m.overall_acc},
         {"base", m.base_acc},               {"timestamp", m.timestamp},
         {"wall_time", m.wall_time},         {"test_count", m.test_count}};
  if (m.novel_acc) j["novel"] = *m.novel_acc;
  if (m.head_overall) j["head_overall"] = *m.head_overall;
  if (m.head_base) j["head_base"] = *m.head_base;
  if (m.head_novel) j["head_novel"] = *m.head_novel;
  return j;
}

SessionMetrics session_metrics_from_json(const json& j) {
  SessionMetrics m;
  m.session_index = j.value("session_index", 0);
  m.overall_acc = j.value("overall", 0.0);
  m.base_acc = j.value("base", 0.0);
  if (j.contains("novel")) m.novel_acc = j["novel"].get<double>();
  if (j.contains("head_overall")) m.head_overall = j["head_overall"].get<double>();
  if (j.contains("head_base")) m.head_base = j["head_base"].get<double>();
  if (j.contains("head_novel")) m.head_novel = j["head_novel"].get<double>();
  m.timestamp = j.value("timestamp", "");
  m.wall_time = j.value("wall_time", 0.0);
  m.test_count = j.value("test_count", 0);
  return m;
}

void write_metrics_csv(const RunReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot write " + path);
  out << "session_index,overall,base,novel\n";
  for (const SessionMetrics& m : report.sessions) {
    out << m.session_index << ',' << fixed2(m.overall_acc) << ',' << fixed2(m.base_acc) << ',';
    if (m.novel_acc) out << fixed2(*m.novel_acc);
    out << '\n';
  }
  if (!out) throw_io("write failed: " + path);
}

void write_report_json(const RunReport& report, const std::string& path) {
  json sessions = json::array();
  for (const SessionMetrics& m : report.sessions) sessions.push_back(session_metrics_json(m));
  json j{{"name", report.name},
         {"seed", report.seed},
         {"ablation", ablation_name(report.ablation)},
         {"sessions", sessions},
         {"pd", report.pd},
         {"average_acc", report.average_acc},
         {"output_dir", report.output_dir},
         {"audit_files", report.audit_files},
         {"config", report.config_snapshot}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw_io("write failed: " + path);
}

RunReport load_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open report: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw_io(path + ": " + e.what());
  }
  RunReport r;
  r.name = j.value("name", "");
  r.seed = j.value("seed", uint64_t{0});
  r.ablation = ablation_from_name(j.value("ablation", "none"));
  for (const json& s : j.value("sessions", json::array()))
    r.sessions.push_back(session_metrics_from_json(s));
  r.pd = j.value("pd", 0.0);
  r.average_acc = j.value("average_acc", 0.0);
  r.output_dir = j.value("output_dir", "");
  r.audit_files = j.value("audit_files", std::vector<std::string>{});
  r.config_snapshot = j.value("config", json::object());
  return r;
}

void write_accuracy_svg(const RunReport& report, const std::string& path) {
  if (report.sessions.empty()) throw_contract("report has no sessions to plot");
  const double left = 56, right = 624, top = 28, bottom = 352;
  const size_t n = report.sessions.size();
  auto x_at = [&](size_t k) {
    return n == 1 ? (left + right) / 2.0
                  : left + (right - left) * static_cast<double>(k) / static_cast<double>(n - 1);
  };
  auto y_at = [&](double acc) { return bottom - (bottom - top) * acc / 100.0; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
       "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";

  for (int tick = 0; tick <= 100; tick += 20) {
    std::string y = fixed(y_at(tick), 1);
    s += "<line x1=\"" + fixed(left, 1) + "\" y1=\"" + y + "\" x2=\"" + fixed(right, 1) +
         "\" y2=\"" + y + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + fixed(left - 8, 1) + "\" y=\"" + y +
         "\" text-anchor=\"end\" dominant-baseline=\"middle\" fill=\"#444444\">" +
         std::to_string(tick) + "</text>\n";
  }
  for (size_t k = 0; k < n; ++k) {
    std::string x = fixed(x_at(k), 1);
    s += "<text x=\"" + x + "\" y=\"" + fixed(bottom + 18, 1) +
         "\" text-anchor=\"middle\" fill=\"#444444\">" +
         std::to_string(report.sessions[k].session_index) + "</text>\n";
  }
  s += "<text x=\"" + fixed((left + right) / 2, 1) + "\" y=\"" + fixed(bottom + 36, 1) +
       "\" text-anchor=\"middle\" fill=\"#222222\">session</text>\n";
  s += "<text x=\"14\" y=\"" + fixed((top + bottom) / 2, 1) +
       "\" text-anchor=\"middle\" fill=\"#222222\" transform=\"rotate(-90 14 " +
       fixed((top + bottom) / 2, 1) + ")\">accuracy (%)</text>\n";
  s += "<line x1=\"" + fixed(left, 1) + "\" y1=\"" + fixed(top, 1) + "\" x2=\"" + fixed(left, 1) +
       "\" y2=\"" + fixed(bottom, 1) + "\" stroke=\"#444444\"/>\n";
  s += "<line x1=\"" + fixed(left, 1) + "\" y1=\"" + fixed(bottom, 1) + "\" x2=\"" +
       fixed(right, 1) + "\" y2=\"" + fixed(bottom, 1) + "\" stroke=\"#444444\"/>\n";

  struct Series {
    const char* label;
    const char* color;
    std::vector<std::pair<size_t, double>> points;
  };
  Series series[3] = {{"overall", "#1f77b4", {}}, {"base", "#2ca02c", {}}, {"novel", "#d62728", {}}};
  for (size_t k = 0; k < n; ++k) {
    const SessionMetrics& m = report.sessions[k];
    series[0].points.emplace_back(k, m.overall_acc);
    series[1].points.emplace_back(k, m.base_acc);
    if (m.novel_acc) series[2].points.emplace_back(k, *m.novel_acc);
  }
  for (const Series& sr : series) {
    if (sr.points.empty()) continue;
    std::string pts;
    for (const auto& [k, acc] : sr.points)
      pts += fixed(x_at(k), 1) + "," + fixed(y_at(acc), 1) + " ";
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + sr.color +
         "\" stroke-width=\"2\"/>\n";
    for (const auto& [k, acc] : sr.points)
      s += "<circle cx=\"" + fixed(x_at(k), 1) + "\" cy=\"" + fixed(y_at(acc), 1) +
           "\" r=\"3\" fill=\"" + sr.color + "\"/>\n";
  }
  double lx = left + 8;
  for (const Series& sr : series) {
    if (sr.points.empty()) continue;
    s += "<rect x=\"" + fixed(lx, 1) + "\" y=\"8\" width=\"12\" height=\"12\" fill=\"" +
         sr.color + "\"/>\n";
    s += "<text x=\"" + fixed(lx + 16, 1) + "\" y=\"18\" fill=\"#222222\">" + sr.label +
         "</text>\n";
    lx += 90;
  }
  s += "<text x=\"" + fixed(right, 1) + "\" y=\"18\" text-anchor=\"end\" fill=\"#222222\">" +
       report.name + " (pd " + fixed2(report.pd) + ", avg " + fixed2(report.average_acc) +
       ")</text>\n";
  s += "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot write " + path);
  out << s;
  if (!out) throw_io("write failed: " + path);
}

std::string render_report_text(const RunReport& report) {
  std::string s = report.name + "  seed=" + std::to_string(report.seed) +
                  "  ablation=" + ablation_name(report.ablation) + "\n";
  s += "session   overall      base     novel\n";
  char buf[128];
  for (const SessionMetrics& m : report.sessions) {
    std::string novel = m.novel_acc ? fixed2(*m.novel_acc) : std::string("-");
    std::snprintf(buf, sizeof(buf), "%7d %9s %9s %9s\n", m.session_index,
                  fixed2(m.overall_acc).c_str(), fixed2(m.base_acc).c_str(), novel.c_str());
    s += buf;
    if (m.head_overall) {
      std::string head_novel = m.head_novel ? fixed2(*m.head_novel) : std::string("-");
      std::snprintf(buf, sizeof(buf), "%7s %9s %9s %9s  (head)\n", "",
                    fixed2(*m.head_overall).c_str(),
                    m.head_base ? fixed2(*m.head_base).c_str() : "-", head_novel.c_str());
      s += buf;
    }
  }
  s += "pd=" + fixed2(report.pd) + "  average=" + fixed2(report.average_acc) + "\n";
  return s;
}

}  // namespace uadce
