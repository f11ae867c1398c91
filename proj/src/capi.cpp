#include "uadce.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "uadce/config.hpp"
#include "uadce/error.hpp"
#include "uadce/golden.hpp"
#include "uadce/report.hpp"
#include "uadce/trainer.hpp"

// The handle types are declared in the C header as incomplete structs, so the
// definitions here must be plain structs in the global namespace.
struct uadce_config {
  uadce::IniFile ini;
};

struct uadce_report {
  uadce::RunReport report;
};

namespace {

thread_local std::string g_last_error;

uadce_status status_from(const uadce::Error& e) {
  switch (e.code()) {
    case uadce::Errc::Config: return UADCE_ERR_CONFIG;
    case uadce::Errc::Contract: return UADCE_ERR_CONTRACT;
    case uadce::Errc::Evaluation: return UADCE_ERR_EVALUATION;
    case uadce::Errc::Policy: return UADCE_ERR_POLICY;
    case uadce::Errc::Io: return UADCE_ERR_IO;
    case uadce::Errc::Training: return UADCE_ERR_TRAINING;
  }
  return UADCE_ERR_UNKNOWN;
}

template <typename Fn>
uadce_status guarded(Fn&& fn) {
  try {
    fn();
    return UADCE_OK;
  } catch (const uadce::Error& e) {
    g_last_error = e.what();
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UADCE_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown failure";
    return UADCE_ERR_UNKNOWN;
  }
}

uadce_status fail_argument(const std::string& msg) {
  g_last_error = msg;
  return UADCE_ERR_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Splits "section.key" at the first dot. Keys never contain dots themselves.
bool split_key(const std::string& full, std::string& section, std::string& key) {
  auto dot = full.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == full.size()) return false;
  section = full.substr(0, dot);
  key = full.substr(dot + 1);
  return true;
}

void fold_env_overrides(uadce::IniFile& ini) {
  if (const char* seed = std::getenv("UADCE_SEED"); seed != nullptr && *seed != '\0') {
    ini.set("experiment", "seed", seed);
  }
  if (const char* out = std::getenv("UADCE_OUT"); out != nullptr && *out != '\0') {
    ini.set("experiment", "output_dir", out);
  }
}

}  // namespace

extern "C" {

const char* uadce_version(void) { return "1.0.0"; }

const char* uadce_last_error(void) { return g_last_error.c_str(); }

uadce_status uadce_config_load(const char* path, uadce_config** out) {
  if (path == nullptr) return fail_argument("uadce_config_load: path is null");
  if (out == nullptr) return fail_argument("uadce_config_load: out is null");
  *out = nullptr;
  return guarded([&] {
    auto ini = uadce::IniFile::parse_file(path);
    fold_env_overrides(ini);
    // Reject files that can never run; values set() later are re-checked at run.
    uadce::ExperimentConfig::from_ini(ini).validate();
    *out = new uadce_config{std::move(ini)};
  });
}

uadce_status uadce_config_default(uadce_config** out) {
  if (out == nullptr) return fail_argument("uadce_config_default: out is null");
  *out = nullptr;
  return guarded([&] {
    uadce::IniFile ini;
    fold_env_overrides(ini);
    *out = new uadce_config{std::move(ini)};
  });
}

uadce_status uadce_config_set(uadce_config* config, const char* key, const char* value) {
  if (config == nullptr) return fail_argument("uadce_config_set: config is null");
  if (key == nullptr) return fail_argument("uadce_config_set: key is null");
  if (value == nullptr) return fail_argument("uadce_config_set: value is null");
  std::string section, name;
  if (!split_key(key, section, name)) {
    return fail_argument(std::string("uadce_config_set: key '") + key +
                         "' is not of the form section.key");
  }
  return guarded([&] { config->ini.set(section, name, value); });
}

uadce_status uadce_config_get(const uadce_config* config, const char* key, char** out_value) {
  if (config == nullptr) return fail_argument("uadce_config_get: config is null");
  if (key == nullptr) return fail_argument("uadce_config_get: key is null");
  if (out_value == nullptr) return fail_argument("uadce_config_get: out_value is null");
  *out_value = nullptr;
  std::string section, name;
  if (!split_key(key, section, name)) {
    return fail_argument(std::string("uadce_config_get: key '") + key +
                         "' is not of the form section.key");
  }
  auto value = config->ini.get(section, name);
  if (!value) {
    return fail_argument(std::string("uadce_config_get: '") + key + "' is not set");
  }
  *out_value = dup_string(*value);
  return UADCE_OK;
}

void uadce_config_free(uadce_config* config) { delete config; }

uadce_status uadce_run(const uadce_config* config, uadce_report** out) {
  if (config == nullptr) return fail_argument("uadce_run: config is null");
  if (out == nullptr) return fail_argument("uadce_run: out is null");
  *out = nullptr;
  return guarded([&] {
    auto parsed = uadce::ExperimentConfig::from_ini(config->ini);
    parsed.validate();
    auto report = uadce::run_experiment(parsed);
    *out = new uadce_report{std::move(report)};
  });
}

uadce_status uadce_report_load(const char* run_dir, uadce_report** out) {
  if (run_dir == nullptr) return fail_argument("uadce_report_load: run_dir is null");
  if (out == nullptr) return fail_argument("uadce_report_load: out is null");
  *out = nullptr;
  return guarded([&] {
    auto report = uadce::load_report_json(std::string(run_dir) + "/report.json");
    *out = new uadce_report{std::move(report)};
  });
}

int uadce_report_session_count(const uadce_report* report) {
  if (report == nullptr) return 0;
  return static_cast<int>(report->report.sessions.size());
}

uadce_status uadce_report_metric(const uadce_report* report, int session_index,
                                 const char* metric, double* out_value) {
  if (report == nullptr) return fail_argument("uadce_report_metric: report is null");
  if (metric == nullptr) return fail_argument("uadce_report_metric: metric is null");
  if (out_value == nullptr) return fail_argument("uadce_report_metric: out_value is null");
  const uadce::SessionMetrics* found = nullptr;
  for (const auto& m : report->report.sessions) {
    if (m.session_index == session_index) {
      found = &m;
      break;
    }
  }
  if (found == nullptr) {
    return fail_argument("uadce_report_metric: no session " + std::to_string(session_index));
  }
  std::string name(metric);
  std::optional<double> value;
  if (name == "overall") {
    value = found->overall_acc;
  } else if (name == "base") {
    value = found->base_acc;
  } else if (name == "novel") {
    value = found->novel_acc;
  } else if (name == "head_overall") {
    value = found->head_overall;
  } else if (name == "head_base") {
    value = found->head_base;
  } else if (name == "head_novel") {
    value = found->head_novel;
  } else {
    return fail_argument("uadce_report_metric: unknown metric '" + name + "'");
  }
  if (!value) {
    return fail_argument("uadce_report_metric: session " + std::to_string(session_index) +
                         " does not carry metric '" + name + "'");
  }
  *out_value = *value;
  return UADCE_OK;
}

uadce_status uadce_report_summary(const uadce_report* report, double* out_pd,
                                  double* out_average) {
  if (report == nullptr) return fail_argument("uadce_report_summary: report is null");
  if (out_pd == nullptr && out_average == nullptr) {
    return fail_argument("uadce_report_summary: both outputs are null");
  }
  if (report->report.sessions.empty()) {
    return fail_argument("uadce_report_summary: report has no sessions");
  }
  if (out_pd != nullptr) *out_pd = report->report.pd;
  if (out_average != nullptr) *out_average = report->report.average_acc;
  return UADCE_OK;
}

uadce_status uadce_report_output_dir(const uadce_report* report, char** out_dir) {
  if (report == nullptr) return fail_argument("uadce_report_output_dir: report is null");
  if (out_dir == nullptr) return fail_argument("uadce_report_output_dir: out_dir is null");
  *out_dir = dup_string(report->report.output_dir);
  return UADCE_OK;
}

void uadce_report_free(uadce_report* report) { delete report; }

uadce_status uadce_render_report(const char* run_dir, char** out_text) {
  if (run_dir == nullptr) return fail_argument("uadce_render_report: run_dir is null");
  if (out_text == nullptr) return fail_argument("uadce_render_report: out_text is null");
  *out_text = nullptr;
  return guarded([&] {
    std::string dir(run_dir);
    auto report = uadce::load_report_json(dir + "/report.json");
    uadce::write_accuracy_svg(report, dir + "/accuracy.svg");
    *out_text = dup_string(uadce::render_report_text(report));
  });
}

uadce_status uadce_verify_goldens(int* out_mismatches, char** out_text) {
  return guarded([&] {
    int mismatches = 0;
    auto checks = uadce::verify_goldens(&mismatches);
    if (out_mismatches != nullptr) *out_mismatches = mismatches;
    if (out_text != nullptr) *out_text = dup_string(uadce::render_golden_report(checks));
  });
}

void uadce_string_free(char* s) { std::free(s); }

}  // extern "C"
