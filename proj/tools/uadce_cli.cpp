// Command line front end. Deliberately built against the C interface only, so
// it doubles as a smoke test that the shared library exports everything a
// foreign-language binding would need.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "uadce.h"

namespace {

int fail(const char* verb, uadce_status status) {
  std::fprintf(stderr, "%s failed (%d): %s\n", verb, static_cast<int>(status),
               uadce_last_error());
  return 1;
}

int cmd_run(const std::string& config_path, const std::string& seed, const std::string& out,
            const std::string& ablation) {
  uadce_config* config = nullptr;
  uadce_status st = uadce_config_load(config_path.c_str(), &config);
  if (st != UADCE_OK) return fail("run", st);

  // Flags beat both the file and the environment.
  if (!seed.empty()) st = uadce_config_set(config, "experiment.seed", seed.c_str());
  if (st == UADCE_OK && !out.empty()) {
    st = uadce_config_set(config, "experiment.output_dir", out.c_str());
  }
  if (st == UADCE_OK && !ablation.empty()) {
    st = uadce_config_set(config, "experiment.ablation", ablation.c_str());
  }
  if (st != UADCE_OK) {
    uadce_config_free(config);
    return fail("run", st);
  }

  uadce_report* report = nullptr;
  st = uadce_run(config, &report);
  uadce_config_free(config);
  if (st != UADCE_OK) return fail("run", st);

  char* dir = nullptr;
  uadce_report_output_dir(report, &dir);
  char* text = nullptr;
  st = uadce_render_report(dir, &text);
  if (st == UADCE_OK) {
    std::printf("%s\n", text);
    std::printf("artifacts: %s\n", dir);
  }
  uadce_string_free(text);
  uadce_string_free(dir);
  uadce_report_free(report);
  return st == UADCE_OK ? 0 : fail("run", st);
}

int cmd_report(const std::string& run_dir) {
  char* text = nullptr;
  uadce_status st = uadce_render_report(run_dir.c_str(), &text);
  if (st != UADCE_OK) return fail("report", st);
  std::printf("%s\n", text);
  uadce_string_free(text);
  return 0;
}

int cmd_verify() {
  int mismatches = 0;
  char* text = nullptr;
  uadce_status st = uadce_verify_goldens(&mismatches, &text);
  if (st != UADCE_OK) return fail("verify", st);
  std::printf("%s", text);
  uadce_string_free(text);
  return mismatches > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental training harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(uadce_version()));

  std::string config_path, seed, out, ablation, run_dir;

  auto* run = app.add_subcommand("run", "train a full experiment from an INI config");
  run->add_option("config", config_path, "path to the experiment config")->required();
  run->add_option("--seed", seed, "override experiment.seed");
  run->add_option("--out", out, "override experiment.output_dir");
  run->add_option("--ablation", ablation,
                  "override experiment.ablation (none, no-uad, no-ce, no-aw, cnn-head)");

  auto* report = app.add_subcommand("report", "re-render tables and plot for a stored run");
  report->add_option("run_dir", run_dir, "directory a previous run wrote into")->required();

  auto* verify = app.add_subcommand(
      "verify", "recompute the published comparison tables' summary columns");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, seed, out, ablation);
  if (report->parsed()) return cmd_report(run_dir);
  if (verify->parsed()) return cmd_verify();
  return 1;
}
