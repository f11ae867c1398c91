#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Exercises the shared library strictly through the C header, the way an
// embedding application would.
#include <uadce.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "uadce_capi_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

void set_or_die(uadce_config* cfg, const char* key, const std::string& value) {
  REQUIRE(uadce_config_set(cfg, key, value.c_str()) == UADCE_OK);
}

// Two-session stream small enough for a test run.
uadce_config* tiny(const std::string& out_dir) {
  uadce_config* cfg = nullptr;
  REQUIRE(uadce_config_default(&cfg) == UADCE_OK);
  REQUIRE(cfg != nullptr);
  set_or_die(cfg, "experiment.name", "capi");
  set_or_die(cfg, "experiment.seed", "5");
  set_or_die(cfg, "experiment.output_dir", out_dir);
  set_or_die(cfg, "dataset.classes", "6");
  set_or_die(cfg, "dataset.samples_per_class", "60");
  set_or_die(cfg, "dataset.dimension", "6");
  set_or_die(cfg, "dataset.separation", "5.0");
  set_or_die(cfg, "protocol.base_classes", "4");
  set_or_die(cfg, "protocol.n_way", "2");
  set_or_die(cfg, "protocol.k_shot", "3");
  set_or_die(cfg, "protocol.sessions", "2");
  set_or_die(cfg, "protocol.unlabeled_per_session", "20");
  set_or_die(cfg, "protocol.train_fraction", "0.5");
  set_or_die(cfg, "backbone.hidden", "12");
  set_or_die(cfg, "backbone.feature_dim", "8");
  set_or_die(cfg, "train.base_epochs", "8");
  set_or_die(cfg, "train.supervised_epochs", "4");
  set_or_die(cfg, "train.extra_epochs", "1");
  set_or_die(cfg, "train.batch_size", "8");
  set_or_die(cfg, "train.freeze_groups", "1");
  set_or_die(cfg, "equilibrium.iterations", "2");
  set_or_die(cfg, "equilibrium.iteration_budget", "4");
  set_or_die(cfg, "memory.per_class", "5");
  set_or_die(cfg, "distill.noise_passes", "4");
  return cfg;
}

}  // namespace

TEST_CASE("version and argument guards") {
  CHECK(std::string(uadce_version()) == "1.0.0");
  CHECK(uadce_last_error() != nullptr);

  uadce_config* cfg = nullptr;
  CHECK(uadce_config_load(nullptr, &cfg) == UADCE_ERR_ARGUMENT);
  CHECK(std::string(uadce_last_error()).find("path is null") != std::string::npos);
  CHECK(uadce_config_load("/nonexistent/uadce.ini", &cfg) == UADCE_ERR_IO);
  CHECK(cfg == nullptr);

  REQUIRE(uadce_config_default(&cfg) == UADCE_OK);
  CHECK(uadce_config_set(cfg, "seed", "5") == UADCE_ERR_ARGUMENT);  // no section
  CHECK(uadce_config_set(cfg, nullptr, "5") == UADCE_ERR_ARGUMENT);
  char* value = nullptr;
  CHECK(uadce_config_get(cfg, "experiment.never_set", &value) == UADCE_ERR_ARGUMENT);
  CHECK(value == nullptr);
  CHECK(std::string(uadce_last_error()).find("not set") != std::string::npos);

  CHECK(uadce_report_session_count(nullptr) == 0);
  double pd = 0.0;
  CHECK(uadce_report_summary(nullptr, &pd, nullptr) == UADCE_ERR_ARGUMENT);

  uadce_config_free(cfg);
  uadce_config_free(nullptr);
  uadce_report_free(nullptr);
  uadce_string_free(nullptr);
}

TEST_CASE("set and get round-trip through the handle") {
  uadce_config* cfg = nullptr;
  REQUIRE(uadce_config_default(&cfg) == UADCE_OK);
  REQUIRE(uadce_config_set(cfg, "experiment.seed", "12345") == UADCE_OK);
  char* value = nullptr;
  REQUIRE(uadce_config_get(cfg, "experiment.seed", &value) == UADCE_OK);
  CHECK(std::string(value) == "12345");
  uadce_string_free(value);
  uadce_config_free(cfg);
}

TEST_CASE("config file loading folds environment overrides under later sets") {
  std::string dir = scratch("load");
  std::string path = dir + "/min.ini";
  {
    std::ofstream out(path);
    out << "[experiment]\nname = from_file\nseed = 11\n";
  }

  setenv("UADCE_SEED", "777", 1);
  uadce_config* cfg = nullptr;
  REQUIRE(uadce_config_load(path.c_str(), &cfg) == UADCE_OK);
  char* seed = nullptr;
  REQUIRE(uadce_config_get(cfg, "experiment.seed", &seed) == UADCE_OK);
  CHECK(std::string(seed) == "777");  // env beats the file
  uadce_string_free(seed);

  REQUIRE(uadce_config_set(cfg, "experiment.seed", "11") == UADCE_OK);
  seed = nullptr;
  REQUIRE(uadce_config_get(cfg, "experiment.seed", &seed) == UADCE_OK);
  CHECK(std::string(seed) == "11");  // explicit set beats the env
  uadce_string_free(seed);
  unsetenv("UADCE_SEED");
  uadce_config_free(cfg);
}

TEST_CASE("a run through the C interface reports its metrics") {
  std::string out_dir = scratch("run");
  uadce_config* cfg = tiny(out_dir);

  uadce_report* report = nullptr;
  REQUIRE(uadce_run(cfg, &report) == UADCE_OK);
  REQUIRE(report != nullptr);
  REQUIRE(uadce_report_session_count(report) == 2);

  double overall1 = 0.0, overall2 = 0.0, novel2 = 0.0;
  CHECK(uadce_report_metric(report, 1, "overall", &overall1) == UADCE_OK);
  CHECK(uadce_report_metric(report, 2, "overall", &overall2) == UADCE_OK);
  CHECK(uadce_report_metric(report, 2, "novel", &novel2) == UADCE_OK);
  CHECK(overall1 > 80.0);
  CHECK(novel2 >= 0.0);

  double v = 0.0;
  CHECK(uadce_report_metric(report, 1, "novel", &v) == UADCE_ERR_ARGUMENT);
  CHECK(std::string(uadce_last_error()).find("does not carry") != std::string::npos);
  CHECK(uadce_report_metric(report, 1, "head_overall", &v) == UADCE_ERR_ARGUMENT);
  CHECK(uadce_report_metric(report, 3, "overall", &v) == UADCE_ERR_ARGUMENT);
  CHECK(uadce_report_metric(report, 1, "acc", &v) == UADCE_ERR_ARGUMENT);
  CHECK(std::string(uadce_last_error()).find("unknown metric") != std::string::npos);

  double pd = 0.0, average = 0.0;
  REQUIRE(uadce_report_summary(report, &pd, &average) == UADCE_OK);
  CHECK(pd == doctest::Approx(overall1 - overall2).epsilon(1e-12));
  CHECK(average == doctest::Approx((overall1 + overall2) / 2.0).epsilon(1e-12));

  char* dir = nullptr;
  REQUIRE(uadce_report_output_dir(report, &dir) == UADCE_OK);
  CHECK(std::string(dir) == out_dir);
  uadce_string_free(dir);
  uadce_report_free(report);

  // A fresh handle loaded from the stored report sees the same numbers.
  uadce_report* loaded = nullptr;
  REQUIRE(uadce_report_load(out_dir.c_str(), &loaded) == UADCE_OK);
  REQUIRE(uadce_report_session_count(loaded) == 2);
  double again = 0.0;
  CHECK(uadce_report_metric(loaded, 1, "overall", &again) == UADCE_OK);
  CHECK(again == overall1);
  uadce_report_free(loaded);

  // Re-rendering returns the table and rewrites the plot next to the report.
  fs::remove(fs::path(out_dir) / "accuracy.svg");
  char* text = nullptr;
  REQUIRE(uadce_render_report(out_dir.c_str(), &text) == UADCE_OK);
  CHECK(std::string(text).find("overall") != std::string::npos);
  uadce_string_free(text);
  CHECK(fs::exists(fs::path(out_dir) / "accuracy.svg"));

  uadce_config_free(cfg);
}

TEST_CASE("invalid values set on a handle surface at run time") {
  uadce_config* cfg = tiny(scratch("invalid"));
  REQUIRE(uadce_config_set(cfg, "distill.keep_fraction", "2.0") == UADCE_OK);
  uadce_report* report = nullptr;
  CHECK(uadce_run(cfg, &report) == UADCE_ERR_CONFIG);
  CHECK(report == nullptr);
  CHECK(std::string(uadce_last_error()).find("distill.keep_fraction") != std::string::npos);
  uadce_config_free(cfg);
}

TEST_CASE("golden verification counts the one known erratum") {
  int mismatches = -1;
  char* text = nullptr;
  REQUIRE(uadce_verify_goldens(&mismatches, &text) == UADCE_OK);
  CHECK(mismatches == 1);
  REQUIRE(text != nullptr);
  CHECK(std::string(text).find("pd") != std::string::npos);
  uadce_string_free(text);

  REQUIRE(uadce_verify_goldens(nullptr, nullptr) == UADCE_OK);
}
