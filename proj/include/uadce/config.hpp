#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uadce/class_equilibrium.hpp"

namespace uadce {

// Minimal INI reader: [section] headers, key = value lines, '#' or ';'
// comments, blank lines ignored. Keys are case-sensitive. Parse errors carry
// the line number.
class IniFile {
public:
  static IniFile parse_file(const std::string& path);
  static IniFile parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  // Typed getters. The _or forms fall back to a default; the required forms
  // raise a configuration error naming section.key.
  std::string get_or(const std::string& section, const std::string& key, const std::string& dflt) const;
  int64_t get_int_or(const std::string& section, const std::string& key, int64_t dflt) const;
  double get_real_or(const std::string& section, const std::string& key, double dflt) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool dflt) const;
  std::vector<int> get_int_list_or(const std::string& section, const std::string& key,
                                   const std::vector<int>& dflt) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

private:
  std::string origin_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class Ablation { None, NoUad, NoCe, NoAw, CnnHead };

std::string ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

// Everything run_experiment needs, parsed from one INI file. Defaults follow
// the large-scale CIFAR recipe where the source material gives one, otherwise
// desk-scale values. Environment overrides: UADCE_SEED and UADCE_OUT only.
struct ExperimentConfig {
  // [experiment]
  std::string name = "experiment";
  uint64_t seed = 1;
  std::string output_dir = "runs/experiment";
  Ablation ablation = Ablation::None;

  // [dataset]
  std::string dataset_kind = "synthetic";  // synthetic | columnar | directory
  std::string dataset_path;
  int classes = 10;
  int samples_per_class = 72;
  int dimension = 8;
  double separation = 8.0;

  // [protocol]
  int base_classes = 6;
  int n_way = 2;
  int k_shot = 5;
  int sessions = 3;
  int unlabeled_per_session = 100;
  double train_fraction = 5.0 / 6.0;
  bool cross_session_distractors = false;

  // [backbone]
  std::string backbone_kind = "mlp";  // mlp | conv
  std::vector<int> hidden = {32, 32};
  int feature_dim = 16;
  std::string activation = "tanh";  // tanh | relu
  int image_side = 0;               // conv only; input is side*side
  std::vector<int> channels = {4, 8};

  // [optimizer]
  double base_lr = 0.1;
  double incremental_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_decay_epochs;  // epoch milestones within the base phase
  double lr_decay_rate = 0.1;

  // [train]
  int base_epochs = 50;
  int supervised_epochs = 10;  // per incremental session, on E union labeled
  int extra_epochs = 10;       // per unlabeled iteration
  int batch_size = 16;
  int freeze_groups = 0;  // backbone parameter groups frozen after base session
  bool labeled_first = true;

  // [equilibrium]
  bool equilibrium_enabled = true;
  double gamma = 0.0;  // strict confidence threshold
  int iterations = 10;       // L
  int iteration_budget = 10; // samples added per unlabeled iteration
  SelectionMode selection_mode = SelectionMode::EqualQuota;
  std::map<int, double> proportions;  // class-id -> p, Proportions mode

  // [memory]
  int memory_per_class = 20;       // m
  std::string memory_policy = "herding";  // herding | random
  bool pseudo_in_memory = true;

  // [distill]
  double zeta_base = 1.0;
  double temperature = 2.0;
  double keep_fraction = 0.75;
  int noise_passes = 10;
  double noise_scale = 0.1;  // relative to per-feature std of base training data
  bool eq5_literal = false;

  // [eval]
  bool prototypes_exemplars_only = false;
  bool normalize_features = false;

  // [checkpoint]
  bool checkpoints_enabled = true;

  static ExperimentConfig from_ini(const IniFile& ini);
  static ExperimentConfig load(const std::string& path);  // parse + env overrides + validate

  void apply_env_overrides();
  void validate() const;  // configuration errors name section.key
};

}  // namespace uadce
