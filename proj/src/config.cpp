#include "uadce/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "uadce/error.hpp"

namespace uadce {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

int64_t parse_int(const std::string& raw, const std::string& where) {
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(raw, &pos, 10);
  } catch (const std::exception&) {
    throw_config(where + ": expected integer, got '" + raw + "'");
  }
  if (pos != raw.size()) throw_config(where + ": expected integer, got '" + raw + "'");
  return v;
}

double parse_real(const std::string& raw, const std::string& where) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(raw, &pos);
  } catch (const std::exception&) {
    throw_config(where + ": expected number, got '" + raw + "'");
  }
  if (pos != raw.size()) throw_config(where + ": expected number, got '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& raw, const std::string& where) {
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  throw_config(where + ": expected boolean, got '" + raw + "'");
}

std::vector<std::string> split_csv(const std::string& raw) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream in(raw);
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

}  // namespace

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

IniFile IniFile::parse_string(const std::string& text, const std::string& origin) {
  IniFile ini;
  ini.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw_config(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      ini.sections_[section];
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw_config(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    // strip trailing inline comment introduced by " #"
    size_t hash = value.find(" #");
    if (hash != std::string::npos) value = trim(value.substr(0, hash));
    if (key.empty()) throw_config(origin + ":" + std::to_string(lineno) + ": empty key");
    ini.sections_[section][key] = value;
  }
  return ini;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::optional<std::string> IniFile::get(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void IniFile::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

std::string IniFile::get_or(const std::string& section, const std::string& key,
                            const std::string& dflt) const {
  auto v = get(section, key);
  return v ? *v : dflt;
}

int64_t IniFile::get_int_or(const std::string& section, const std::string& key, int64_t dflt) const {
  auto v = get(section, key);
  return v ? parse_int(*v, section + "." + key) : dflt;
}

double IniFile::get_real_or(const std::string& section, const std::string& key, double dflt) const {
  auto v = get(section, key);
  return v ? parse_real(*v, section + "." + key) : dflt;
}

bool IniFile::get_bool_or(const std::string& section, const std::string& key, bool dflt) const {
  auto v = get(section, key);
  return v ? parse_bool(*v, section + "." + key) : dflt;
}

std::vector<int> IniFile::get_int_list_or(const std::string& section, const std::string& key,
                                          const std::vector<int>& dflt) const {
  auto v = get(section, key);
  if (!v) return dflt;
  std::vector<int> out;
  for (const auto& tok : split_csv(*v))
    out.push_back(static_cast<int>(parse_int(tok, section + "." + key)));
  return out;
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoUad: return "no-uad";
    case Ablation::NoCe: return "no-ce";
    case Ablation::NoAw: return "no-aw";
    case Ablation::CnnHead: return "cnn-head";
  }
  return "none";
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "none" || name.empty()) return Ablation::None;
  if (name == "no-uad") return Ablation::NoUad;
  if (name == "no-ce") return Ablation::NoCe;
  if (name == "no-aw") return Ablation::NoAw;
  if (name == "cnn-head") return Ablation::CnnHead;
  throw_config("unknown ablation '" + name + "' (expected none, no-uad, no-ce, no-aw, cnn-head)");
}

ExperimentConfig ExperimentConfig::from_ini(const IniFile& ini) {
  ExperimentConfig c;
  c.name = ini.get_or("experiment", "name", c.name);
  c.seed = static_cast<uint64_t>(ini.get_int_or("experiment", "seed", static_cast<int64_t>(c.seed)));
  c.output_dir = ini.get_or("experiment", "output_dir", c.output_dir);
  c.ablation = ablation_from_name(ini.get_or("experiment", "ablation", "none"));

  c.dataset_kind = ini.get_or("dataset", "kind", c.dataset_kind);
  c.dataset_path = ini.get_or("dataset", "path", c.dataset_path);
  c.classes = static_cast<int>(ini.get_int_or("dataset", "classes", c.classes));
  c.samples_per_class = static_cast<int>(ini.get_int_or("dataset", "samples_per_class", c.samples_per_class));
  c.dimension = static_cast<int>(ini.get_int_or("dataset", "dimension", c.dimension));
  c.separation = ini.get_real_or("dataset", "separation", c.separation);

  c.base_classes = static_cast<int>(ini.get_int_or("protocol", "base_classes", c.base_classes));
  c.n_way = static_cast<int>(ini.get_int_or("protocol", "n_way", c.n_way));
  c.k_shot = static_cast<int>(ini.get_int_or("protocol", "k_shot", c.k_shot));
  c.sessions = static_cast<int>(ini.get_int_or("protocol", "sessions", c.sessions));
  c.unlabeled_per_session =
      static_cast<int>(ini.get_int_or("protocol", "unlabeled_per_session", c.unlabeled_per_session));
  c.train_fraction = ini.get_real_or("protocol", "train_fraction", c.train_fraction);
  c.cross_session_distractors =
      ini.get_bool_or("protocol", "cross_session_distractors", c.cross_session_distractors);

  c.backbone_kind = ini.get_or("backbone", "kind", c.backbone_kind);
  c.hidden = ini.get_int_list_or("backbone", "hidden", c.hidden);
  c.feature_dim = static_cast<int>(ini.get_int_or("backbone", "feature_dim", c.feature_dim));
  c.activation = ini.get_or("backbone", "activation", c.activation);
  c.image_side = static_cast<int>(ini.get_int_or("backbone", "image_side", c.image_side));
  c.channels = ini.get_int_list_or("backbone", "channels", c.channels);

  c.base_lr = ini.get_real_or("optimizer", "base_lr", c.base_lr);
  c.incremental_lr = ini.get_real_or("optimizer", "incremental_lr", c.incremental_lr);
  c.momentum = ini.get_real_or("optimizer", "momentum", c.momentum);
  c.weight_decay = ini.get_real_or("optimizer", "weight_decay", c.weight_decay);
  c.lr_decay_epochs = ini.get_int_list_or("optimizer", "lr_decay_epochs", c.lr_decay_epochs);
  c.lr_decay_rate = ini.get_real_or("optimizer", "lr_decay_rate", c.lr_decay_rate);

  c.base_epochs = static_cast<int>(ini.get_int_or("train", "base_epochs", c.base_epochs));
  c.supervised_epochs = static_cast<int>(ini.get_int_or("train", "supervised_epochs", c.supervised_epochs));
  c.extra_epochs = static_cast<int>(ini.get_int_or("train", "extra_epochs", c.extra_epochs));
  c.batch_size = static_cast<int>(ini.get_int_or("train", "batch_size", c.batch_size));
  c.freeze_groups = static_cast<int>(ini.get_int_or("train", "freeze_groups", c.freeze_groups));
  c.labeled_first = ini.get_bool_or("train", "labeled_first", c.labeled_first);

  c.equilibrium_enabled = ini.get_bool_or("equilibrium", "enabled", c.equilibrium_enabled);
  c.gamma = ini.get_real_or("equilibrium", "gamma", c.gamma);
  c.iterations = static_cast<int>(ini.get_int_or("equilibrium", "iterations", c.iterations));
  c.iteration_budget = static_cast<int>(ini.get_int_or("equilibrium", "iteration_budget", c.iteration_budget));
  std::string mode = ini.get_or("equilibrium", "policy", "equal_quota");
  if (mode == "equal_quota") c.selection_mode = SelectionMode::EqualQuota;
  else if (mode == "proportions") c.selection_mode = SelectionMode::Proportions;
  else if (mode == "plain") c.selection_mode = SelectionMode::Plain;
  else throw_config("equilibrium.policy: unknown mode '" + mode + "'");
  if (auto raw = ini.get("equilibrium", "proportions"); raw && !raw->empty()) {
    for (const auto& tok : split_csv(*raw)) {
      size_t colon = tok.find(':');
      if (colon == std::string::npos)
        throw_config("equilibrium.proportions: expected class:proportion, got '" + tok + "'");
      int cls = static_cast<int>(parse_int(trim(tok.substr(0, colon)), "equilibrium.proportions"));
      double p = parse_real(trim(tok.substr(colon + 1)), "equilibrium.proportions");
      c.proportions[cls] = p;
    }
  }

  c.memory_per_class = static_cast<int>(ini.get_int_or("memory", "per_class", c.memory_per_class));
  c.memory_policy = ini.get_or("memory", "policy", c.memory_policy);
  c.pseudo_in_memory = ini.get_bool_or("memory", "pseudo_in_memory", c.pseudo_in_memory);

  c.zeta_base = ini.get_real_or("distill", "zeta_base", c.zeta_base);
  c.temperature = ini.get_real_or("distill", "temperature", c.temperature);
  c.keep_fraction = ini.get_real_or("distill", "keep_fraction", c.keep_fraction);
  c.noise_passes = static_cast<int>(ini.get_int_or("distill", "noise_passes", c.noise_passes));
  c.noise_scale = ini.get_real_or("distill", "noise_scale", c.noise_scale);
  c.eq5_literal = ini.get_bool_or("distill", "eq5_literal", c.eq5_literal);

  std::string protos = ini.get_or("eval", "prototypes", "exemplars_and_labeled");
  if (protos == "exemplars_and_labeled") c.prototypes_exemplars_only = false;
  else if (protos == "exemplars_only") c.prototypes_exemplars_only = true;
  else throw_config("eval.prototypes: unknown mode '" + protos + "'");
  c.normalize_features = ini.get_bool_or("eval", "normalize_features", c.normalize_features);

  c.checkpoints_enabled = ini.get_bool_or("checkpoint", "enabled", c.checkpoints_enabled);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  ExperimentConfig c = from_ini(IniFile::parse_file(path));
  c.apply_env_overrides();
  c.validate();
  return c;
}

void ExperimentConfig::apply_env_overrides() {
  if (const char* s = std::getenv("UADCE_SEED")) {
    seed = static_cast<uint64_t>(parse_int(s, "UADCE_SEED"));
  }
  if (const char* o = std::getenv("UADCE_OUT")) {
    if (*o) output_dir = o;
  }
}

void ExperimentConfig::validate() const {
  auto positive = [](int64_t v, const char* key) {
    if (v <= 0) throw_config(std::string(key) + " must be positive");
  };
  auto positive_real = [](double v, const char* key) {
    if (!(v > 0.0)) throw_config(std::string(key) + " must be positive");
  };
  auto nonneg = [](int64_t v, const char* key) {
    if (v < 0) throw_config(std::string(key) + " must be nonnegative");
  };

  if (dataset_kind != "synthetic" && dataset_kind != "columnar" && dataset_kind != "directory")
    throw_config("dataset.kind: unknown kind '" + dataset_kind + "'");
  if (dataset_kind != "synthetic" && dataset_path.empty())
    throw_config("dataset.path required for dataset.kind = " + dataset_kind);
  if (dataset_kind == "synthetic") {
    positive(classes, "dataset.classes");
    positive(samples_per_class, "dataset.samples_per_class");
    positive(dimension, "dataset.dimension");
    positive_real(separation, "dataset.separation");
  }

  positive(base_classes, "protocol.base_classes");
  positive(sessions, "protocol.sessions");
  if (sessions > 1) {
    positive(n_way, "protocol.n_way");
    positive(k_shot, "protocol.k_shot");
  }
  nonneg(unlabeled_per_session, "protocol.unlabeled_per_session");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw_config("protocol.train_fraction must lie in (0, 1)");

  if (backbone_kind != "mlp" && backbone_kind != "conv")
    throw_config("backbone.kind: unknown kind '" + backbone_kind + "'");
  if (activation != "tanh" && activation != "relu")
    throw_config("backbone.activation: unknown activation '" + activation + "'");
  positive(feature_dim, "backbone.feature_dim");
  for (int h : hidden) positive(h, "backbone.hidden");
  if (backbone_kind == "conv") {
    positive(image_side, "backbone.image_side");
    for (int ch : channels) positive(ch, "backbone.channels");
  }

  positive_real(base_lr, "optimizer.base_lr");
  positive_real(incremental_lr, "optimizer.incremental_lr");
  if (momentum < 0.0 || momentum >= 1.0) throw_config("optimizer.momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw_config("optimizer.weight_decay must be nonnegative");
  if (!(lr_decay_rate > 0.0 && lr_decay_rate <= 1.0))
    throw_config("optimizer.lr_decay_rate must lie in (0, 1]");

  nonneg(base_epochs, "train.base_epochs");
  nonneg(supervised_epochs, "train.supervised_epochs");
  nonneg(extra_epochs, "train.extra_epochs");
  positive(batch_size, "train.batch_size");
  nonneg(freeze_groups, "train.freeze_groups");

  if (gamma < 0.0 || gamma > 1.0) throw_config("equilibrium.gamma must lie in [0, 1]");
  nonneg(iterations, "equilibrium.iterations");
  positive(iteration_budget, "equilibrium.iteration_budget");
  if (selection_mode == SelectionMode::Proportions) {
    if (proportions.empty())
      throw_config("equilibrium.proportions required when equilibrium.policy = proportions");
    for (const auto& [cls, p] : proportions)
      if (p < 0.0 || p > 1.0)
        throw_config("equilibrium.proportions: class " + std::to_string(cls) +
                     " proportion must lie in [0, 1]");
  }

  positive(memory_per_class, "memory.per_class");
  if (memory_policy != "herding" && memory_policy != "random")
    throw_config("memory.policy: unknown policy '" + memory_policy + "'");

  // zeta_base == 0 is allowed and turns distillation off entirely; the
  // adaptive schedule itself requires a positive base and is bypassed then.
  if (zeta_base < 0.0) throw_config("distill.zeta_base must be nonnegative");
  positive_real(temperature, "distill.temperature");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw_config("distill.keep_fraction must lie in (0, 1]");
  if (noise_passes < 2) throw_config("distill.noise_passes must be at least 2");
  if (noise_scale < 0.0) throw_config("distill.noise_scale must be nonnegative");
}

}  // namespace uadce
