#include "uadce/container.hpp"

#include <cstring>
#include <fstream>

#include "binio.hpp"
#include "uadce/error.hpp"

namespace uadce {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'U', 'A', 'D', 'C', 'E', 'B', 'O', 'X'};
}

void Container::add_blob(std::string name, std::vector<double> values) {
  blobs.emplace_back(std::move(name), std::move(values));
}

const std::vector<double>* Container::find_blob(const std::string& name) const {
  for (const auto& [n, v] : blobs)
    if (n == name) return &v;
  return nullptr;
}

void Container::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot write container: " + path);
  out.write(kMagic, sizeof(kMagic));
  binio::put_u32(out, kFormatVersion);
  json meta_copy = meta;
  meta_copy["format_version"] = kFormatVersion;
  binio::put_string(out, meta_copy.dump());
  binio::put_u32(out, static_cast<uint32_t>(blobs.size()));
  for (const auto& [name, values] : blobs) {
    binio::put_string(out, name);
    binio::put_f64_vec(out, values);
  }
  if (!out) throw_io("write failed: " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open container: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw_io(path + ": not a uadce container");
  uint32_t version = binio::get_u32(in, path);
  if (version != kFormatVersion)
    throw_io(path + ": unsupported container format version " + std::to_string(version));
  Container c;
  std::string meta_text = binio::get_string(in, path);
  try {
    c.meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    throw_io(path + ": corrupt metadata: " + e.what());
  }
  uint32_t count = binio::get_u32(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = binio::get_string(in, path);
    std::vector<double> values = binio::get_f64_vec(in, path);
    c.blobs.emplace_back(std::move(name), std::move(values));
  }
  return c;
}

void save_model(Container& container, Model& model) {
  const BackboneSpec& spec = model.backbone().spec();
  container.meta["model"] = {{"kind", spec.kind},
                             {"input_dim", spec.input_dim},
                             {"hidden", spec.hidden},
                             {"feature_dim", spec.feature_dim},
                             {"activation", spec.activation},
                             {"image_side", spec.image_side},
                             {"channels", spec.channels},
                             {"head_classes", model.known_classes()},
                             {"frozen_groups", model.frozen_groups()}};
  for (const ParamView& p : model.all_params())
    container.add_blob("model." + p.name, p.tensor->value);
}

Model load_model(const Container& container) {
  if (!container.meta.contains("model")) throw_io("container has no model section");
  const json& m = container.meta["model"];
  BackboneSpec spec;
  spec.kind = m.value("kind", "mlp");
  spec.input_dim = m.value("input_dim", 0);
  spec.hidden = m.value("hidden", std::vector<int>{});
  spec.feature_dim = m.value("feature_dim", 0);
  spec.activation = m.value("activation", "tanh");
  spec.image_side = m.value("image_side", 0);
  spec.channels = m.value("channels", std::vector<int>{});
  int head_classes = m.value("head_classes", 0);
  if (head_classes <= 0) throw_io("container model has no classes");

  rng::Rng scratch(0);  // parameters are overwritten from blobs below
  Model model(make_backbone(spec, scratch), head_classes, scratch);
  for (const ParamView& p : model.all_params()) {
    const std::vector<double>* blob = container.find_blob("model." + p.name);
    if (!blob) throw_io("container is missing parameter blob: model." + p.name);
    if (blob->size() != p.tensor->value.size())
      throw_io("container parameter model." + p.name + " has " + std::to_string(blob->size()) +
               " values, model expects " + std::to_string(p.tensor->value.size()));
    p.tensor->value = *blob;
  }
  int frozen = m.value("frozen_groups", 0);
  if (frozen < 0 || frozen > model.backbone_groups())
    throw_io("container frozen_groups out of range");
  model.set_frozen_groups_raw(frozen);
  return model;
}

void save_exemplars(Container& container, const ExemplarSet& memory,
                    const DatasetManifest& manifest) {
  json classes = json::array();
  std::vector<double> payload;
  for (const auto& [cls, list] : memory.classes) {
    json items = json::array();
    for (const Exemplar& e : list) {
      json item = {{"id", e.sample_id},
                   {"provenance", e.provenance == Provenance::Labeled ? "labeled" : "pseudo"}};
      if (e.uncertainty) item["lambda"] = *e.uncertainty;
      items.push_back(item);
      const Sample& s = manifest.sample(e.sample_id);
      payload.insert(payload.end(), s.input.begin(), s.input.end());
    }
    classes.push_back({{"class", cls}, {"items", items}});
  }
  container.meta["exemplars"] = {{"per_class_budget", memory.per_class_budget},
                                 {"dimension", manifest.dimension},
                                 {"classes", classes}};
  container.add_blob("exemplars.payload", std::move(payload));
}

ExemplarSet load_exemplars(const Container& container, const DatasetManifest& manifest) {
  if (!container.meta.contains("exemplars")) throw_io("container has no exemplar section");
  const json& ex = container.meta["exemplars"];
  ExemplarSet memory;
  memory.per_class_budget = ex.value("per_class_budget", 0);
  int dim = ex.value("dimension", 0);
  if (dim != manifest.dimension)
    throw_io("checkpoint exemplars have dimension " + std::to_string(dim) +
             ", manifest has " + std::to_string(manifest.dimension));
  const std::vector<double>* payload = container.find_blob("exemplars.payload");
  if (!payload) throw_io("container is missing blob: exemplars.payload");

  size_t offset = 0;
  for (const json& cls_entry : ex.value("classes", json::array())) {
    int cls = cls_entry.value("class", -1);
    std::vector<Exemplar>& list = memory.classes[cls];
    for (const json& item : cls_entry.value("items", json::array())) {
      Exemplar e;
      e.sample_id = item.value("id", int64_t{-1});
      e.class_id = cls;
      e.provenance = item.value("provenance", "labeled") == "pseudo" ? Provenance::Pseudo
                                                                     : Provenance::Labeled;
      if (item.contains("lambda")) e.uncertainty = item["lambda"].get<double>();
      if (offset + static_cast<size_t>(dim) > payload->size())
        throw_io("exemplar payload blob is truncated");
      const Sample& s = manifest.sample(e.sample_id);
      for (int d = 0; d < dim; ++d)
        if ((*payload)[offset + static_cast<size_t>(d)] != s.input[static_cast<size_t>(d)])
          throw_io("checkpoint exemplar " + std::to_string(e.sample_id) +
                   " does not match the manifest; the dataset or seed differs from the "
                   "checkpointed run");
      offset += static_cast<size_t>(dim);
      list.push_back(e);
    }
  }
  return memory;
}

}  // namespace uadce
