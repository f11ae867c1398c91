#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uadce/exemplar.hpp"
#include "uadce/model.hpp"
#include "uadce/protocol.hpp"

namespace uadce {

// Versioned binary container: JSON metadata plus named float64 blobs. Used
// for per-session checkpoints (model parameters, exemplar memory, metrics so
// far). The format-version field lives both in the binary header and in the
// metadata for tools that only read one of them.
struct Container {
  static constexpr uint32_t kFormatVersion = 1;

  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<double>>> blobs;

  void add_blob(std::string name, std::vector<double> values);
  const std::vector<double>* find_blob(const std::string& name) const;

  void save(const std::string& path) const;
  static Container load(const std::string& path);
};

// Model <-> container. Parameters are stored as one blob per tensor under
// "model.<param name>"; the backbone spec, head width, and frozen group count
// go to meta["model"].
void save_model(Container& container, Model& model);
Model load_model(const Container& container);

// Exemplar memory <-> container. Stores ids, provenance, cached lambdas, and
// the sample payloads; loading verifies payloads against the manifest so a
// checkpoint cannot silently resume against different data.
void save_exemplars(Container& container, const ExemplarSet& memory,
                    const DatasetManifest& manifest);
ExemplarSet load_exemplars(const Container& container, const DatasetManifest& manifest);

}  // namespace uadce
