#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "uadce/exemplar.hpp"
#include "uadce/model.hpp"

namespace uadce {

struct UncertaintySpec {
  int pass_count = 10;
  double noise_scale = 0.1;
  // Per-input-dimension noise multipliers (the base training set's feature
  // stds); empty means 1.0 everywhere.
  std::vector<double> feature_scale;
};

// Test-time-augmentation uncertainty: pass_count forward passes on the input
// plus Gaussian noise; lambda is the mean over classes of the per-class
// population variance of the softmax outputs across passes. Deterministic
// given seed.
double estimate_uncertainty(const Model& model, const std::vector<double>& input,
                            const UncertaintySpec& spec, uint64_t seed);

// Same computation, optionally exposing the pass x class probability matrix
// for audits and independent recomputation.
double estimate_uncertainty_detail(const Model& model, const std::vector<double>& input,
                                   const UncertaintySpec& spec, uint64_t seed,
                                   std::vector<std::vector<double>>* probs_out);

struct RefinementEntry {
  Exemplar exemplar;  // uncertainty field carries the computed lambda
  double lambda = 0.0;
  bool kept = false;
};

struct RefinementResult {
  ExemplarSet refined;                  // class keys preserved; lists may empty out
  std::vector<RefinementEntry> audit;   // every exemplar in rank order
};

using InputResolver = std::function<const double*(const Exemplar&)>;

// Ranks all exemplars ascending by lambda (ties: class-id, then position) and
// keeps the first ceil(keep_fraction * |E|). Per-exemplar noise seeds derive
// from (session_seed, sample id), so the result is independent of iteration
// order. literal_comparator flips the keep rule to the highest-lambda slice.
// Survivors keep their original within-class order.
RefinementResult refine_exemplars(const ExemplarSet& exemplars, const Model& reference,
                                  double keep_fraction, const UncertaintySpec& spec,
                                  uint64_t session_seed, const InputResolver& resolve,
                                  bool literal_comparator = false);

struct AdaptiveWeight {
  double zeta_base = 0.0;
  double exemplar_ratio = 0.0;  // |E| / |refined E|
  double class_ratio = 0.0;     // sqrt(old / new)
  double zeta = 0.0;            // product of the three
};

AdaptiveWeight adaptive_weight(double zeta_base, int64_t e_size, int64_t e_refined_size,
                               int old_classes, int new_classes);

// Mean cross-entropy between temperature-softened reference and target
// distributions, both restricted to the reference model's classes. Forward
// value only; the gradient path lives in session_loss.
double distillation_loss(const Model& reference, const Model& target,
                         const std::vector<const double*>& refined_inputs, double temperature);

struct LabeledExample {
  const double* input = nullptr;
  int label = 0;
};

struct LossBreakdown {
  double ce = 0.0;
  double dl = 0.0;
  double zeta = 0.0;
  double total = 0.0;  // ce + zeta * dl
};

// Composite session loss: cross-entropy over the labeled batch (current
// labeled + pseudo-labeled + exemplars, all with hard labels) plus zeta times
// the distillation term over the refined exemplars. reference == nullptr
// means the base session: dl = 0, total = ce. With with_grads, gradients
// accumulate into the target model only.
LossBreakdown session_loss(Model& model, const Model* reference,
                           const std::vector<LabeledExample>& batch_labeled,
                           const std::vector<const double*>& refined_inputs, double zeta,
                           double temperature, bool with_grads = true);

}  // namespace uadce
