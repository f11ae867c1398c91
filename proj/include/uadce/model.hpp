#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "uadce/rng.hpp"

namespace uadce {

struct BackboneSpec {
  std::string kind = "mlp";  // mlp | conv
  int input_dim = 0;
  std::vector<int> hidden = {32, 32};  // mlp layer widths
  int feature_dim = 16;
  std::string activation = "tanh";  // tanh | relu
  // conv backbone: input is a single-channel image_side x image_side map;
  // each stage is 3x3 conv (pad 1) + activation + 2x2 average pool.
  int image_side = 0;
  std::vector<int> channels = {4, 8};
};

struct Tensor {
  std::vector<double> value;
  std::vector<double> grad;

  explicit Tensor(size_t n = 0) : value(n, 0.0), grad(n, 0.0) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Optimizer-facing view of one parameter tensor. Backbone groups are numbered
// from 1 (front) so "freeze the first k groups" is meaningful; the head uses
// group 0 and is never frozen.
struct ParamView {
  std::string name;
  Tensor* tensor;
  int group;
};

// Per-sample activations kept by forward_train for the matching backward.
struct TrainContext {
  std::vector<std::vector<double>> pre;   // pre-activation per layer
  std::vector<std::vector<double>> post;  // post-activation per layer
};

// Feature extractor contract. Single-sample forward/backward; gradients
// accumulate into the owned tensors until zeroed by the optimizer.
class Backbone {
public:
  virtual ~Backbone() = default;
  virtual const BackboneSpec& spec() const = 0;
  virtual int input_dim() const = 0;
  virtual int feature_dim() const = 0;
  virtual int group_count() const = 0;
  virtual void forward(const double* x, std::vector<double>& feat) const = 0;
  virtual void forward_train(const double* x, TrainContext& ctx, std::vector<double>& feat) const = 0;
  virtual void backward(const double* x, const TrainContext& ctx, const std::vector<double>& dfeat) = 0;
  virtual std::vector<ParamView> params() = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
};

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec, rng::Rng& init);

// Backbone + linear head over the classes seen so far.
class Model {
public:
  Model(std::unique_ptr<Backbone> backbone, int initial_classes, rng::Rng& init);
  Model(const Model& other);
  Model(Model&&) = default;
  Model& operator=(const Model&) = delete;
  Model& operator=(Model&&) = default;

  int input_dim() const { return backbone_->input_dim(); }
  int feature_dim() const { return backbone_->feature_dim(); }
  int known_classes() const { return head_out_; }
  int backbone_groups() const { return backbone_->group_count(); }
  int frozen_groups() const { return frozen_groups_; }

  // evaluation mode
  void extract_features(const double* x, std::vector<double>& feat) const;
  std::vector<double> extract_features(const std::vector<double>& x) const;
  std::vector<double> logits(const double* x) const;
  std::vector<double> forward(const std::vector<double>& x) const;  // softmax probabilities

  // training mode
  void forward_train(const double* x, TrainContext& ctx, std::vector<double>& feat,
                     std::vector<double>& logits) const;
  void backward(const double* x, const TrainContext& ctx, const std::vector<double>& feat,
                const std::vector<double>& dlogits);

  // Appends new_class_count output rows; existing head weights are preserved
  // bit-exactly, new rows start at N(0, 1e-2), bias 0.
  void expand_head(int new_class_count, rng::Rng& init);

  void freeze_front_layers(int group_count);

  std::vector<ParamView> all_params();
  std::vector<ParamView> trainable_params();  // excludes frozen backbone groups

  const Backbone& backbone() const { return *backbone_; }
  const Tensor& head_weight() const { return head_w_; }
  const Tensor& head_bias() const { return head_b_; }
  Tensor& head_weight() { return head_w_; }
  Tensor& head_bias() { return head_b_; }
  void set_frozen_groups_raw(int g) { frozen_groups_ = g; }  // deserialization only

private:
  std::unique_ptr<Backbone> backbone_;
  Tensor head_w_;  // head_out_ x feature_dim, row-major
  Tensor head_b_;
  int head_out_ = 0;
  int frozen_groups_ = 0;
};

// Numerically safe softmax (max-subtracted), optional temperature.
std::vector<double> softmax(const std::vector<double>& logits, double temperature = 1.0);

using PrototypeTable = std::map<int, std::vector<double>>;

// Mean feature per class. members maps class-id to that class's sample
// inputs; an empty member list is an evaluation error naming the class. With
// normalize, features are L2-normalized before averaging.
PrototypeTable compute_prototypes(const Model& model,
                                  const std::map<int, std::vector<const double*>>& members,
                                  bool normalize = false);

// Nearest prototype by Euclidean distance; ties go to the smallest class-id.
// With normalize, the query feature is L2-normalized first.
int nme_classify(const std::vector<double>& feature, const PrototypeTable& prototypes,
                 bool normalize = false);

// SGD with classical momentum; weight decay is added to the raw gradient
// before the velocity update.
class Sgd {
public:
  Sgd(std::vector<ParamView> params, double lr, double momentum, double weight_decay);
  void zero_grad();
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

private:
  std::vector<ParamView> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
};

}  // namespace uadce
