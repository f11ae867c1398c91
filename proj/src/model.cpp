#include "uadce/model.hpp"

#include <algorithm>
#include <cmath>

#include "uadce/error.hpp"

namespace uadce {

namespace {

double activate(const std::string& act, double z) {
  return act == "relu" ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(const std::string& act, double z) {
  if (act == "relu") return z > 0.0 ? 1.0 : 0.0;
  double t = std::tanh(z);
  return 1.0 - t * t;
}

void validate_spec(const BackboneSpec& spec) {
  if (spec.kind != "mlp" && spec.kind != "conv")
    throw_config("backbone: unknown kind '" + spec.kind + "'");
  if (spec.activation != "tanh" && spec.activation != "relu")
    throw_config("backbone: unknown activation '" + spec.activation + "'");
  if (spec.feature_dim <= 0) throw_config("backbone: feature_dim must be positive");
  if (spec.kind == "mlp") {
    if (spec.input_dim <= 0) throw_config("backbone: input_dim must be positive");
    for (int h : spec.hidden)
      if (h <= 0) throw_config("backbone: hidden widths must be positive");
  } else {
    if (spec.image_side <= 0) throw_config("backbone: image_side must be positive");
    if (spec.channels.empty()) throw_config("backbone: conv needs at least one channel stage");
    int side = spec.image_side;
    for (size_t k = 0; k < spec.channels.size(); ++k) {
      if (spec.channels[k] <= 0) throw_config("backbone: channel counts must be positive");
      side /= 2;
      if (side < 1)
        throw_config("backbone: image_side " + std::to_string(spec.image_side) +
                     " too small for " + std::to_string(spec.channels.size()) + " pooling stages");
    }
  }
}

// -------------------------------------------------------------------------
// MLP: dense layers input -> hidden... -> feature_dim, activation after each.

class MlpBackbone final : public Backbone {
public:
  MlpBackbone(const BackboneSpec& spec, rng::Rng* init) : spec_(spec) {
    dims_.push_back(spec.input_dim);
    for (int h : spec.hidden) dims_.push_back(h);
    dims_.push_back(spec.feature_dim);
    for (size_t k = 0; k + 1 < dims_.size(); ++k) {
      size_t in = static_cast<size_t>(dims_[k]);
      size_t out = static_cast<size_t>(dims_[k + 1]);
      w_.emplace_back(out * in);
      b_.emplace_back(out);
      if (init) {
        double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : w_.back().value) v = init->normal(0.0, scale);
      }
    }
  }

  const BackboneSpec& spec() const override { return spec_; }
  int input_dim() const override { return dims_.front(); }
  int feature_dim() const override { return dims_.back(); }
  int group_count() const override { return static_cast<int>(w_.size()); }

  void forward(const double* x, std::vector<double>& feat) const override {
    std::vector<double> a(x, x + dims_.front());
    std::vector<double> z;
    for (size_t k = 0; k < w_.size(); ++k) {
      dense(k, a, z);
      a.resize(z.size());
      for (size_t j = 0; j < z.size(); ++j) a[j] = activate(spec_.activation, z[j]);
    }
    feat = std::move(a);
  }

  void forward_train(const double* x, TrainContext& ctx, std::vector<double>& feat) const override {
    ctx.pre.assign(w_.size(), {});
    ctx.post.assign(w_.size(), {});
    std::vector<double> a(x, x + dims_.front());
    for (size_t k = 0; k < w_.size(); ++k) {
      dense(k, a, ctx.pre[k]);
      ctx.post[k].resize(ctx.pre[k].size());
      for (size_t j = 0; j < ctx.pre[k].size(); ++j)
        ctx.post[k][j] = activate(spec_.activation, ctx.pre[k][j]);
      a = ctx.post[k];
    }
    feat = ctx.post.back();
  }

  void backward(const double* x, const TrainContext& ctx, const std::vector<double>& dfeat) override {
    std::vector<double> da = dfeat;
    for (size_t k = w_.size(); k-- > 0;) {
      size_t out = static_cast<size_t>(dims_[k + 1]);
      size_t in = static_cast<size_t>(dims_[k]);
      std::vector<double> dz(out);
      for (size_t j = 0; j < out; ++j) dz[j] = da[j] * activate_grad(spec_.activation, ctx.pre[k][j]);
      const double* prev = k == 0 ? x : ctx.post[k - 1].data();
      for (size_t j = 0; j < out; ++j) {
        for (size_t i = 0; i < in; ++i) w_[k].grad[j * in + i] += dz[j] * prev[i];
        b_[k].grad[j] += dz[j];
      }
      if (k == 0) break;
      da.assign(in, 0.0);
      for (size_t j = 0; j < out; ++j)
        for (size_t i = 0; i < in; ++i) da[i] += w_[k].value[j * in + i] * dz[j];
    }
  }

  std::vector<ParamView> params() override {
    std::vector<ParamView> out;
    for (size_t k = 0; k < w_.size(); ++k) {
      int group = static_cast<int>(k) + 1;
      out.push_back({"backbone.layer" + std::to_string(k) + ".w", &w_[k], group});
      out.push_back({"backbone.layer" + std::to_string(k) + ".b", &b_[k], group});
    }
    return out;
  }

  std::unique_ptr<Backbone> clone() const override { return std::make_unique<MlpBackbone>(*this); }

private:
  void dense(size_t k, const std::vector<double>& a, std::vector<double>& z) const {
    size_t out = static_cast<size_t>(dims_[k + 1]);
    size_t in = static_cast<size_t>(dims_[k]);
    z.assign(out, 0.0);
    for (size_t j = 0; j < out; ++j) {
      double acc = b_[k].value[j];
      const double* row = &w_[k].value[j * in];
      for (size_t i = 0; i < in; ++i) acc += row[i] * a[i];
      z[j] = acc;
    }
  }

  BackboneSpec spec_;
  std::vector<int> dims_;
  std::vector<Tensor> w_, b_;
};

// -------------------------------------------------------------------------
// Conv: stages of 3x3 conv (pad 1) + activation + 2x2 average pool, then one
// dense layer to feature_dim. Single input channel, square maps.

class ConvBackbone final : public Backbone {
public:
  ConvBackbone(const BackboneSpec& spec, rng::Rng* init) : spec_(spec) {
    int side = spec.image_side;
    int in_ch = 1;
    for (int out_ch : spec.channels) {
      Stage st;
      st.in_ch = in_ch;
      st.out_ch = out_ch;
      st.in_side = side;
      st.out_side = side / 2;
      st.w = Tensor(static_cast<size_t>(out_ch) * in_ch * 9);
      st.b = Tensor(static_cast<size_t>(out_ch));
      if (init) {
        double scale = 1.0 / std::sqrt(static_cast<double>(in_ch) * 9.0);
        for (double& v : st.w.value) v = init->normal(0.0, scale);
      }
      stages_.push_back(std::move(st));
      in_ch = out_ch;
      side /= 2;
    }
    flat_ = in_ch * side * side;
    dense_w_ = Tensor(static_cast<size_t>(spec.feature_dim) * flat_);
    dense_b_ = Tensor(static_cast<size_t>(spec.feature_dim));
    if (init) {
      double scale = 1.0 / std::sqrt(static_cast<double>(flat_));
      for (double& v : dense_w_.value) v = init->normal(0.0, scale);
    }
  }

  const BackboneSpec& spec() const override { return spec_; }
  int input_dim() const override { return spec_.image_side * spec_.image_side; }
  int feature_dim() const override { return spec_.feature_dim; }
  int group_count() const override { return static_cast<int>(stages_.size()) + 1; }

  void forward(const double* x, std::vector<double>& feat) const override {
    TrainContext scratch;
    run_forward(x, scratch, feat);
  }

  void forward_train(const double* x, TrainContext& ctx, std::vector<double>& feat) const override {
    run_forward(x, ctx, feat);
  }

  void backward(const double* x, const TrainContext& ctx, const std::vector<double>& dfeat) override {
    size_t L = stages_.size();  // >= 1, enforced at construction
    std::vector<double> dflat(static_cast<size_t>(flat_), 0.0);
    const std::vector<double>& flat_in = ctx.post[L - 1];
    for (int j = 0; j < spec_.feature_dim; ++j) {
      double dz = dfeat[static_cast<size_t>(j)] *
                  activate_grad(spec_.activation, ctx.pre[L][static_cast<size_t>(j)]);
      for (int i = 0; i < flat_; ++i) {
        dense_w_.grad[static_cast<size_t>(j) * flat_ + i] += dz * flat_in[static_cast<size_t>(i)];
        dflat[static_cast<size_t>(i)] += dense_w_.value[static_cast<size_t>(j) * flat_ + i] * dz;
      }
      dense_b_.grad[static_cast<size_t>(j)] += dz;
    }

    std::vector<double> dpool = std::move(dflat);
    for (size_t k = L; k-- > 0;) {
      Stage& st = stages_[k];
      // unpool: each pooled cell took the mean of a 2x2 window
      std::vector<double> dact(static_cast<size_t>(st.out_ch) * st.in_side * st.in_side, 0.0);
      for (int c = 0; c < st.out_ch; ++c)
        for (int y = 0; y < st.out_side; ++y)
          for (int xo = 0; xo < st.out_side; ++xo) {
            double g = dpool[idx3(c, y, xo, st.out_side)] * 0.25;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                dact[idx3(c, 2 * y + dy, 2 * xo + dx, st.in_side)] += g;
          }
      // activation
      std::vector<double> dz(dact.size());
      for (size_t i = 0; i < dact.size(); ++i)
        dz[i] = dact[i] * activate_grad(spec_.activation, ctx.pre[k][i]);
      // conv
      const std::vector<double>* in_map = nullptr;
      std::vector<double> input_copy;
      if (k == 0) {
        input_copy.assign(x, x + input_dim());
        in_map = &input_copy;
      } else {
        in_map = &ctx.post[k - 1];
      }
      std::vector<double> din(static_cast<size_t>(st.in_ch) * st.in_side * st.in_side, 0.0);
      for (int oc = 0; oc < st.out_ch; ++oc)
        for (int y = 0; y < st.in_side; ++y)
          for (int xo = 0; xo < st.in_side; ++xo) {
            double g = dz[idx3(oc, y, xo, st.in_side)];
            st.b.grad[static_cast<size_t>(oc)] += g;
            for (int ic = 0; ic < st.in_ch; ++ic)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  int yy = y + dy, xx = xo + dx;
                  if (yy < 0 || yy >= st.in_side || xx < 0 || xx >= st.in_side) continue;
                  size_t wi = widx(st, oc, ic, dy + 1, dx + 1);
                  st.w.grad[wi] += g * (*in_map)[idx3(ic, yy, xx, st.in_side)];
                  din[idx3(ic, yy, xx, st.in_side)] += st.w.value[wi] * g;
                }
          }
      dpool = std::move(din);
    }
  }

  std::vector<ParamView> params() override {
    std::vector<ParamView> out;
    for (size_t k = 0; k < stages_.size(); ++k) {
      int group = static_cast<int>(k) + 1;
      out.push_back({"backbone.conv" + std::to_string(k) + ".w", &stages_[k].w, group});
      out.push_back({"backbone.conv" + std::to_string(k) + ".b", &stages_[k].b, group});
    }
    int dense_group = static_cast<int>(stages_.size()) + 1;
    out.push_back({"backbone.dense.w", &dense_w_, dense_group});
    out.push_back({"backbone.dense.b", &dense_b_, dense_group});
    return out;
  }

  std::unique_ptr<Backbone> clone() const override { return std::make_unique<ConvBackbone>(*this); }

private:
  struct Stage {
    int in_ch, out_ch, in_side, out_side;
    Tensor w;  // out_ch x in_ch x 3 x 3
    Tensor b;
  };

  static size_t idx3(int c, int y, int x, int side) {
    return (static_cast<size_t>(c) * side + y) * side + x;
  }
  static size_t widx(const Stage& st, int oc, int ic, int ky, int kx) {
    return ((static_cast<size_t>(oc) * st.in_ch + ic) * 3 + ky) * 3 + kx;
  }

  void run_forward(const double* x, TrainContext& ctx, std::vector<double>& feat) const {
    size_t L = stages_.size();
    ctx.pre.assign(L + 1, {});
    ctx.post.assign(L + 1, {});
    std::vector<double> cur(x, x + input_dim());
    for (size_t k = 0; k < L; ++k) {
      const Stage& st = stages_[k];
      std::vector<double>& z = ctx.pre[k];
      z.assign(static_cast<size_t>(st.out_ch) * st.in_side * st.in_side, 0.0);
      for (int oc = 0; oc < st.out_ch; ++oc)
        for (int y = 0; y < st.in_side; ++y)
          for (int xo = 0; xo < st.in_side; ++xo) {
            double acc = st.b.value[static_cast<size_t>(oc)];
            for (int ic = 0; ic < st.in_ch; ++ic)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  int yy = y + dy, xx = xo + dx;
                  if (yy < 0 || yy >= st.in_side || xx < 0 || xx >= st.in_side) continue;
                  acc += st.w.value[widx(st, oc, ic, dy + 1, dx + 1)] *
                         cur[idx3(ic, yy, xx, st.in_side)];
                }
            z[idx3(oc, y, xo, st.in_side)] = acc;
          }
      // activation + 2x2 average pool
      std::vector<double>& pooled = ctx.post[k];
      pooled.assign(static_cast<size_t>(st.out_ch) * st.out_side * st.out_side, 0.0);
      for (int c = 0; c < st.out_ch; ++c)
        for (int y = 0; y < st.out_side; ++y)
          for (int xo = 0; xo < st.out_side; ++xo) {
            double s = 0.0;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                s += activate(spec_.activation, z[idx3(c, 2 * y + dy, 2 * xo + dx, st.in_side)]);
            pooled[idx3(c, y, xo, st.out_side)] = s * 0.25;
          }
      cur = pooled;
    }
    // dense head of the backbone
    std::vector<double>& z = ctx.pre[L];
    z.assign(static_cast<size_t>(spec_.feature_dim), 0.0);
    for (int j = 0; j < spec_.feature_dim; ++j) {
      double acc = dense_b_.value[static_cast<size_t>(j)];
      for (int i = 0; i < flat_; ++i)
        acc += dense_w_.value[static_cast<size_t>(j) * flat_ + i] * cur[static_cast<size_t>(i)];
      z[static_cast<size_t>(j)] = acc;
    }
    ctx.post[L].resize(z.size());
    for (size_t j = 0; j < z.size(); ++j) ctx.post[L][j] = activate(spec_.activation, z[j]);
    feat = ctx.post[L];
  }

  BackboneSpec spec_;
  std::vector<Stage> stages_;
  Tensor dense_w_, dense_b_;
  int flat_ = 0;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec, rng::Rng& init) {
  validate_spec(spec);
  if (spec.kind == "mlp") return std::make_unique<MlpBackbone>(spec, &init);
  return std::make_unique<ConvBackbone>(spec, &init);
}

// ---------------------------------------------------------------------------

Model::Model(std::unique_ptr<Backbone> backbone, int initial_classes, rng::Rng& init)
    : backbone_(std::move(backbone)), head_out_(initial_classes) {
  if (initial_classes <= 0) throw_config("model: initial class count must be positive");
  size_t feat = static_cast<size_t>(backbone_->feature_dim());
  head_w_ = Tensor(static_cast<size_t>(initial_classes) * feat);
  head_b_ = Tensor(static_cast<size_t>(initial_classes));
  double scale = 1.0 / std::sqrt(static_cast<double>(feat));
  for (double& v : head_w_.value) v = init.normal(0.0, scale);
}

Model::Model(const Model& other)
    : backbone_(other.backbone_->clone()),
      head_w_(other.head_w_),
      head_b_(other.head_b_),
      head_out_(other.head_out_),
      frozen_groups_(other.frozen_groups_) {}

void Model::extract_features(const double* x, std::vector<double>& feat) const {
  backbone_->forward(x, feat);
}

std::vector<double> Model::extract_features(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != input_dim())
    throw_contract("extract_features: input has dimension " + std::to_string(x.size()) +
                   ", model expects " + std::to_string(input_dim()));
  std::vector<double> feat;
  backbone_->forward(x.data(), feat);
  return feat;
}

std::vector<double> Model::logits(const double* x) const {
  std::vector<double> feat;
  backbone_->forward(x, feat);
  size_t fd = feat.size();
  std::vector<double> out(static_cast<size_t>(head_out_));
  for (int j = 0; j < head_out_; ++j) {
    double acc = head_b_.value[static_cast<size_t>(j)];
    const double* row = &head_w_.value[static_cast<size_t>(j) * fd];
    for (size_t i = 0; i < fd; ++i) acc += row[i] * feat[i];
    out[static_cast<size_t>(j)] = acc;
  }
  return out;
}

std::vector<double> Model::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != input_dim())
    throw_contract("forward: input has dimension " + std::to_string(x.size()) +
                   ", model expects " + std::to_string(input_dim()));
  return softmax(logits(x.data()));
}

void Model::forward_train(const double* x, TrainContext& ctx, std::vector<double>& feat,
                          std::vector<double>& logits_out) const {
  backbone_->forward_train(x, ctx, feat);
  size_t fd = feat.size();
  logits_out.assign(static_cast<size_t>(head_out_), 0.0);
  for (int j = 0; j < head_out_; ++j) {
    double acc = head_b_.value[static_cast<size_t>(j)];
    const double* row = &head_w_.value[static_cast<size_t>(j) * fd];
    for (size_t i = 0; i < fd; ++i) acc += row[i] * feat[i];
    logits_out[static_cast<size_t>(j)] = acc;
  }
}

void Model::backward(const double* x, const TrainContext& ctx, const std::vector<double>& feat,
                     const std::vector<double>& dlogits) {
  size_t fd = feat.size();
  std::vector<double> dfeat(fd, 0.0);
  for (int j = 0; j < head_out_; ++j) {
    double dz = dlogits[static_cast<size_t>(j)];
    if (dz == 0.0) continue;
    const double* row = &head_w_.value[static_cast<size_t>(j) * fd];
    for (size_t i = 0; i < fd; ++i) {
      head_w_.grad[static_cast<size_t>(j) * fd + i] += dz * feat[i];
      dfeat[i] += row[i] * dz;
    }
    head_b_.grad[static_cast<size_t>(j)] += dz;
  }
  backbone_->backward(x, ctx, dfeat);
}

void Model::expand_head(int new_class_count, rng::Rng& init) {
  if (new_class_count < 0) throw_contract("expand_head: new_class_count must be nonnegative");
  if (new_class_count == 0) return;
  size_t fd = static_cast<size_t>(feature_dim());
  size_t old_out = static_cast<size_t>(head_out_);
  size_t new_out = old_out + static_cast<size_t>(new_class_count);
  Tensor w(new_out * fd), b(new_out);
  std::copy(head_w_.value.begin(), head_w_.value.end(), w.value.begin());
  std::copy(head_b_.value.begin(), head_b_.value.end(), b.value.begin());
  for (size_t j = old_out; j < new_out; ++j)
    for (size_t i = 0; i < fd; ++i) w.value[j * fd + i] = init.normal(0.0, 1e-2);
  head_w_ = std::move(w);
  head_b_ = std::move(b);
  head_out_ = static_cast<int>(new_out);
}

void Model::freeze_front_layers(int group_count) {
  if (group_count < 0 || group_count > backbone_->group_count())
    throw_config("freeze_front_layers: group count " + std::to_string(group_count) +
                 " out of range, backbone has " + std::to_string(backbone_->group_count()) +
                 " groups");
  frozen_groups_ = group_count;
}

std::vector<ParamView> Model::all_params() {
  std::vector<ParamView> out = backbone_->params();
  out.push_back({"head.w", &head_w_, 0});
  out.push_back({"head.b", &head_b_, 0});
  return out;
}

std::vector<ParamView> Model::trainable_params() {
  std::vector<ParamView> out;
  for (ParamView& p : backbone_->params())
    if (p.group > frozen_groups_) out.push_back(p);
  out.push_back({"head.w", &head_w_, 0});
  out.push_back({"head.b", &head_b_, 0});
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits, double temperature) {
  if (logits.empty()) throw_contract("softmax: empty logits");
  if (!(temperature > 0.0)) throw_contract("softmax: temperature must be positive");
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

PrototypeTable compute_prototypes(const Model& model,
                                  const std::map<int, std::vector<const double*>>& members,
                                  bool normalize) {
  PrototypeTable table;
  std::vector<double> feat;
  for (const auto& [cls, inputs] : members) {
    if (inputs.empty())
      throw_evaluation("compute_prototypes: class " + std::to_string(cls) + " has no members");
    std::vector<double> mean(static_cast<size_t>(model.feature_dim()), 0.0);
    for (const double* x : inputs) {
      model.extract_features(x, feat);
      if (normalize) {
        double norm = 0.0;
        for (double v : feat) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0)
          for (double& v : feat) v /= norm;
      }
      for (size_t i = 0; i < mean.size(); ++i) mean[i] += feat[i];
    }
    for (double& v : mean) v /= static_cast<double>(inputs.size());
    table[cls] = std::move(mean);
  }
  return table;
}

int nme_classify(const std::vector<double>& feature, const PrototypeTable& prototypes,
                 bool normalize) {
  if (prototypes.empty()) throw_evaluation("nme_classify: prototype table is empty");
  std::vector<double> query = feature;
  if (normalize) {
    double norm = 0.0;
    for (double v : query) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : query) v /= norm;
  }
  int best = -1;
  double best_d = 0.0;
  for (const auto& [cls, proto] : prototypes) {
    if (proto.size() != query.size())
      throw_evaluation("nme_classify: prototype for class " + std::to_string(cls) +
                       " has dimension " + std::to_string(proto.size()) + ", query has " +
                       std::to_string(query.size()));
    double d = 0.0;
    for (size_t i = 0; i < query.size(); ++i) {
      double diff = query[i] - proto[i];
      d += diff * diff;
    }
    if (best < 0 || d < best_d) {  // strict <: ties keep the smallest class-id
      best = cls;
      best_d = d;
    }
  }
  return best;
}

Sgd::Sgd(std::vector<ParamView> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const ParamView& p : params_) velocity_.emplace_back(p.tensor->value.size(), 0.0);
}

void Sgd::zero_grad() {
  for (ParamView& p : params_) p.tensor->zero_grad();
}

void Sgd::step() {
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = *params_[k].tensor;
    std::vector<double>& vel = velocity_[k];
    for (size_t i = 0; i < t.value.size(); ++i) {
      double g = t.grad[i] + weight_decay_ * t.value[i];
      vel[i] = momentum_ * vel[i] + g;
      t.value[i] -= lr_ * vel[i];
    }
  }
}

}  // namespace uadce
