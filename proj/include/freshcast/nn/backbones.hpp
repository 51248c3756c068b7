#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "freshcast/nn/module.hpp"

namespace freshcast::nn {

// Architectural roles. Each name says which published network the role stands in for.
enum class BackboneId {
  cnn_light,       // MobileNetV2
  cnn_deep_vgg,    // VGG16
  cnn_deep_res,    // ResNet50
  capsule,         // capsule network with dynamic routing
  vit_distilled,   // DeiT
  cnn_light_lstm,  // MobileNetV2 feature map read as a sequence by an LSTM
};

// `tiny` variants keep the topology at desk scale (random init, 32px input).
enum class Variant { tiny, full };

inline constexpr std::array<BackboneId, 6> kAllBackbones{BackboneId::cnn_light,     BackboneId::cnn_deep_vgg,
                                                         BackboneId::cnn_deep_res,  BackboneId::capsule,
                                                         BackboneId::vit_distilled, BackboneId::cnn_light_lstm};

inline std::string backbone_name(BackboneId id) {
  switch (id) {
    case BackboneId::cnn_light: return "cnn_light";
    case BackboneId::cnn_deep_vgg: return "cnn_deep_vgg";
    case BackboneId::cnn_deep_res: return "cnn_deep_res";
    case BackboneId::capsule: return "capsule";
    case BackboneId::vit_distilled: return "vit_distilled";
    case BackboneId::cnn_light_lstm: return "cnn_light_lstm";
  }
  return "?";
}

inline BackboneId backbone_from_name(const std::string& name) {
  for (auto id : kAllBackbones)
    if (backbone_name(id) == name) return id;
  throw RegistryError("unknown backbone '" + name + "'");
}

inline std::string variant_name(Variant v) { return v == Variant::tiny ? "tiny" : "full"; }

inline Variant variant_from_name(const std::string& name) {
  if (name == "tiny") return Variant::tiny;
  if (name == "full") return Variant::full;
  throw RegistryError("unknown variant '" + name + "' (expected tiny|full)");
}

// What the registry declares about a backbone before it is built.
struct BackboneInfo {
  BackboneId id;
  Variant variant;
  std::int64_t feature_dim;
  int input_size;
  std::array<double, 3> mean;  // per-channel normalization applied to [0,1] input
  std::array<double, 3> stddev;
};

inline constexpr std::array<double, 3> kImagenetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImagenetStd{0.229, 0.224, 0.225};

// ---------------------------------------------------------------- architecture configs

struct InvertedResidualStage {
  int expansion, channels, repeats, stride;
};

struct MobileNetConfig {
  int stem = 32;
  std::vector<InvertedResidualStage> stages;
  int last_channels = 1280;
};

inline MobileNetConfig mobilenet_config(Variant v) {
  if (v == Variant::full)
    return {32, {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2}, {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}}, 1280};
  return {8, {{1, 8, 1, 1}, {2, 16, 2, 2}, {2, 24, 2, 2}}, 48};
}

inline std::vector<int> vgg_config(Variant v) {
  // 0 marks a 2x2 max-pool.
  if (v == Variant::full) return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
  return {8, 8, 0, 16, 16, 0, 32, 0};
}

struct ResNetConfig {
  int stem = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  std::vector<int> blocks;
  std::vector<int> widths;
};

inline ResNetConfig resnet_config(Variant v) {
  if (v == Variant::full) return {64, 7, 2, {3, 4, 6, 3}, {64, 128, 256, 512}};
  return {8, 3, 1, {1, 1}, {8, 16}};
}

struct CapsuleConfig {
  std::vector<std::pair<int, int>> stem;  // (channels, kernel), stride 2 each
  int primary_kernel = 9;
  int primary_stride = 2;
  int primary_types = 32;
  int primary_dim = 8;
  int out_caps = 10;
  int out_dim = 16;
  int routing_iterations = 3;
};

inline CapsuleConfig capsule_config(Variant v) {
  if (v == Variant::full) return {{{64, 5}, {128, 5}, {256, 5}}, 9, 2, 32, 8, 10, 16, 3};
  return {{{16, 3}}, 3, 2, 4, 8, 8, 8, 3};
}

struct VitConfig {
  int patch = 16;
  int dim = 192;
  int depth = 12;
  int heads = 3;
  int mlp = 768;
};

inline VitConfig vit_config(Variant v) {
  if (v == Variant::full) return {16, 192, 12, 3, 768};  // DeiT-Tiny
  return {4, 32, 2, 2, 64};
}

inline int lstm_hidden(Variant v) { return v == Variant::full ? 256 : 32; }

inline int resnet_feature_dim(const ResNetConfig& c) { return c.widths.back() * 4; }

inline BackboneInfo backbone_info(BackboneId id, Variant v) {
  const int size = v == Variant::full ? 224 : 32;
  std::int64_t dim = 0;
  switch (id) {
    case BackboneId::cnn_light: dim = mobilenet_config(v).last_channels; break;
    case BackboneId::cnn_deep_vgg: {
      const auto cfg = vgg_config(v);
      for (int c : cfg)
        if (c > 0) dim = c;
      break;
    }
    case BackboneId::cnn_deep_res: dim = resnet_feature_dim(resnet_config(v)); break;
    case BackboneId::capsule: {
      const auto c = capsule_config(v);
      dim = static_cast<std::int64_t>(c.out_caps) * c.out_dim;
      break;
    }
    case BackboneId::vit_distilled: dim = vit_config(v).dim; break;
    case BackboneId::cnn_light_lstm: dim = lstm_hidden(v); break;
  }
  return {id, v, dim, size, kImagenetMean, kImagenetStd};
}

// ---------------------------------------------------------------- backbone base

// Maps [N,3,S,S] images in [0,1] to [N, feature_dim].
template <std::floating_point T>
class Backbone : public Module<T> {
 public:
  explicit Backbone(BackboneInfo info) : info_(info) {
    std::vector<T> m(3), s(3);
    for (int c = 0; c < 3; ++c) {
      m[static_cast<std::size_t>(c)] = static_cast<T>(info.mean[static_cast<std::size_t>(c)]);
      s[static_cast<std::size_t>(c)] = static_cast<T>(info.stddev[static_cast<std::size_t>(c)]);
    }
    mean_ = Tensor<T>::from({1, 3, 1, 1}, std::move(m));
    std_ = Tensor<T>::from({1, 3, 1, 1}, std::move(s));
  }

  virtual Tensor<T> forward(const Tensor<T>& images) = 0;
  const BackboneInfo& info() const { return info_; }

  bool pretrained() const { return pretrained_; }
  void mark_pretrained() { pretrained_ = true; }

 protected:
  Tensor<T> normalize(const Tensor<T>& x) const { return div(sub(x, mean_), std_); }

 private:
  BackboneInfo info_;
  Tensor<T> mean_, std_;
  bool pretrained_ = false;
};

// ---------------------------------------------------------------- MobileNetV2

template <std::floating_point T>
class InvertedResidual : public Module<T> {
 public:
  InvertedResidual(int in, int out, int stride, int expansion, std::mt19937_64& rng)
      : residual_(stride == 1 && in == out) {
    const int hidden = in * expansion;
    if (expansion != 1)
      expand_ = this->register_module("expand", std::make_shared<ConvBnAct<T>>(in, hidden, 1, rng, Conv2dOptions{}, Activation::relu6));
    depthwise_ = this->register_module(
        "depthwise", std::make_shared<ConvBnAct<T>>(hidden, hidden, 3, rng, Conv2dOptions{stride, 1, hidden}, Activation::relu6));
    project_ = this->register_module("project", std::make_shared<ConvBnAct<T>>(hidden, out, 1, rng, Conv2dOptions{}, Activation::none));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    auto y = expand_ ? expand_->forward(x) : x;
    y = project_->forward(depthwise_->forward(y));
    return residual_ ? add(x, y) : y;
  }

 private:
  bool residual_;
  std::shared_ptr<ConvBnAct<T>> expand_, depthwise_, project_;
};

// Convolutional trunk up to the last 1x1 conv; output is the spatial feature map.
template <std::floating_point T>
class MobileNetTrunk : public Module<T> {
 public:
  MobileNetTrunk(const MobileNetConfig& cfg, std::mt19937_64& rng) {
    stem_ = this->register_module("stem", std::make_shared<ConvBnAct<T>>(3, cfg.stem, 3, rng, Conv2dOptions{2, 1, 1}, Activation::relu6));
    int in = cfg.stem;
    int k = 0;
    for (const auto& s : cfg.stages)
      for (int r = 0; r < s.repeats; ++r) {
        blocks_.push_back(this->register_module(
            "block" + std::to_string(k++), std::make_shared<InvertedResidual<T>>(in, s.channels, r == 0 ? s.stride : 1, s.expansion, rng)));
        in = s.channels;
      }
    head_ = this->register_module("head", std::make_shared<ConvBnAct<T>>(in, cfg.last_channels, 1, rng, Conv2dOptions{}, Activation::relu6));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    auto y = stem_->forward(x);
    for (auto& b : blocks_) y = b->forward(y);
    return head_->forward(y);
  }

 private:
  std::shared_ptr<ConvBnAct<T>> stem_, head_;
  std::vector<std::shared_ptr<InvertedResidual<T>>> blocks_;
};

template <std::floating_point T>
class CnnLight : public Backbone<T> {
 public:
  CnnLight(Variant v, std::mt19937_64& rng) : Backbone<T>(backbone_info(BackboneId::cnn_light, v)) {
    trunk_ = this->register_module("trunk", std::make_shared<MobileNetTrunk<T>>(mobilenet_config(v), rng));
  }
  Tensor<T> forward(const Tensor<T>& images) override { return global_avg_pool(trunk_->forward(this->normalize(images))); }

 private:
  std::shared_ptr<MobileNetTrunk<T>> trunk_;
};

// ---------------------------------------------------------------- LSTM

// Single-layer LSTM over [N, steps, in]; returns the final hidden state [N, hidden].
template <std::floating_point T>
class Lstm : public Module<T> {
 public:
  Lstm(std::int64_t in, std::int64_t hidden, std::mt19937_64& rng) : hidden_(hidden) {
    w_input_ = init::xavier<T>({in, 4 * hidden}, static_cast<std::size_t>(in), static_cast<std::size_t>(4 * hidden), rng);
    w_hidden_ = init::xavier<T>({hidden, 4 * hidden}, static_cast<std::size_t>(hidden), static_cast<std::size_t>(4 * hidden), rng);
    std::vector<T> b(static_cast<std::size_t>(4 * hidden), T(0));
    // Gate order (input, forget, cell, output); forget bias starts at 1.
    for (std::int64_t i = hidden; i < 2 * hidden; ++i) b[static_cast<std::size_t>(i)] = T(1);
    bias_ = Tensor<T>::from({4 * hidden}, std::move(b));
    this->register_parameter("w_input", w_input_);
    this->register_parameter("w_hidden", w_hidden_);
    this->register_parameter("bias", bias_);
  }

  Tensor<T> forward(const Tensor<T>& seq) const {
    const auto n = seq.dim(0), steps = seq.dim(1);
    const auto hd = hidden_;
    auto xs = linear(seq, w_input_, bias_);  // [N, steps, 4H]
    auto h = Tensor<T>::zeros({n, hd});
    auto c = Tensor<T>::zeros({n, hd});
    for (std::int64_t t = 0; t < steps; ++t) {
      auto gates = add(reshape(slice(xs, 1, t, 1), {n, 4 * hd}), matmul(h, w_hidden_));
      auto i = sigmoid(slice(gates, 1, 0, hd));
      auto f = sigmoid(slice(gates, 1, hd, hd));
      auto g = tanh(slice(gates, 1, 2 * hd, hd));
      auto o = sigmoid(slice(gates, 1, 3 * hd, hd));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, tanh(c));
    }
    return h;
  }

 private:
  std::int64_t hidden_;
  Tensor<T> w_input_, w_hidden_, bias_;
};

// MobileNetV2 feature map read row-major as a sequence of C-dim vectors.
template <std::floating_point T>
class CnnLightLstm : public Backbone<T> {
 public:
  CnnLightLstm(Variant v, std::mt19937_64& rng) : Backbone<T>(backbone_info(BackboneId::cnn_light_lstm, v)) {
    const auto cfg = mobilenet_config(v);
    trunk_ = this->register_module("trunk", std::make_shared<MobileNetTrunk<T>>(cfg, rng));
    lstm_ = this->register_module("lstm", std::make_shared<Lstm<T>>(cfg.last_channels, lstm_hidden(v), rng));
  }

  Tensor<T> forward(const Tensor<T>& images) override {
    auto fmap = trunk_->forward(this->normalize(images));  // [N,C,H,W]
    const auto n = fmap.dim(0), c = fmap.dim(1);
    auto seq = permute(reshape(fmap, {n, c, -1}), {0, 2, 1});  // [N, H*W, C]
    return lstm_->forward(seq);
  }

 private:
  std::shared_ptr<MobileNetTrunk<T>> trunk_;
  std::shared_ptr<Lstm<T>> lstm_;
};

// ---------------------------------------------------------------- VGG16

template <std::floating_point T>
class CnnDeepVgg : public Backbone<T> {
 public:
  CnnDeepVgg(Variant v, std::mt19937_64& rng) : Backbone<T>(backbone_info(BackboneId::cnn_deep_vgg, v)) {
    int in = 3;
    int k = 0;
    for (int c : vgg_config(v)) {
      if (c == 0) {
        layers_.push_back(nullptr);
        continue;
      }
      layers_.push_back(this->register_module("conv" + std::to_string(k++), std::make_shared<Conv2d<T>>(in, c, 3, rng, Conv2dOptions{1, 1, 1})));
      in = c;
    }
  }

  Tensor<T> forward(const Tensor<T>& images) override {
    auto y = this->normalize(images);
    for (auto& l : layers_) y = l ? relu(l->forward(y)) : max_pool2d(y, 2, 2);
    return global_avg_pool(y);
  }

 private:
  std::vector<std::shared_ptr<Conv2d<T>>> layers_;  // nullptr = pool
};

// ---------------------------------------------------------------- ResNet50

template <std::floating_point T>
class Bottleneck : public Module<T> {
 public:
  Bottleneck(int in, int width, int stride, std::mt19937_64& rng) {
    const int out = width * 4;
    reduce_ = this->register_module("reduce", std::make_shared<ConvBnAct<T>>(in, width, 1, rng, Conv2dOptions{}, Activation::relu));
    spatial_ = this->register_module("spatial", std::make_shared<ConvBnAct<T>>(width, width, 3, rng, Conv2dOptions{stride, 1, 1}, Activation::relu));
    expand_ = this->register_module("expand", std::make_shared<ConvBnAct<T>>(width, out, 1, rng, Conv2dOptions{}, Activation::none));
    if (stride != 1 || in != out)
      shortcut_ = this->register_module("shortcut", std::make_shared<ConvBnAct<T>>(in, out, 1, rng, Conv2dOptions{stride, 0, 1}, Activation::none));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    auto y = expand_->forward(spatial_->forward(reduce_->forward(x)));
    return relu(add(y, shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  std::shared_ptr<ConvBnAct<T>> reduce_, spatial_, expand_, shortcut_;
};

template <std::floating_point T>
class CnnDeepRes : public Backbone<T> {
 public:
  CnnDeepRes(Variant v, std::mt19937_64& rng) : Backbone<T>(backbone_info(BackboneId::cnn_deep_res, v)) {
    const auto cfg = resnet_config(v);
    stem_ = this->register_module(
        "stem", std::make_shared<ConvBnAct<T>>(3, cfg.stem, cfg.stem_kernel, rng,
                                               Conv2dOptions{cfg.stem_stride, cfg.stem_kernel / 2, 1}, Activation::relu));
    int in = cfg.stem;
    int k = 0;
    for (std::size_t s = 0; s < cfg.blocks.size(); ++s)
      for (int b = 0; b < cfg.blocks[s]; ++b) {
        const int stride = (b == 0 && s > 0) ? 2 : 1;
        blocks_.push_back(this->register_module("block" + std::to_string(k++),
                                                std::make_shared<Bottleneck<T>>(in, cfg.widths[s], stride, rng)));
        in = cfg.widths[s] * 4;
      }
  }

  Tensor<T> forward(const Tensor<T>& images) override {
    auto y = max_pool2d(stem_->forward(this->normalize(images)), 3, 2, 1);
    for (auto& b : blocks_) y = b->forward(y);
    return global_avg_pool(y);
  }

 private:
  std::shared_ptr<ConvBnAct<T>> stem_;
  std::vector<std::shared_ptr<Bottleneck<T>>> blocks_;
};

// ---------------------------------------------------------------- capsule network

// Conv stem -> primary capsules (squashed) -> one routed capsule layer.
template <std::floating_point T>
class CapsuleNet : public Backbone<T> {
 public:
  CapsuleNet(Variant v, std::mt19937_64& rng) : Backbone<T>(backbone_info(BackboneId::capsule, v)), cfg_(capsule_config(v)) {
    int in = 3;
    int size = this->info().input_size;
    int k = 0;
    for (auto [channels, kernel] : cfg_.stem) {
      stem_.push_back(this->register_module("stem" + std::to_string(k++), std::make_shared<Conv2d<T>>(in, channels, kernel, rng, Conv2dOptions{2, 0, 1})));
      in = channels;
      size = (size - kernel) / 2 + 1;
    }
    primary_ = this->register_module(
        "primary", std::make_shared<Conv2d<T>>(in, cfg_.primary_types * cfg_.primary_dim, cfg_.primary_kernel, rng,
                                               Conv2dOptions{cfg_.primary_stride, 0, 1}));
    const int grid = (size - cfg_.primary_kernel) / cfg_.primary_stride + 1;
    if (grid <= 0) throw ConstructionError("capsule stem leaves no spatial extent for primary capsules");
    n_in_ = static_cast<std::int64_t>(cfg_.primary_types) * grid * grid;
    // Transform matrices stored as [n_in, in_dim, out_caps*out_dim] for a batched matmul.
    route_weight_ = init::normal<T>({n_in_, cfg_.primary_dim, static_cast<std::int64_t>(cfg_.out_caps) * cfg_.out_dim},
                                    std::sqrt(1.0 / cfg_.primary_dim), rng);
    this->register_parameter("route_weight", route_weight_);
  }

  // Output capsule vectors [N, out_caps, out_dim]; every norm lies in (0, 1).
  Tensor<T> capsules(const Tensor<T>& images) {
    auto y = this->normalize(images);
    for (auto& c : stem_) y = relu(c->forward(y));
    y = primary_->forward(y);  // [N, types*dim, g, g]
    const auto n = y.dim(0);
    const std::int64_t types = cfg_.primary_types, din = cfg_.primary_dim;
    const std::int64_t dout = cfg_.out_dim, nout = cfg_.out_caps;
    y = reshape(y, {n, types, din, -1});
    auto u = squash(reshape(permute(y, {0, 1, 3, 2}), {n, n_in_, din}));  // [N, n_in, din]

    // u_hat[b,i,j,:] = W_i^T u[b,i]
    auto u_i = permute(u, {1, 0, 2});                                            // [n_in, N, din]
    auto u_hat = permute(bmm(u_i, route_weight_), {1, 0, 2});                   // [N, n_in, nout*dout]
    u_hat = reshape(u_hat, {n, n_in_, nout, dout});

    auto logits = Tensor<T>::zeros({n, n_in_, nout});
    Tensor<T> v;
    for (int it = 0; it < cfg_.routing_iterations; ++it) {
      auto coupling = softmax(logits, 2);
      auto s = sum(mul(reshape(coupling, {n, n_in_, nout, 1}), u_hat), 1);  // [N, nout, dout]
      v = squash(s);
      if (it + 1 < cfg_.routing_iterations)
        logits = add(logits, sum(mul(u_hat, reshape(v, {n, 1, nout, dout})), 3));
    }
    return v;
  }

  Tensor<T> forward(const Tensor<T>& images) override {
    auto v = capsules(images);
    return reshape(v, {v.dim(0), -1});
  }

 private:
  CapsuleConfig cfg_;
  std::vector<std::shared_ptr<Conv2d<T>>> stem_;
  std::shared_ptr<Conv2d<T>> primary_;
  std::int64_t n_in_ = 0;
  Tensor<T> route_weight_;
};

// ---------------------------------------------------------------- DeiT

template <std::floating_point T>
class SelfAttention : public Module<T> {
 public:
  SelfAttention(int dim, int heads, std::mt19937_64& rng) : dim_(dim), heads_(heads) {
    if (dim % heads != 0) throw ConstructionError("attention dim " + std::to_string(dim) + " not divisible by heads");
    qkv_ = this->register_module("qkv", std::make_shared<Linear<T>>(dim, 3 * dim, rng));
    proj_ = this->register_module("proj", std::make_shared<Linear<T>>(dim, dim, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    const auto n = x.dim(0), t = x.dim(1);
    const std::int64_t dh = dim_ / heads_;
    auto qkv = permute(reshape(qkv_->forward(x), {n, t, 3, heads_, dh}), {2, 0, 3, 1, 4});  // [3,N,H,T,dh]
    auto part = [&](std::int64_t k) { return reshape(slice(qkv, 0, k, 1), {n * heads_, t, dh}); };
    auto q = part(0), kk = part(1), v = part(2);
    auto attn = softmax(scale(bmm(q, transpose_last2(kk)), T(1) / std::sqrt(static_cast<T>(dh))), -1);
    auto out = permute(reshape(bmm(attn, v), {n, heads_, t, dh}), {0, 2, 1, 3});
    return proj_->forward(reshape(out, {n, t, dim_}));
  }

 private:
  std::int64_t dim_, heads_;
  std::shared_ptr<Linear<T>> qkv_, proj_;
};

template <std::floating_point T>
class TransformerBlock : public Module<T> {
 public:
  TransformerBlock(int dim, int heads, int mlp, std::mt19937_64& rng) {
    ln1_ = this->register_module("ln1", std::make_shared<LayerNorm<T>>(dim));
    attn_ = this->register_module("attn", std::make_shared<SelfAttention<T>>(dim, heads, rng));
    ln2_ = this->register_module("ln2", std::make_shared<LayerNorm<T>>(dim));
    fc1_ = this->register_module("fc1", std::make_shared<Linear<T>>(dim, mlp, rng));
    fc2_ = this->register_module("fc2", std::make_shared<Linear<T>>(mlp, dim, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto y = add(x, attn_->forward(ln1_->forward(x)));
    return add(y, fc2_->forward(gelu(fc1_->forward(ln2_->forward(y)))));
  }

 private:
  std::shared_ptr<LayerNorm<T>> ln1_, ln2_;
  std::shared_ptr<SelfAttention<T>> attn_;
  std::shared_ptr<Linear<T>> fc1_, fc2_;
};

// Patch embedding + class and distillation tokens + pre-norm encoder.
// The feature is the final class-token embedding.
template <std::floating_point T>
class VitDistilled : public Backbone<T> {
 public:
  VitDistilled(Variant v, std::mt19937_64& rng) : Backbone<T>(backbone_info(BackboneId::vit_distilled, v)), cfg_(vit_config(v)) {
    const int size = this->info().input_size;
    if (size % cfg_.patch != 0) throw ConstructionError("input size not divisible by patch size");
    const std::int64_t tokens = static_cast<std::int64_t>(size / cfg_.patch) * (size / cfg_.patch) + 2;
    patch_ = this->register_module("patch", std::make_shared<Conv2d<T>>(3, cfg_.dim, cfg_.patch, rng, Conv2dOptions{cfg_.patch, 0, 1}));
    cls_ = init::normal<T>({1, 1, cfg_.dim}, 0.02, rng);
    dist_ = init::normal<T>({1, 1, cfg_.dim}, 0.02, rng);
    pos_ = init::normal<T>({1, tokens, cfg_.dim}, 0.02, rng);
    this->register_parameter("cls_token", cls_);
    this->register_parameter("dist_token", dist_);
    this->register_parameter("pos_embed", pos_);
    for (int i = 0; i < cfg_.depth; ++i)
      blocks_.push_back(this->register_module("block" + std::to_string(i), std::make_shared<TransformerBlock<T>>(cfg_.dim, cfg_.heads, cfg_.mlp, rng)));
    norm_ = this->register_module("norm", std::make_shared<LayerNorm<T>>(cfg_.dim));
  }

  Tensor<T> forward(const Tensor<T>& images) override {
    auto p = patch_->forward(this->normalize(images));  // [N, D, g, g]
    const auto n = p.dim(0);
    const std::int64_t d = cfg_.dim;
    auto patches = permute(reshape(p, {n, d, -1}), {0, 2, 1});
    auto zeros = Tensor<T>::zeros({n, 1, d});
    auto x = concat<T>({add(zeros, cls_), add(zeros, dist_), patches}, 1);
    x = add(x, pos_);
    for (auto& b : blocks_) x = b->forward(x);
    x = norm_->forward(x);
    return reshape(slice(x, 1, 0, 1), {n, d});
  }

 private:
  VitConfig cfg_;
  std::shared_ptr<Conv2d<T>> patch_;
  Tensor<T> cls_, dist_, pos_;
  std::vector<std::shared_ptr<TransformerBlock<T>>> blocks_;
  std::shared_ptr<LayerNorm<T>> norm_;
};

}  // namespace freshcast::nn
