#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "freshcast/nn/functional.hpp"

namespace freshcast::nn {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

// Owner of parameters, buffers and child modules. Registration stores
// pointers into the derived object, so modules are pinned (non-copyable,
// non-movable) and always held by shared_ptr.
template <std::floating_point T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<NamedTensor<T>> named_parameters(const std::string& prefix = "") {
    std::vector<NamedTensor<T>> out;
    for (auto& [name, t] : params_) out.push_back({prefix + name, t});
    for (auto& [name, m] : children_)
      for (auto& nt : m->named_parameters(prefix + name + ".")) out.push_back(nt);
    return out;
  }

  std::vector<NamedTensor<T>> named_buffers(const std::string& prefix = "") {
    std::vector<NamedTensor<T>> out;
    for (auto& [name, t] : buffers_) out.push_back({prefix + name, t});
    for (auto& [name, m] : children_)
      for (auto& nt : m->named_buffers(prefix + name + ".")) out.push_back(nt);
    return out;
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& nt : named_parameters()) out.push_back(nt.tensor);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->numel();
    return n;
  }

  void set_training(bool on) {
    training_ = on;
    for (auto& [name, m] : children_) m->set_training(on);
  }
  bool training() const { return training_; }

  void set_trainable(bool on) {
    for (auto* p : parameters()) p->set_requires_grad(on);
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 protected:
  Tensor<T>& register_parameter(const std::string& name, Tensor<T>& t) {
    t.set_requires_grad(true);
    params_.emplace_back(name, &t);
    return t;
  }
  Tensor<T>& register_buffer(const std::string& name, Tensor<T>& t) {
    buffers_.emplace_back(name, &t);
    return t;
  }
  template <class M>
  std::shared_ptr<M> register_module(const std::string& name, std::shared_ptr<M> m) {
    children_.emplace_back(name, m);
    return m;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>*>> params_;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
  bool training_ = false;
};

namespace init {

template <class T>
Tensor<T> normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(v));
}

// He-normal for layers followed by ReLU-family activations.
template <class T>
Tensor<T> kaiming(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return normal<T>(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

template <class T>
Tensor<T> xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(v));
}

}  // namespace init

template <std::floating_point T>
class Linear : public Module<T> {
 public:
  Linear(std::int64_t in, std::int64_t out, std::mt19937_64& rng, bool relu_init = false)
      : in_(in), out_(out) {
    weight_ = relu_init ? init::kaiming<T>({in, out}, static_cast<std::size_t>(in), rng)
                        : init::xavier<T>({in, out}, static_cast<std::size_t>(in), static_cast<std::size_t>(out), rng);
    bias_ = Tensor<T>::zeros({out});
    this->register_parameter("weight", weight_);
    this->register_parameter("bias", bias_);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight_, bias_); }
  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }

 private:
  std::int64_t in_, out_;
  Tensor<T> weight_, bias_;
};

template <std::floating_point T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::int64_t in, std::int64_t out, int kernel, std::mt19937_64& rng, Conv2dOptions opt = {}, bool bias = true)
      : opt_(opt), out_(out) {
    const std::int64_t cg = in / opt.groups;
    weight_ = init::kaiming<T>({out, cg, kernel, kernel}, static_cast<std::size_t>(cg * kernel * kernel), rng);
    this->register_parameter("weight", weight_);
    if (bias) {
      bias_ = Tensor<T>::zeros({out});
      this->register_parameter("bias", bias_);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, opt_); }
  std::int64_t out_channels() const { return out_; }

 private:
  Conv2dOptions opt_;
  std::int64_t out_;
  Tensor<T> weight_, bias_;
};

template <std::floating_point T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(std::int64_t channels) {
    gamma_ = Tensor<T>::full({channels}, T(1));
    beta_ = Tensor<T>::zeros({channels});
    running_mean_ = Tensor<T>::zeros({channels});
    running_var_ = Tensor<T>::full({channels}, T(1));
    this->register_parameter("gamma", gamma_);
    this->register_parameter("beta", beta_);
    this->register_buffer("running_mean", running_mean_);
    this->register_buffer("running_var", running_var_);
  }

  // Non-const: training mode updates running statistics.
  Tensor<T> forward(const Tensor<T>& x) {
    return batch_norm2d(x, gamma_, beta_, running_mean_, running_var_, this->training());
  }

 private:
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

template <std::floating_point T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(std::int64_t dim) {
    gamma_ = Tensor<T>::full({dim}, T(1));
    beta_ = Tensor<T>::zeros({dim});
    this->register_parameter("gamma", gamma_);
    this->register_parameter("beta", beta_);
  }
  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma_, beta_); }

 private:
  Tensor<T> gamma_, beta_;
};

// Conv -> BN -> activation, the building block shared by the CNN backbones.
enum class Activation { none, relu, relu6 };

template <class T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::relu6: return relu6(x);
    case Activation::none: break;
  }
  return x;
}

template <std::floating_point T>
class ConvBnAct : public Module<T> {
 public:
  ConvBnAct(std::int64_t in, std::int64_t out, int kernel, std::mt19937_64& rng, Conv2dOptions opt,
            Activation act)
      : act_(act) {
    conv_ = this->register_module("conv", std::make_shared<Conv2d<T>>(in, out, kernel, rng, opt, false));
    bn_ = this->register_module("bn", std::make_shared<BatchNorm2d<T>>(out));
  }
  Tensor<T> forward(const Tensor<T>& x) { return activate(bn_->forward(conv_->forward(x)), act_); }

 private:
  Activation act_;
  std::shared_ptr<Conv2d<T>> conv_;
  std::shared_ptr<BatchNorm2d<T>> bn_;
};

}  // namespace freshcast::nn
