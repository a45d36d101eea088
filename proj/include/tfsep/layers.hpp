/*
 * Copyright 2026 The tfsep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Parameter-holding layers. Each layer owns its learned tensors, exposes them
// by hierarchical name, and reports its own static cost for a given input.

#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tfsep/ops.hpp"
#include "tfsep/random.hpp"
#include "tfsep/tensor.hpp"

namespace tfsep {

/// Static cost of one layer evaluated on a given input shape. `macs` counts
/// convolution multiply-accumulates only; everything elementwise (BN, ReLU,
/// pooling, normalization, residual adds) lands in `other_ops`.
struct LayerCost {
  Shape out;
  std::size_t params = 0;
  std::size_t macs = 0;
  std::size_t other_ops = 0;

  LayerCost& then(const LayerCost& next) {
    out = next.out;
    params += next.params;
    macs += next.macs;
    other_ops += next.other_ops;
    return *this;
  }
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

inline std::string join_name(const std::string& prefix, const std::string& local) {
  return prefix.empty() ? local : prefix + "." + local;
}

inline Shape channel_vector(std::size_t c) { return {1, c, 1, 1}; }

template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) = 0;
  virtual void buffers(const std::string&, std::vector<NamedTensor<T>>&) {}
  virtual void set_training(bool) {}
  virtual LayerCost cost(const Shape& in) const = 0;
  virtual std::string kind() const = 0;
};

template <typename T>
class Conv2d final : public Module<T> {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kf, std::size_t kt,
         Conv2dOptions opt, bool with_bias, Rng& rng)
      : opt_(opt) {
    if (opt.groups == 0 || in_ch % opt.groups != 0 || out_ch % opt.groups != 0) {
      throw ShapeError("Conv2d: channels " + std::to_string(in_ch) + "->" +
                       std::to_string(out_ch) + " not divisible by groups " +
                       std::to_string(opt.groups));
    }
    const Shape ws{out_ch, in_ch / opt.groups, kf, kt};
    // He-normal on fan-in.
    const double fan_in = static_cast<double>(ws.c * kf * kt);
    weight_ = random_normal<T>(ws, rng, std::sqrt(2.0 / fan_in)).set_requires_grad();
    if (with_bias) bias_ = Tensor<T>::zeros(channel_vector(out_ch)).set_requires_grad();
  }

  Tensor<T> forward(const Tensor<T>& x) override { return conv2d(x, weight_, bias_, opt_); }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), weight_});
    if (bias_.defined()) out.push_back({join_name(prefix, "bias"), bias_});
  }

  LayerCost cost(const Shape& in) const override {
    const Shape ws = weight_.shape();
    const Shape os = conv2d_shape(in, ws, opt_);
    LayerCost c;
    c.out = os;
    c.params = ws.numel() + (bias_.defined() ? bias_.numel() : 0);
    c.macs = ws.f * ws.t * ws.c * os.c * os.f * os.t * os.n;
    return c;
  }

  std::string kind() const override { return "Conv2d"; }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const Conv2dOptions& options() const { return opt_; }

 private:
  Conv2dOptions opt_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class BatchNorm2d final : public Module<T> {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  explicit BatchNorm2d(std::size_t channels)
      : gamma_(Tensor<T>::full(channel_vector(channels), T{1}).set_requires_grad()),
        beta_(Tensor<T>::zeros(channel_vector(channels)).set_requires_grad()),
        running_mean_(Tensor<T>::zeros(channel_vector(channels))),
        running_var_(Tensor<T>::full(channel_vector(channels), T{1})) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    return batch_norm(x, gamma_, beta_, running_mean_, running_var_,
                      BatchNormOptions{training_, kMomentum, kEpsilon});
  }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({join_name(prefix, "gamma"), gamma_});
    out.push_back({join_name(prefix, "beta"), beta_});
  }
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({join_name(prefix, "running_mean"), running_mean_});
    out.push_back({join_name(prefix, "running_var"), running_var_});
  }
  void set_training(bool on) override { training_ = on; }

  LayerCost cost(const Shape& in) const override {
    if (in.c != gamma_.numel()) throw ShapeError("BatchNorm2d: channel mismatch on " + in.str());
    return {in, 2 * gamma_.numel(), 0, in.numel()};
  }
  std::string kind() const override { return "BatchNorm2d"; }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
  bool training_ = true;
};

/// conv → BN → ReLU. Convs followed by BN carry no bias.
template <typename T>
class ConvBnRelu final : public Module<T> {
 public:
  ConvBnRelu(std::size_t in_ch, std::size_t out_ch, std::size_t kf, std::size_t kt,
             Conv2dOptions opt, Rng& rng)
      : conv_(in_ch, out_ch, kf, kt, opt, false, rng), bn_(out_ch) {}

  Tensor<T> forward(const Tensor<T>& x) override { return relu(bn_.forward(conv_.forward(x))); }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    conv_.parameters(join_name(prefix, "conv"), out);
    bn_.parameters(join_name(prefix, "bn"), out);
  }
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    bn_.buffers(join_name(prefix, "bn"), out);
  }
  void set_training(bool on) override { bn_.set_training(on); }

  LayerCost cost(const Shape& in) const override {
    LayerCost c = conv_.cost(in);
    c.then(bn_.cost(c.out));
    c.other_ops += c.out.numel();  // relu
    return c;
  }
  std::string kind() const override { return "ConvBnRelu"; }

  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

/// Learned per-channel blend between identity and frequency-wise instance
/// normalization; three scalars per channel.
template <typename T>
class AdaResNorm final : public Module<T> {
 public:
  static constexpr double kEpsilon = 1e-5;

  explicit AdaResNorm(std::size_t channels)
      : lambda_(Tensor<T>::full(channel_vector(channels), T(0.5)).set_requires_grad()),
        gamma_(Tensor<T>::full(channel_vector(channels), T{1}).set_requires_grad()),
        beta_(Tensor<T>::zeros(channel_vector(channels)).set_requires_grad()) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    return ada_res_norm(x, lambda_, gamma_, beta_, kEpsilon);
  }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    out.push_back({join_name(prefix, "lambda"), lambda_});
    out.push_back({join_name(prefix, "gamma"), gamma_});
    out.push_back({join_name(prefix, "beta"), beta_});
  }

  LayerCost cost(const Shape& in) const override {
    if (in.c != lambda_.numel()) throw ShapeError("AdaResNorm: channel mismatch on " + in.str());
    return {in, 3 * lambda_.numel(), 0, in.numel()};
  }
  std::string kind() const override { return "AdaResNorm"; }

  Tensor<T>& lambda() { return lambda_; }
  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }

 private:
  Tensor<T> lambda_, gamma_, beta_;
};

template <typename T>
class MaxPool2d final : public Module<T> {
 public:
  explicit MaxPool2d(std::size_t k = 2) : k_(k) {}

  Tensor<T> forward(const Tensor<T>& x) override { return max_pool2d(x, k_, k_, k_, k_); }
  void parameters(const std::string&, std::vector<NamedTensor<T>>&) override {}

  LayerCost cost(const Shape& in) const override {
    if (in.f % k_ != 0 || in.t % k_ != 0) {
      throw ShapeError("MaxPool2d(" + std::to_string(k_) + ") does not tile " + in.str());
    }
    return {{in.n, in.c, in.f / k_, in.t / k_}, 0, 0, in.numel()};
  }
  std::string kind() const override { return "MaxPool2d"; }

 private:
  std::size_t k_;
};

template <typename T>
class GlobalAvgPool final : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return mean_over_axis(x, Axis::FT); }
  void parameters(const std::string&, std::vector<NamedTensor<T>>&) override {}
  LayerCost cost(const Shape& in) const override { return {{in.n, in.c, 1, 1}, 0, 0, in.numel()}; }
  std::string kind() const override { return "GlobalAvgPool"; }
};

/// Modules applied in order; children are named by their index.
template <typename T>
class Sequential final : public Module<T> {
 public:
  Sequential& push(std::unique_ptr<Module<T>> m) {
    children_.push_back(std::move(m));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = x;
    for (auto& m : children_) h = m->forward(h);
    return h;
  }
  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    for (std::size_t i = 0; i < children_.size(); ++i)
      children_[i]->parameters(join_name(prefix, std::to_string(i)), out);
  }
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    for (std::size_t i = 0; i < children_.size(); ++i)
      children_[i]->buffers(join_name(prefix, std::to_string(i)), out);
  }
  void set_training(bool on) override {
    for (auto& m : children_) m->set_training(on);
  }
  LayerCost cost(const Shape& in) const override {
    LayerCost c{in, 0, 0, 0};
    for (const auto& m : children_) c.then(m->cost(c.out));
    return c;
  }
  std::string kind() const override { return "Sequential"; }

  std::size_t size() const { return children_.size(); }
  Module<T>& operator[](std::size_t i) { return *children_[i]; }

 private:
  std::vector<std::unique_ptr<Module<T>>> children_;
};

}  // namespace tfsep
