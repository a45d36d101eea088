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

// Time-frequency separated convolution block and the consecutive-kernel
// baseline it is compared against.
//
// TfSepConvs data flow for an input of C channels and output of C' channels:
//
//   x ─[1x1 conv+BN+ReLU, only if C != C']─ shuffle ─ split ─┬─ freq path ─┐
//                                                             └─ temp path ─┴─ concat
//
// A path processes its half h as
//   v = PW1x1(mean_axis(DW(h)))      (each conv followed by BN + ReLU)
//   out = h + broadcast_axis(v)
// where the frequency path uses a 3x1 depthwise kernel and averages over F,
// and the temporal path uses 1x3 and averages over T.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tfsep/layers.hpp"
#include "tfsep/ops.hpp"

namespace tfsep {

/// One broadcast path. `axis` is the axis averaged away (F for the frequency
/// path, T for the temporal path); the depthwise kernel runs along it.
template <typename T>
class BroadcastPath final : public Module<T> {
 public:
  BroadcastPath(std::size_t channels, Axis axis, Rng& rng)
      : axis_(axis),
        dw_(channels, channels, axis == Axis::F ? 3 : 1, axis == Axis::F ? 1 : 3,
            Conv2dOptions{1, 1, axis == Axis::F ? 1u : 0u, axis == Axis::F ? 0u : 1u, channels},
            rng),
        pw_(channels, channels, 1, 1, Conv2dOptions{}, rng) {
    if (axis == Axis::FT) throw std::invalid_argument("BroadcastPath axis must be F or T");
  }

  /// The reduced vector v: (N, C, 1, T) for the frequency path, (N, C, F, 1)
  /// for the temporal path.
  Tensor<T> broadcast_vector(const Tensor<T>& x) {
    return pw_.forward(mean_over_axis(dw_.forward(x), axis_));
  }

  Tensor<T> forward(const Tensor<T>& x) override { return broadcast_add(x, broadcast_vector(x)); }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    dw_.parameters(join_name(prefix, "dw"), out);
    pw_.parameters(join_name(prefix, "pw"), out);
  }
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    dw_.buffers(join_name(prefix, "dw"), out);
    pw_.buffers(join_name(prefix, "pw"), out);
  }
  void set_training(bool on) override {
    dw_.set_training(on);
    pw_.set_training(on);
  }

  LayerCost cost(const Shape& in) const override {
    LayerCost c = dw_.cost(in);
    const Shape pooled = axis_ == Axis::F ? Shape{in.n, in.c, 1, in.t} : Shape{in.n, in.c, in.f, 1};
    c.other_ops += c.out.numel();  // mean
    c.then(pw_.cost(pooled));
    c.out = in;
    c.other_ops += in.numel();  // broadcast add
    return c;
  }
  std::string kind() const override { return axis_ == Axis::F ? "FreqPath" : "TempPath"; }

  Axis axis() const { return axis_; }
  ConvBnRelu<T>& depthwise() { return dw_; }
  ConvBnRelu<T>& pointwise() { return pw_; }

 private:
  Axis axis_;
  ConvBnRelu<T> dw_;
  ConvBnRelu<T> pw_;
};

enum class PathMode { Both, FreqOnly, TempOnly };

struct TfSepConvsSpec {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  // 0 or 1 disables the shuffle unit.
  std::size_t shuffle_groups = 2;
  PathMode mode = PathMode::Both;

  void validate() const {
    if (in_ch == 0 || out_ch == 0) throw ShapeError("TfSepConvs: channel counts must be positive");
    if (mode == PathMode::Both && out_ch % 2 != 0) {
      throw ShapeError("TfSepConvs: output channels must be even, got " + std::to_string(out_ch));
    }
    if (shuffle_groups > 1 && out_ch % shuffle_groups != 0) {
      throw ShapeError("TfSepConvs: " + std::to_string(out_ch) +
                       " channels not divisible by shuffle groups " +
                       std::to_string(shuffle_groups));
    }
  }
  bool has_transition() const { return in_ch != out_ch; }
};

template <typename T>
class TfSepConvs final : public Module<T> {
 public:
  TfSepConvs(const TfSepConvsSpec& spec, Rng& rng) : spec_(spec) {
    spec.validate();
    if (spec.has_transition()) transition_.emplace(spec.in_ch, spec.out_ch, 1, 1, Conv2dOptions{}, rng);
    const std::size_t path_ch = spec.mode == PathMode::Both ? spec.out_ch / 2 : spec.out_ch;
    if (spec.mode != PathMode::TempOnly) freq_ = std::make_unique<BroadcastPath<T>>(path_ch, Axis::F, rng);
    if (spec.mode != PathMode::FreqOnly) temp_ = std::make_unique<BroadcastPath<T>>(path_ch, Axis::T, rng);
  }

  /// Transition (if any) followed by the shuffle unit: the tensor that is
  /// split between the two paths.
  Tensor<T> mixed_input(const Tensor<T>& x) {
    if (x.shape().c != spec_.in_ch) {
      throw ShapeError("TfSepConvs expects " + std::to_string(spec_.in_ch) + " channels, got " +
                       x.shape().str());
    }
    Tensor<T> h = transition_ ? transition_->forward(x) : x;
    if (spec_.shuffle_groups > 1) h = channel_shuffle(h, spec_.shuffle_groups);
    return h;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = mixed_input(x);
    switch (spec_.mode) {
      case PathMode::FreqOnly:
        return freq_->forward(h);
      case PathMode::TempOnly:
        return temp_->forward(h);
      case PathMode::Both:
        break;
    }
    auto [xf, xt] = split_channels(h);
    return concat_channels(freq_->forward(xf), temp_->forward(xt));
  }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    if (transition_) transition_->parameters(join_name(prefix, "transition"), out);
    if (freq_) freq_->parameters(join_name(prefix, "freq"), out);
    if (temp_) temp_->parameters(join_name(prefix, "temp"), out);
  }
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    if (transition_) transition_->buffers(join_name(prefix, "transition"), out);
    if (freq_) freq_->buffers(join_name(prefix, "freq"), out);
    if (temp_) temp_->buffers(join_name(prefix, "temp"), out);
  }
  void set_training(bool on) override {
    if (transition_) transition_->set_training(on);
    if (freq_) freq_->set_training(on);
    if (temp_) temp_->set_training(on);
  }

  LayerCost cost(const Shape& in) const override {
    if (in.c != spec_.in_ch) throw ShapeError("TfSepConvs: channel mismatch on " + in.str());
    LayerCost c{in, 0, 0, 0};
    if (transition_) c.then(transition_->cost(in));
    const Shape mixed = c.out;
    switch (spec_.mode) {
      case PathMode::FreqOnly:
        c.then(freq_->cost(mixed));
        break;
      case PathMode::TempOnly:
        c.then(temp_->cost(mixed));
        break;
      case PathMode::Both: {
        const Shape half{mixed.n, mixed.c / 2, mixed.f, mixed.t};
        c.then(freq_->cost(half));
        c.then(temp_->cost(half));
        c.out = mixed;
        break;
      }
    }
    return c;
  }
  std::string kind() const override { return "TfSepConvs"; }

  const TfSepConvsSpec& spec() const { return spec_; }
  ConvBnRelu<T>* transition() { return transition_ ? &*transition_ : nullptr; }
  BroadcastPath<T>* freq_path() { return freq_.get(); }
  BroadcastPath<T>* temp_path() { return temp_.get(); }

 private:
  TfSepConvsSpec spec_;
  std::optional<ConvBnRelu<T>> transition_;
  std::unique_ptr<BroadcastPath<T>> freq_;
  std::unique_ptr<BroadcastPath<T>> temp_;
};

/// Baseline: 3x1 then 1x3 depthwise kernels applied in sequence to all
/// channels, a pointwise conv, and an identity residual.
template <typename T>
class ConsecutiveBlock final : public Module<T> {
 public:
  ConsecutiveBlock(std::size_t channels, Rng& rng)
      : channels_(channels),
        dw_f_(channels, channels, 3, 1, Conv2dOptions{1, 1, 1, 0, channels}, rng),
        dw_t_(channels, channels, 1, 3, Conv2dOptions{1, 1, 0, 1, channels}, rng),
        pw_(channels, channels, 1, 1, Conv2dOptions{}, rng) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.shape().c != channels_) {
      throw ShapeError("ConsecutiveBlock expects " + std::to_string(channels_) +
                       " channels, got " + x.shape().str());
    }
    return add(x, pw_.forward(dw_t_.forward(dw_f_.forward(x))));
  }

  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    dw_f_.parameters(join_name(prefix, "dw_f"), out);
    dw_t_.parameters(join_name(prefix, "dw_t"), out);
    pw_.parameters(join_name(prefix, "pw"), out);
  }
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    dw_f_.buffers(join_name(prefix, "dw_f"), out);
    dw_t_.buffers(join_name(prefix, "dw_t"), out);
    pw_.buffers(join_name(prefix, "pw"), out);
  }
  void set_training(bool on) override {
    dw_f_.set_training(on);
    dw_t_.set_training(on);
    pw_.set_training(on);
  }

  LayerCost cost(const Shape& in) const override {
    LayerCost c = dw_f_.cost(in);
    c.then(dw_t_.cost(c.out)).then(pw_.cost(c.out));
    c.other_ops += in.numel();
    return c;
  }
  std::string kind() const override { return "ConsecutiveBlock"; }

  ConvBnRelu<T>& depthwise_f() { return dw_f_; }
  ConvBnRelu<T>& depthwise_t() { return dw_t_; }
  ConvBnRelu<T>& pointwise() { return pw_; }

 private:
  std::size_t channels_;
  ConvBnRelu<T> dw_f_;
  ConvBnRelu<T> dw_t_;
  ConvBnRelu<T> pw_;
};

}  // namespace tfsep
