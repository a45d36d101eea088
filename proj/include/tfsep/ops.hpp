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

// Differentiable operations on Tensor. Every op validates shapes before it
// touches data and records a backward closure when the tape is active.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tfsep/tensor.hpp"

namespace tfsep {

namespace detail {

template <typename T>
std::vector<T>* grad_target(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

inline std::ptrdiff_t ceil_div(std::ptrdiff_t a, std::ptrdiff_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// Output index range [lo, hi) such that o*stride + k - pad lies in [0, in).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t out,
                                                             std::ptrdiff_t in,
                                                             std::ptrdiff_t k,
                                                             std::ptrdiff_t stride,
                                                             std::ptrdiff_t pad) {
  std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, ceil_div(pad - k, stride));
  std::ptrdiff_t hi = std::min<std::ptrdiff_t>(out, (in - 1 + pad - k) / stride + 1);
  if (in - 1 + pad - k < 0) hi = 0;
  return {lo, std::max(lo, hi)};
}

// Running total of multiply-accumulates executed by conv2d on this thread.
inline std::uint64_t& conv_mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

}  // namespace detail

enum class Axis { F, T, FT };

struct Conv2dOptions {
  std::size_t stride_f = 1;
  std::size_t stride_t = 1;
  std::size_t pad_f = 0;
  std::size_t pad_t = 0;
  std::size_t groups = 1;
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride,
                                std::size_t pad) {
  if (stride == 0) throw ShapeError("conv stride must be >= 1");
  if (kernel == 0) throw ShapeError("conv kernel extent must be >= 1");
  if (in + 2 * pad < kernel) {
    throw ShapeError("conv kernel " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Shape of conv2d(x, w) under `opt`; throws on any incompatibility.
/// Weight layout is (out_ch, in_ch / groups, k_f, k_t).
inline Shape conv2d_shape(const Shape& x, const Shape& w, const Conv2dOptions& opt) {
  if (opt.groups == 0) throw ShapeError("conv groups must be positive");
  if (x.c % opt.groups != 0 || w.n % opt.groups != 0) {
    throw ShapeError("channels (in " + std::to_string(x.c) + ", out " + std::to_string(w.n) +
                     ") not divisible by groups " + std::to_string(opt.groups));
  }
  if (w.c * opt.groups != x.c) {
    throw ShapeError("conv weight " + w.str() + " expects " + std::to_string(w.c * opt.groups) +
                     " input channels, got " + std::to_string(x.c));
  }
  return {x.n, w.n, conv_out_dim(x.f, w.f, opt.stride_f, opt.pad_f),
          conv_out_dim(x.t, w.t, opt.stride_t, opt.pad_t)};
}

/// Grouped 2D cross-correlation. `bias` may be undefined; otherwise it has
/// out_ch elements.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dOptions& opt) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const Shape os = conv2d_shape(xs, ws, opt);
  if (bias.defined() && bias.numel() != ws.n) {
    throw ShapeError("conv bias has " + std::to_string(bias.numel()) + " elements, expected " +
                     std::to_string(ws.n));
  }

  using idx = std::ptrdiff_t;
  const idx in_per_group = static_cast<idx>(ws.c);
  const idx out_per_group = static_cast<idx>(ws.n / opt.groups);
  const idx kf = ws.f, kt = ws.t;
  const idx sf = opt.stride_f, st = opt.stride_t, pf = opt.pad_f, pt = opt.pad_t;
  const idx fi = xs.f, ti = xs.t, fo = os.f, to = os.t;

  // Visits every (input element, weight, output element) triple once, with
  // contiguous inner runs along T.
  auto sweep = [=](auto&& inner) {
    for (idx n = 0; n < static_cast<idx>(xs.n); ++n) {
      for (idx oc = 0; oc < static_cast<idx>(ws.n); ++oc) {
        const idx g = oc / out_per_group;
        const idx out_base = (n * static_cast<idx>(ws.n) + oc) * fo * to;
        for (idx icg = 0; icg < in_per_group; ++icg) {
          const idx ic = g * in_per_group + icg;
          const idx in_base = (n * static_cast<idx>(xs.c) + ic) * fi * ti;
          const idx w_base = (oc * in_per_group + icg) * kf * kt;
          for (idx a = 0; a < kf; ++a) {
            auto [of_lo, of_hi] = detail::valid_range(fo, fi, a, sf, pf);
            for (idx b = 0; b < kt; ++b) {
              auto [ot_lo, ot_hi] = detail::valid_range(to, ti, b, st, pt);
              if (ot_lo >= ot_hi) continue;
              for (idx of = of_lo; of < of_hi; ++of) {
                const idx in_row = in_base + (of * sf + a - pf) * ti + b - pt;
                inner(out_base + of * to, in_row, w_base + a * kt + b, ot_lo, ot_hi);
              }
            }
          }
        }
      }
    }
  };

  detail::conv_mac_counter() += ws.f * ws.t * ws.c * os.c * os.f * os.t * os.n;
  std::vector<T> out(os.numel(), T{0});
  {
    const T* xd = x.data().data();
    const T* wd = weight.data().data();
    T* od = out.data();
    if (bias.defined()) {
      const T* bd = bias.data().data();
      for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t c = 0; c < os.c; ++c)
          std::fill_n(od + (n * os.c + c) * os.plane(), os.plane(), bd[c]);
    }
    sweep([&](idx out_row, idx in_row, idx w_at, idx lo, idx hi) {
      const T w = wd[w_at];
      T* o = od + out_row;
      if (st == 1) {
        for (idx ot = lo; ot < hi; ++ot) o[ot] += w * xd[in_row + ot];
      } else {
        for (idx ot = lo; ot < hi; ++ot) o[ot] += w * xd[in_row + ot * st];
      }
    });
  }

  return Tensor<T>::make_result(
      os, std::move(out), {x, weight, bias},
      [x, weight, bias, sweep, os, st](Node<T>& self) {
        std::vector<T>* gx = detail::grad_target(self, 0);
        std::vector<T>* gw = detail::grad_target(self, 1);
        std::vector<T>* gb = bias.defined() ? detail::grad_target(self, 2) : nullptr;
        const T* go = self.grad.data();
        const T* xd = x.data().data();
        const T* wd = weight.data().data();
        if (gx || gw) {
          sweep([&](idx out_row, idx in_row, idx w_at, idx lo, idx hi) {
            const T* g = go + out_row;
            if (gx) {
              const T w = wd[w_at];
              T* dst = gx->data();
              for (idx ot = lo; ot < hi; ++ot) dst[in_row + ot * st] += w * g[ot];
            }
            if (gw) {
              T acc{0};
              for (idx ot = lo; ot < hi; ++ot) acc += g[ot] * xd[in_row + ot * st];
              (*gw)[w_at] += acc;
            }
          });
        }
        if (gb) {
          for (std::size_t n = 0; n < os.n; ++n)
            for (std::size_t c = 0; c < os.c; ++c) {
              const T* g = go + (n * os.c + c) * os.plane();
              T acc{0};
              for (std::size_t i = 0; i < os.plane(); ++i) acc += g[i];
              (*gb)[c] += acc;
            }
        }
      });
}

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Per-channel batch normalization. In training mode the batch statistics
/// over (N, F, T) are used and the running buffers are updated in place;
/// in eval mode the running buffers are used.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var,
                     const BatchNormOptions& opt) {
  const Shape s = x.shape();
  const std::size_t C = s.c;
  for (const Tensor<T>* p :
       std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->numel() != C) {
      throw ShapeError("batch_norm parameter has " + std::to_string(p->numel()) +
                       " elements for " + std::to_string(C) + " channels");
    }
  }
  if (!(opt.epsilon > 0)) throw std::invalid_argument("batch_norm epsilon must be > 0");
  const std::size_t count = s.n * s.plane();
  if (opt.training && count == 0) throw ShapeError("batch_norm on empty batch in training mode");

  std::vector<T> mean(C), invstd(C);
  const T* xd = x.data().data();
  if (opt.training) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < C; ++c) {
      double sum = 0, sq = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = xd + (n * C + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(count);
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = xd + (n * C + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + opt.epsilon));
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      rm[c] = static_cast<T>((1 - opt.momentum) * rm[c] + opt.momentum * mu);
      rv[c] = static_cast<T>((1 - opt.momentum) * rv[c] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) +
                                                 opt.epsilon));
    }
  }

  std::vector<T> xhat(s.numel()), out(s.numel());
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T h = (xd[base + i] - mean[c]) * invstd[c];
        xhat[base + i] = h;
        out[base + i] = gd[c] * h + bd[c];
      }
    }

  const bool training = opt.training;
  return Tensor<T>::make_result(
      s, std::move(out), {x, gamma, beta},
      [s, gamma, xhat = std::move(xhat), invstd = std::move(invstd), training,
       count](Node<T>& self) {
        std::vector<T>* gx = detail::grad_target(self, 0);
        std::vector<T>* gg = detail::grad_target(self, 1);
        std::vector<T>* gb = detail::grad_target(self, 2);
        const T* go = self.grad.data();
        const T* gd = gamma.data().data();
        for (std::size_t c = 0; c < s.c; ++c) {
          T sum_g{0}, sum_gh{0};
          for (std::size_t n = 0; n < s.n; ++n) {
            const std::size_t base = (n * s.c + c) * s.plane();
            for (std::size_t i = 0; i < s.plane(); ++i) {
              sum_g += go[base + i];
              sum_gh += go[base + i] * xhat[base + i];
            }
          }
          if (gg) (*gg)[c] += sum_gh;
          if (gb) (*gb)[c] += sum_g;
          if (!gx) continue;
          const T scale = gd[c] * invstd[c];
          const T inv_count = T{1} / static_cast<T>(count);
          for (std::size_t n = 0; n < s.n; ++n) {
            const std::size_t base = (n * s.c + c) * s.plane();
            for (std::size_t i = 0; i < s.plane(); ++i) {
              if (training) {
                (*gx)[base + i] += scale * (go[base + i] - inv_count * sum_g -
                                            xhat[base + i] * inv_count * sum_gh);
              } else {
                (*gx)[base + i] += scale * go[base + i];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v = v > T{0} ? v : T{0};
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [x](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    if (!gx) return;
    const auto xd = x.data();
    for (std::size_t i = 0; i < xd.size(); ++i)
      if (xd[i] > T{0}) (*gx)[i] += self.grad[i];
  });
}

/// Max pooling with zero padding. Each pooled extent must tile exactly:
/// (dim - kernel) divisible by stride.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kf, std::size_t kt, std::size_t sf,
                     std::size_t st) {
  const Shape s = x.shape();
  if (kf == 0 || kt == 0 || sf == 0 || st == 0) throw ShapeError("max_pool2d extents must be >= 1");
  if (s.f < kf || s.t < kt || (s.f - kf) % sf != 0 || (s.t - kt) % st != 0) {
    throw ShapeError("max_pool2d kernel (" + std::to_string(kf) + "," + std::to_string(kt) +
                     ") stride (" + std::to_string(sf) + "," + std::to_string(st) +
                     ") does not tile input " + s.str());
  }
  const Shape os{s.n, s.c, (s.f - kf) / sf + 1, (s.t - kt) / st + 1};
  std::vector<T> out(os.numel());
  std::vector<std::size_t> argmax(os.numel());
  const auto xd = x.data();
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t in_base = nc * s.plane();
    for (std::size_t of = 0; of < os.f; ++of)
      for (std::size_t ot = 0; ot < os.t; ++ot) {
        std::size_t best = in_base + of * sf * s.t + ot * st;
        for (std::size_t a = 0; a < kf; ++a)
          for (std::size_t b = 0; b < kt; ++b) {
            const std::size_t at = in_base + (of * sf + a) * s.t + ot * st + b;
            if (xd[at] > xd[best]) best = at;
          }
        const std::size_t o = nc * os.plane() + of * os.t + ot;
        out[o] = xd[best];
        argmax[o] = best;
      }
  }
  return Tensor<T>::make_result(os, std::move(out), {x},
                                [argmax = std::move(argmax)](Node<T>& self) {
                                  auto* gx = detail::grad_target(self, 0);
                                  if (!gx) return;
                                  for (std::size_t o = 0; o < argmax.size(); ++o)
                                    (*gx)[argmax[o]] += self.grad[o];
                                });
}

/// Arithmetic mean along F, T, or both; the reduced axes keep extent 1.
template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, Axis axis) {
  const Shape s = x.shape();
  const bool over_f = axis == Axis::F || axis == Axis::FT;
  const bool over_t = axis == Axis::T || axis == Axis::FT;
  const Shape os{s.n, s.c, over_f ? 1 : s.f, over_t ? 1 : s.t};
  const std::size_t reduced = (over_f ? s.f : 1) * (over_t ? s.t : 1);
  if (reduced == 0) throw ShapeError("mean over empty axis of " + s.str());
  const T inv = T{1} / static_cast<T>(reduced);

  auto out_index = [=](std::size_t nc, std::size_t f, std::size_t t) {
    return nc * os.plane() + (over_f ? 0 : f) * os.t + (over_t ? 0 : t);
  };
  std::vector<T> out(os.numel(), T{0});
  const auto xd = x.data();
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
    for (std::size_t f = 0; f < s.f; ++f)
      for (std::size_t t = 0; t < s.t; ++t)
        out[out_index(nc, f, t)] += xd[nc * s.plane() + f * s.t + t];
  for (T& v : out) v *= inv;

  return Tensor<T>::make_result(os, std::move(out), {x}, [s, inv, out_index](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    if (!gx) return;
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
      for (std::size_t f = 0; f < s.f; ++f)
        for (std::size_t t = 0; t < s.t; ++t)
          (*gx)[nc * s.plane() + f * s.t + t] += inv * self.grad[out_index(nc, f, t)];
  });
}

namespace detail {

// Output channel c reads source channel src[c].
template <typename T>
Tensor<T> gather_channels(const Tensor<T>& x, std::vector<std::size_t> src, std::size_t out_c) {
  const Shape s = x.shape();
  const Shape os{s.n, out_c, s.f, s.t};
  std::vector<T> out(os.numel());
  const auto xd = x.data();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < out_c; ++c)
      std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((n * s.c + src[c]) * s.plane()),
                  s.plane(), out.begin() + static_cast<std::ptrdiff_t>((n * out_c + c) * s.plane()));
  return Tensor<T>::make_result(os, std::move(out), {x}, [s, os, src = std::move(src)](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    if (!gx) return;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < os.c; ++c) {
        const T* g = self.grad.data() + (n * os.c + c) * s.plane();
        T* dst = gx->data() + (n * s.c + src[c]) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += g[i];
      }
  });
}

}  // namespace detail

/// Source channel feeding output channel c: (c mod g)·(C/g) + c div g.
inline std::size_t shuffle_source(std::size_t c, std::size_t channels, std::size_t groups) {
  return (c % groups) * (channels / groups) + c / groups;
}

template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, std::size_t groups) {
  const std::size_t C = x.shape().c;
  if (groups == 0 || C % groups != 0) {
    throw ShapeError("channel_shuffle: " + std::to_string(C) + " channels not divisible by " +
                     std::to_string(groups) + " groups");
  }
  std::vector<std::size_t> src(C);
  for (std::size_t c = 0; c < C; ++c) src[c] = shuffle_source(c, C, groups);
  return detail::gather_channels(x, std::move(src), C);
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.shape().c) {
    throw ShapeError("channel slice [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + x.shape().str());
  }
  std::vector<std::size_t> src(count);
  for (std::size_t c = 0; c < count; ++c) src[c] = begin + c;
  return detail::gather_channels(x, std::move(src), count);
}

/// Even split into (first half, second half) along channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x) {
  const std::size_t C = x.shape().c;
  if (C % 2 != 0) throw ShapeError("split_channels: odd channel count " + std::to_string(C));
  return {slice_channels(x, 0, C / 2), slice_channels(x, C / 2, C / 2)};
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.f != sb.f || sa.t != sb.t) {
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  const Shape os{sa.n, sa.c + sb.c, sa.f, sa.t};
  const std::size_t P = sa.plane();
  std::vector<T> out(os.numel());
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(n * sa.c * P), sa.c * P,
                out.begin() + static_cast<std::ptrdiff_t>(n * os.c * P));
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(n * sb.c * P), sb.c * P,
                out.begin() + static_cast<std::ptrdiff_t>((n * os.c + sa.c) * P));
  }
  return Tensor<T>::make_result(os, std::move(out), {a, b}, [sa, sb, os, P](Node<T>& self) {
    auto* ga = detail::grad_target(self, 0);
    auto* gb = detail::grad_target(self, 1);
    for (std::size_t n = 0; n < sa.n; ++n) {
      const T* g = self.grad.data() + n * os.c * P;
      if (ga)
        for (std::size_t i = 0; i < sa.c * P; ++i) (*ga)[n * sa.c * P + i] += g[i];
      if (gb)
        for (std::size_t i = 0; i < sb.c * P; ++i) (*gb)[n * sb.c * P + i] += g[sa.c * P + i];
    }
  });
}

/// x + v where v has extent 1 along exactly one of F or T and matches x
/// elsewhere; v is repeated along that axis.
template <typename T>
Tensor<T> broadcast_add(const Tensor<T>& x, const Tensor<T>& v) {
  const Shape s = x.shape(), vs = v.shape();
  if (vs.n != s.n || vs.c != s.c) {
    throw ShapeError("broadcast_add: batch/channel mismatch " + s.str() + " vs " + vs.str());
  }
  const bool along_f = vs.f == 1 && vs.t == s.t && s.f != 1;
  const bool along_t = vs.t == 1 && vs.f == s.f && s.t != 1;
  const bool same = vs == s;
  if (!along_f && !along_t && !same) {
    throw ShapeError("broadcast_add: " + vs.str() + " does not broadcast along a single axis of " +
                     s.str());
  }
  auto v_index = [=](std::size_t nc, std::size_t f, std::size_t t) {
    return nc * vs.plane() + (along_f ? 0 : f) * vs.t + (along_t ? 0 : t);
  };
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto vd = v.data();
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
    for (std::size_t f = 0; f < s.f; ++f)
      for (std::size_t t = 0; t < s.t; ++t) out[nc * s.plane() + f * s.t + t] += vd[v_index(nc, f, t)];
  return Tensor<T>::make_result(s, std::move(out), {x, v}, [s, v_index](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    auto* gv = detail::grad_target(self, 1);
    if (gx)
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    if (gv)
      for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
        for (std::size_t f = 0; f < s.f; ++f)
          for (std::size_t t = 0; t < s.t; ++t)
            (*gv)[v_index(nc, f, t)] += self.grad[nc * s.plane() + f * s.t + t];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = detail::grad_target(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

/// Adaptive residual normalization:
///   y = λ_c·x + (1 − λ_c)·(γ_c·FreqIN(x) + β_c)
/// where FreqIN normalizes each (sample, frequency-bin) slice over (C, T).
template <typename T>
Tensor<T> ada_res_norm(const Tensor<T>& x, const Tensor<T>& lambda, const Tensor<T>& gamma,
                       const Tensor<T>& beta, double epsilon) {
  const Shape s = x.shape();
  for (const Tensor<T>* p : {&lambda, &gamma, &beta}) {
    if (p->numel() != s.c) {
      throw ShapeError("ada_res_norm parameter has " + std::to_string(p->numel()) +
                       " elements for " + std::to_string(s.c) + " channels");
    }
  }
  if (!(epsilon > 0)) throw std::invalid_argument("ada_res_norm epsilon must be > 0");
  const std::size_t group = s.c * s.t;
  if (group == 0) throw ShapeError("ada_res_norm on empty slice " + s.str());

  const auto xd = x.data();
  const auto ld = lambda.data(), gd = gamma.data(), bd = beta.data();
  std::vector<T> nhat(s.numel()), invstd(s.n * s.f), out(s.numel());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t f = 0; f < s.f; ++f) {
      double sum = 0, sq = 0;
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t t = 0; t < s.t; ++t) sum += xd[offset(s, n, c, f, t)];
      const double mu = sum / static_cast<double>(group);
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t t = 0; t < s.t; ++t) {
          const double d = xd[offset(s, n, c, f, t)] - mu;
          sq += d * d;
        }
      const T is = static_cast<T>(1.0 / std::sqrt(sq / static_cast<double>(group) + epsilon));
      invstd[n * s.f + f] = is;
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t t = 0; t < s.t; ++t) {
          const std::size_t i = offset(s, n, c, f, t);
          nhat[i] = static_cast<T>(xd[i] - mu) * is;
          out[i] = ld[c] * xd[i] + (T{1} - ld[c]) * (gd[c] * nhat[i] + bd[c]);
        }
    }

  return Tensor<T>::make_result(
      s, std::move(out), {x, lambda, gamma, beta},
      [s, x, lambda, gamma, beta, nhat = std::move(nhat), invstd = std::move(invstd),
       group](Node<T>& self) {
        auto* gx = detail::grad_target(self, 0);
        auto* gl = detail::grad_target(self, 1);
        auto* gg = detail::grad_target(self, 2);
        auto* gb = detail::grad_target(self, 3);
        const auto xd = x.data();
        const auto ld = lambda.data(), gd = gamma.data(), bd = beta.data();
        const T* go = self.grad.data();
        for (std::size_t n = 0; n < s.n; ++n)
          for (std::size_t f = 0; f < s.f; ++f) {
            T sum_d{0}, sum_dh{0};
            for (std::size_t c = 0; c < s.c; ++c)
              for (std::size_t t = 0; t < s.t; ++t) {
                const std::size_t i = offset(s, n, c, f, t);
                const T dn = go[i] * (T{1} - ld[c]) * gd[c];
                sum_d += dn;
                sum_dh += dn * nhat[i];
                if (gl) (*gl)[c] += go[i] * (xd[i] - (gd[c] * nhat[i] + bd[c]));
                if (gg) (*gg)[c] += go[i] * (T{1} - ld[c]) * nhat[i];
                if (gb) (*gb)[c] += go[i] * (T{1} - ld[c]);
              }
            if (!gx) continue;
            const T is = invstd[n * s.f + f];
            const T inv_m = T{1} / static_cast<T>(group);
            for (std::size_t c = 0; c < s.c; ++c)
              for (std::size_t t = 0; t < s.t; ++t) {
                const std::size_t i = offset(s, n, c, f, t);
                const T dn = go[i] * (T{1} - ld[c]) * gd[c];
                (*gx)[i] += ld[c] * go[i] + is * (dn - inv_m * sum_d - nhat[i] * inv_m * sum_dh);
              }
          }
      });
}

/// Swaps the F and T axes.
template <typename T>
Tensor<T> transpose_ft(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.t, s.f};
  std::vector<T> out(s.numel());
  const auto xd = x.data();
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
    for (std::size_t f = 0; f < s.f; ++f)
      for (std::size_t t = 0; t < s.t; ++t)
        out[nc * s.plane() + t * s.f + f] = xd[nc * s.plane() + f * s.t + t];
  return Tensor<T>::make_result(os, std::move(out), {x}, [s](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    if (!gx) return;
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
      for (std::size_t f = 0; f < s.f; ++f)
        for (std::size_t t = 0; t < s.t; ++t)
          (*gx)[nc * s.plane() + f * s.t + t] += self.grad[nc * s.plane() + t * s.f + f];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return Tensor<T>::make_result({1, 1, 1, 1}, {acc}, {x}, [](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    if (!gx) return;
    for (T& g : *gx) g += self.grad[0];
  });
}

/// Σ x_i·w_i against a constant weight vector.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::vector<T> weights) {
  if (weights.size() != x.numel()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                     x.shape().str());
  }
  T acc{0};
  const auto xd = x.data();
  for (std::size_t i = 0; i < weights.size(); ++i) acc += xd[i] * weights[i];
  return Tensor<T>::make_result({1, 1, 1, 1}, {acc}, {x}, [w = std::move(weights)](Node<T>& self) {
    auto* gx = detail::grad_target(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < w.size(); ++i) (*gx)[i] += self.grad[0] * w[i];
  });
}

/// Row-wise softmax of (N, K, 1, 1) logits; returned as plain values.
template <typename T>
std::vector<T> softmax(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  if (s.f != 1 || s.t != 1) throw ShapeError("softmax expects (N,K,1,1) logits, got " + s.str());
  std::vector<T> p(logits.data().begin(), logits.data().end());
  for (std::size_t n = 0; n < s.n; ++n) {
    T* row = p.data() + n * s.c;
    const T mx = *std::max_element(row, row + s.c);
    T z{0};
    for (std::size_t k = 0; k < s.c; ++k) z += (row[k] = std::exp(row[k] - mx));
    for (std::size_t k = 0; k < s.c; ++k) row[k] /= z;
  }
  return p;
}

/// Mean over the batch of −Σ_k y_k·log softmax(logits)_k, with soft targets
/// laid out (N, K).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const T> targets) {
  const Shape s = logits.shape();
  if (targets.size() != s.n * s.c) {
    throw ShapeError("cross entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     s.str());
  }
  std::vector<T> prob = softmax(logits);
  const auto ld = logits.data();
  T loss{0};
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* row = ld.data() + n * s.c;
    const T mx = *std::max_element(row, row + s.c);
    T z{0};
    for (std::size_t k = 0; k < s.c; ++k) z += std::exp(row[k] - mx);
    const T log_z = mx + std::log(z);
    for (std::size_t k = 0; k < s.c; ++k) loss -= targets[n * s.c + k] * (row[k] - log_z);
  }
  loss /= static_cast<T>(s.n);
  std::vector<T> y(targets.begin(), targets.end());
  return Tensor<T>::make_result(
      {1, 1, 1, 1}, {loss}, {logits},
      [s, prob = std::move(prob), y = std::move(y)](Node<T>& self) {
        auto* gx = detail::grad_target(self, 0);
        if (!gx) return;
        const T scale = self.grad[0] / static_cast<T>(s.n);
        for (std::size_t n = 0; n < s.n; ++n) {
          T mass{0};
          for (std::size_t k = 0; k < s.c; ++k) mass += y[n * s.c + k];
          for (std::size_t k = 0; k < s.c; ++k)
            (*gx)[n * s.c + k] += scale * (mass * prob[n * s.c + k] - y[n * s.c + k]);
        }
      });
}

}  // namespace tfsep
