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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfsep/random.hpp"
#include "tfsep/tensor.hpp"

namespace tfsep {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "<tensor index>[<flat index>]"
};

/// Compares the tape gradient of the scalar `f()` against central differences
/// for every tensor in `wrt`. Each tensor contributes at most `max_coords`
/// sampled coordinates (all of them when it is smaller). The error per
/// coordinate is |analytic − fd| / max(1, |fd|).
template <typename T, typename Fn>
GradCheckResult finite_diff_check(Fn&& f, std::vector<Tensor<T>> wrt, double h,
                                  std::size_t max_coords = 64, std::uint64_t seed = 0) {
  if (!(h > 0)) throw std::invalid_argument("finite difference step must be positive");
  for (auto& x : wrt) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    Tensor<T> loss = f();
    if (loss.numel() != 1) throw ShapeError("finite_diff_check: f must be scalar");
    backward(loss);
  }

  auto eval = [&] {
    NoGradGuard guard;
    const double v = static_cast<double>(f().item());
    if (!std::isfinite(v)) throw std::runtime_error("finite_diff_check: non-finite loss");
    return v;
  };

  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor<T>& x = wrt[k];
    std::vector<T> analytic = x.has_grad() ? std::vector<T>(x.grad().begin(), x.grad().end())
                                           : std::vector<T>(x.numel(), T{0});
    std::vector<std::size_t> coords(x.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords) {
      coords = random_permutation(rng, x.numel());
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    auto data = x.mutable_data();
    for (std::size_t i : coords) {
      const T saved = data[i];
      data[i] = static_cast<T>(saved + h);
      const double up = eval();
      data[i] = static_cast<T>(saved - h);
      const double down = eval();
      data[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double a = static_cast<double>(analytic[i]);
      if (!std::isfinite(a)) throw std::runtime_error("finite_diff_check: non-finite gradient");
      const double err = std::abs(a - fd) / std::max(1.0, std::abs(fd));
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = std::to_string(k) + "[" + std::to_string(i) + "]";
      }
      ++result.coordinates;
    }
  }
  return result;
}

template <typename T, typename Fn>
GradCheckResult finite_diff_check(Fn&& f, Tensor<T> x, double h, std::size_t max_coords = 64,
                                  std::uint64_t seed = 0) {
  return finite_diff_check<T>([&] { return f(x); }, std::vector<Tensor<T>>{x}, h, max_coords, seed);
}

}  // namespace tfsep
