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

// ERF property checks shared by the unit tests and the acceptance gate.
// Support checks use positive weights and inputs so that no ReLU is ever
// inactive and every path in the data flow carries gradient.

#pragma once

#include <cmath>

#include "oracles.hpp"
#include "tfsep/tfsep.hpp"

namespace erf_checks {

using namespace tfsep;
using Td = Tensor<double>;

inline void make_positive(Module<double>& m, Rng& rng) {
  std::uniform_real_distribution<double> d(0.1, 1.0);
  std::vector<NamedTensor<double>> params;
  m.parameters("", params);
  for (auto& p : params)
    if (p.name.ends_with("weight"))
      for (double& v : p.tensor.mutable_data()) v = d(rng);
}

inline std::vector<Td> positive_inputs(Shape s, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Td> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_uniform<double>(s, rng, 0.1, 1.0));
  return out;
}

/// True where the map is positive, row-major.
inline std::vector<bool> support_mask(const ErfMap& m) {
  std::vector<bool> out(m.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.values[i] > 0;
  return out;
}

/// Mask of the centred box with half-extents (hf, ht).
inline std::vector<bool> box_mask(std::size_t F, std::size_t T, std::size_t hf, std::size_t ht) {
  std::vector<bool> out(F * T);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t)
      out[f * T + t] = std::abs(static_cast<long>(f) - static_cast<long>(F / 2)) <= static_cast<long>(hf) &&
                       std::abs(static_cast<long>(t) - static_cast<long>(T / 2)) <= static_cast<long>(ht);
  return out;
}

inline std::vector<bool> cross_mask(std::size_t F, std::size_t T) {
  std::vector<bool> out(F * T);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) out[f * T + t] = f == F / 2 || t == T / 2;
  return out;
}

/// ERF of `depth` stacked single-channel 3x3 convs (stride 1, padding 1).
inline ErfMap conv_stack_erf(std::size_t depth, std::size_t F = 11, std::size_t T = 13) {
  Rng rng(depth);
  Sequential<double> stack;
  for (std::size_t i = 0; i < depth; ++i)
    stack.push(std::make_unique<Conv2d<double>>(1, 1, 3, 3, Conv2dOptions{1, 1, 1, 1, 1}, false, rng));
  make_positive(stack, rng);
  return compute_erf<double>([&](const Td& x) { return stack.forward(x); }, positive_inputs({1, 1, F, T}, 2, 7));
}

inline bool single_conv_support_is_3x3() {
  const ErfMap m = conv_stack_erf(1);
  return support_mask(m) == box_mask(m.freq, m.time, 1, 1);
}

inline bool stacked_conv_support_is_5x5() {
  const ErfMap m = conv_stack_erf(2);
  return support_mask(m) == box_mask(m.freq, m.time, 2, 2);
}

/// One eval-mode TfSepConvs block: support is the full central row and column.
inline bool block_support_is_cross(std::size_t F = 9, std::size_t T = 12) {
  Rng rng(3);
  TfSepConvs<double> block(TfSepConvsSpec{4, 4}, rng);
  block.set_training(false);
  make_positive(block, rng);
  const ErfMap m = compute_erf<double>([&](const Td& x) { return block.forward(x); },
                                       positive_inputs({1, 4, F, T}, 2, 11));
  return support_mask(m) == cross_mask(F, T);
}

inline ErfMap gaussian_map(std::size_t F, std::size_t T, double sf, double st) {
  ErfMap m;
  m.freq = F;
  m.time = T;
  m.samples = 1;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) {
      const double df = (static_cast<double>(f) - static_cast<double>(F / 2)) / sf;
      const double dt = (static_cast<double>(t) - static_cast<double>(T / 2)) / st;
      m.values.push_back(std::exp(-0.5 * (df * df + dt * dt)));
    }
  return m;
}

inline std::size_t ring_area(std::size_t F, std::size_t T, std::size_t k) {
  const auto [f0, f1, t0, t1] = erf_ring(F, T, k);
  return (f1 - f0 + 1) * (t1 - t0 + 1);
}

/// Ring index whose area equals `area`, or the first ring at least that big.
inline std::size_t ring_reaching(std::size_t F, std::size_t T, double area) {
  for (std::size_t k = 0; k < erf_ring_count(F, T); ++k)
    if (static_cast<double>(ring_area(F, T, k)) >= area - 1e-9) return k;
  return erf_ring_count(F, T);
}

/// Greedy ratio is never below the brute-force optimum and lands at most one
/// ring beyond the smallest ring that covers the optimum's area.
inline bool greedy_within_one_ring(const ErfMap& m, double t) {
  const double FT = static_cast<double>(m.freq * m.time);
  const double greedy = high_contribution_ratio(m, t);
  const double brute = oracle::brute_force_ratio(m.values, m.freq, m.time, t);
  if (greedy < brute - 1e-12) return false;
  const std::size_t kg = ring_reaching(m.freq, m.time, greedy * FT);
  const std::size_t kb = ring_reaching(m.freq, m.time, brute * FT);
  return kg <= kb + 1;
}

inline bool ratio_monotone(const ErfMap& m) {
  double prev = 0;
  for (double t = 0.05; t <= 1.0 + 1e-9; t += 0.05) {
    const double r = high_contribution_ratio(m, std::min(t, 1.0));
    if (r < prev) return false;
    prev = r;
  }
  return true;
}

/// Gaussian maps with σ = F/8, T/8 on a few grids, several thresholds.
inline bool gaussian_greedy_matches_brute_force() {
  for (auto [F, T] : {std::pair<std::size_t, std::size_t>{32, 24}, {24, 24}, {17, 40}}) {
    const ErfMap m = gaussian_map(F, T, F / 8.0, T / 8.0);
    if (!ratio_monotone(m)) return false;
    for (double t : {0.2, 0.3, 0.5, 0.8})
      if (!greedy_within_one_ring(m, t)) return false;
  }
  return true;
}

struct Direction {
  double r_separate = 0;
  double r_consecutive = 0;
};

/// Random-init stacks of four blocks, eval mode, ERF averaged over `inputs`
/// seeded normal inputs; r at threshold t.
inline Direction separate_vs_consecutive(std::size_t inputs = 32, double t = 0.5, std::size_t channels = 8,
                                         std::size_t F = 32, std::size_t T = 32) {
  Rng rng(2026);
  Sequential<double> separate, consecutive;
  for (int i = 0; i < 4; ++i) {
    separate.push(std::make_unique<TfSepConvs<double>>(TfSepConvsSpec{channels, channels}, rng));
    consecutive.push(std::make_unique<ConsecutiveBlock<double>>(channels, rng));
  }
  separate.set_training(false);
  consecutive.set_training(false);
  Rng data(77);
  std::vector<Td> xs;
  for (std::size_t i = 0; i < inputs; ++i) xs.push_back(random_normal<double>({1, channels, F, T}, data));
  const auto c = compare_erf<double>([&](const Td& x) { return separate.forward(x); },
                                     [&](const Td& x) { return consecutive.forward(x); }, xs, {t});
  return {c.a.ratios[0], c.b.ratios[0]};
}

}  // namespace erf_checks
