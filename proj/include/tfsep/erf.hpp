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

// Effective receptive field: mean absolute input gradient of the channel sum
// at the central position of a feature map, and the area ratio of the
// smallest centered rectangle holding a given share of that mass.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfsep/tensor.hpp"
#include "tfsep/ops.hpp"

namespace tfsep {

class ErfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ErfMap {
  std::size_t freq = 0;
  std::size_t time = 0;
  std::vector<double> values;  // row-major, row = frequency bin
  std::size_t samples = 0;
  std::string fingerprint;

  double at(std::size_t f, std::size_t t) const { return values[f * time + t]; }
  double total() const {
    double s = 0;
    for (double v : values) s += v;
    return s;
  }
  /// Cells with a strictly positive score.
  std::size_t support() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return v > 0; }));
  }
};

/// Aggregates ERF maps over `inputs`, each shaped (1, C, F, T). `features`
/// maps an input to the feature map whose central unit is probed.
template <typename T, typename Features>
ErfMap compute_erf(Features&& features, const std::vector<Tensor<T>>& inputs, std::string fingerprint = "") {
  if (inputs.empty()) throw std::invalid_argument("compute_erf: no inputs");
  const Shape in = inputs.front().shape();
  if (in.n != 1) throw ShapeError("compute_erf: inputs must have batch size 1, got " + in.str());
  ErfMap map;
  map.freq = in.f;
  map.time = in.t;
  map.values.assign(in.f * in.t, 0.0);
  map.fingerprint = std::move(fingerprint);

  for (const auto& input : inputs) {
    if (!(input.shape() == in)) {
      throw ShapeError("compute_erf: input shape " + input.shape().str() + " differs from " + in.str());
    }
    Tensor<T> x = input.detach();
    x.set_requires_grad();
    const Tensor<T> y = features(x);
    const Shape ys = y.shape();
    if (ys.f == 1 && ys.t == 1) {
      throw ErfError("compute_erf: final feature map is 1x1, central position is undefined");
    }
    std::vector<T> mask(ys.numel(), T{0});
    for (std::size_t c = 0; c < ys.c; ++c) mask[offset(ys, 0, c, ys.f / 2, ys.t / 2)] = T{1};
    backward(weighted_sum(y, std::move(mask)));
    if (!x.has_grad()) throw ErfError("compute_erf: input received no gradient");
    const auto g = x.grad();
    for (std::size_t c = 0; c < in.c; ++c)
      for (std::size_t i = 0; i < in.f * in.t; ++i) {
        const double v = static_cast<double>(g[c * in.f * in.t + i]);
        if (!std::isfinite(v)) throw ErfError("compute_erf: non-finite gradient");
        map.values[i] += std::abs(v);
      }
  }
  map.samples = inputs.size();
  for (double& v : map.values) v /= static_cast<double>(map.samples);
  return map;
}

/// Sample-count-weighted mean of two maps of the same grid.
inline ErfMap merge(const ErfMap& a, const ErfMap& b) {
  if (a.freq != b.freq || a.time != b.time) throw ShapeError("merge: ERF map grids differ");
  ErfMap out = a;
  out.samples = a.samples + b.samples;
  const double wa = static_cast<double>(a.samples), wb = static_cast<double>(b.samples);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (a.values[i] * wa + b.values[i] * wb) / (wa + wb);
  }
  return out;
}

enum class MassMode { Raw, Log };

inline MassMode parse_mass_mode(const std::string& s) {
  if (s == "raw") return MassMode::Raw;
  if (s == "log") return MassMode::Log;
  throw std::invalid_argument("unknown ERF mass mode '" + s + "' (expected raw or log)");
}

inline std::string to_string(MassMode m) { return m == MassMode::Raw ? "raw" : "log"; }

/// Centered rectangle for ring k: rows cf ± round(k·F/L), cols ct ± round(k·T/L),
/// L = max(F, T), clipped to the grid. Returns {f0, f1, t0, t1}, inclusive.
inline std::array<std::size_t, 4> erf_ring(std::size_t freq, std::size_t time, std::size_t k) {
  const double L = static_cast<double>(std::max(freq, time));
  const auto ef = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(k * freq) / L));
  const auto et = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(k * time) / L));
  const auto cf = static_cast<std::ptrdiff_t>(freq / 2), ct = static_cast<std::ptrdiff_t>(time / 2);
  const auto clip = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  return {clip(cf - ef, freq), clip(cf + ef, freq), clip(ct - et, time), clip(ct + et, time)};
}

inline std::size_t erf_ring_count(std::size_t freq, std::size_t time) {
  return (std::max(freq, time) + 1) / 2 + 1;
}

namespace detail {

/// 2D prefix sums with a zero guard row and column.
inline std::vector<double> prefix_sums(const std::vector<double>& m, std::size_t F, std::size_t T) {
  std::vector<double> p((F + 1) * (T + 1), 0.0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t)
      p[(f + 1) * (T + 1) + t + 1] =
          m[f * T + t] + p[f * (T + 1) + t + 1] + p[(f + 1) * (T + 1) + t] - p[f * (T + 1) + t];
  return p;
}

inline double rect_mass(const std::vector<double>& p, std::size_t T, std::size_t f0, std::size_t f1,
                        std::size_t t0, std::size_t t1) {
  const std::size_t W = T + 1;
  return p[(f1 + 1) * W + t1 + 1] - p[f0 * W + t1 + 1] - p[(f1 + 1) * W + t0] + p[f0 * W + t0];
}

inline std::vector<double> mass_values(const ErfMap& map, MassMode mode) {
  if (mode == MassMode::Raw) return map.values;
  std::vector<double> v(map.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log1p(map.values[i]);
  return v;
}

}  // namespace detail

/// Area fraction of the first ring whose mass reaches t of the total.
inline double high_contribution_ratio(const ErfMap& map, double t, MassMode mode = MassMode::Raw) {
  if (!(t > 0 && t <= 1)) throw std::invalid_argument("threshold must be in (0, 1]");
  const auto m = detail::mass_values(map, mode);
  const auto p = detail::prefix_sums(m, map.freq, map.time);
  const double total = p.back();
  if (!(total > 0)) throw ErfError("high_contribution_ratio: map has zero mass");
  const double area = static_cast<double>(map.freq * map.time);
  // Relative slack so that t = 1 is reached despite rounding in the sums.
  const double need = t * total * (1 - 1e-12);
  for (std::size_t k = 0; k < erf_ring_count(map.freq, map.time); ++k) {
    const auto [f0, f1, t0, t1] = erf_ring(map.freq, map.time, k);
    if (detail::rect_mass(p, map.time, f0, f1, t0, t1) >= need) {
      return static_cast<double>((f1 - f0 + 1) * (t1 - t0 + 1)) / area;
    }
  }
  return 1.0;
}

struct ErfReport {
  std::vector<double> thresholds;
  std::vector<double> ratios;
  MassMode mode = MassMode::Raw;
};

inline ErfReport erf_report(const ErfMap& map, const std::vector<double>& thresholds,
                            MassMode mode = MassMode::Raw) {
  ErfReport r{thresholds, {}, mode};
  for (double t : thresholds) r.ratios.push_back(high_contribution_ratio(map, t, mode));
  return r;
}

inline nlohmann::json to_json(const ErfReport& r) {
  return {{"thresholds", r.thresholds}, {"ratios", r.ratios}, {"mode", to_string(r.mode)}};
}

struct ErfComparison {
  ErfMap map_a, map_b;
  ErfReport a, b;
  std::vector<double> delta;  // r_a − r_b per threshold
};

template <typename T, typename FeaturesA, typename FeaturesB>
ErfComparison compare_erf(FeaturesA&& fa, FeaturesB&& fb, const std::vector<Tensor<T>>& inputs,
                          const std::vector<double>& thresholds, MassMode mode = MassMode::Raw) {
  ErfComparison c;
  c.map_a = compute_erf<T>(fa, inputs);
  c.map_b = compute_erf<T>(fb, inputs);
  c.a = erf_report(c.map_a, thresholds, mode);
  c.b = erf_report(c.map_b, thresholds, mode);
  for (std::size_t i = 0; i < thresholds.size(); ++i) c.delta.push_back(c.a.ratios[i] - c.b.ratios[i]);
  return c;
}

/// log(1 + m), then min-max scaled to [0, 1]. A constant map becomes all zeros.
inline std::vector<double> normalized_view(const ErfMap& map) {
  std::vector<double> v(map.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log1p(map.values[i]);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, span = *hi - *lo;
  for (double& x : v) x = span > 0 ? (x - a) / span : 0.0;
  return v;
}

/// Binary 16-bit PGM (P5, big-endian samples), one row per frequency bin.
inline std::string encode_pgm(const ErfMap& map) {
  const auto v = normalized_view(map);
  std::string out = "P5\n" + std::to_string(map.time) + " " + std::to_string(map.freq) + "\n65535\n";
  for (double x : v) {
    const auto px = static_cast<std::uint16_t>(std::lround(x * 65535.0));
    out.push_back(static_cast<char>(px >> 8));
    out.push_back(static_cast<char>(px & 0xff));
  }
  return out;
}

inline std::string encode_map_csv(const ErfMap& map) {
  std::string out;
  char buf[32];
  for (std::size_t f = 0; f < map.freq; ++f) {
    for (std::size_t t = 0; t < map.time; ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", map.at(f, t));
      if (t) out.push_back(',');
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

inline ErfMap decode_map_csv(const std::string& text) {
  ErfMap map;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(row, cell, ',')) {
      map.values.push_back(std::stod(cell));
      ++n;
    }
    if (map.freq == 0) map.time = n;
    else if (n != map.time) throw ErfError("ragged ERF map CSV at row " + std::to_string(map.freq));
    ++map.freq;
  }
  return map;
}

enum class MapFormat { Pgm, Csv };

inline void export_map(const ErfMap& map, const std::filesystem::path& path, MapFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ErfError("cannot write " + path.string());
  const std::string bytes = format == MapFormat::Pgm ? encode_pgm(map) : encode_map_csv(map);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ErfError("write failed for " + path.string());
}

}  // namespace tfsep
