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

// TF-SepNet-τ: the full classifier and its complexity accounting.
//
//   Conv3x3 s2 (1 → τ/2) · Conv3x3 s2 g=τ/2 (τ/2 → 2τ) · AdaResNorm
//   stage1  2 × TfSepConvs → τ      · AdaResNorm · MaxPool2
//   stage2  2 × TfSepConvs → 1.5τ   · AdaResNorm · MaxPool2
//   stage3  2 × TfSepConvs → 2τ     · AdaResNorm
//   stage4  3 × TfSepConvs → 2.5τ   · AdaResNorm
//   Conv1x1 (2.5τ → classes, biased) · global average pool

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tfsep/blocks.hpp"
#include "tfsep/hash.hpp"
#include "tfsep/layers.hpp"

namespace tfsep {

inline constexpr Shape kDefaultInput{1, 1, 256, 64};

struct NetConfig {
  static constexpr std::array<std::size_t, 4> kStageDepths{2, 2, 2, 3};
  // Stage widths as multiples of τ/2.
  static constexpr std::array<std::size_t, 4> kStageHalfMultiples{2, 3, 4, 5};

  std::size_t tau = 40;
  std::size_t num_classes = 10;
  bool no_shuffle = false;
  bool no_freq_path = false;
  bool no_temp_path = false;
  bool no_adaresnorm = false;
  std::uint64_t init_seed = 0;

  std::array<std::size_t, 4> stage_widths() const {
    std::array<std::size_t, 4> w{};
    for (std::size_t i = 0; i < 4; ++i) w[i] = tau * kStageHalfMultiples[i] / 2;
    return w;
  }

  void validate() const {
    if (tau < 4 || tau % 2 != 0) {
      throw std::invalid_argument("tau must be an even integer >= 4, got " + std::to_string(tau));
    }
    for (std::size_t i = 0; i < 4; ++i) {
      if ((tau * kStageHalfMultiples[i]) % 4 != 0) {
        throw std::invalid_argument("tau " + std::to_string(tau) + " gives odd or fractional width " +
                                    std::to_string(tau * kStageHalfMultiples[i] / 2.0) +
                                    " in stage " + std::to_string(i + 1));
      }
    }
    if (num_classes == 0) throw std::invalid_argument("num_classes must be positive");
    if (no_freq_path && no_temp_path) {
      throw std::invalid_argument("no_freq_path and no_temp_path cannot both be set");
    }
  }

  PathMode path_mode() const {
    if (no_freq_path) return PathMode::TempOnly;
    if (no_temp_path) return PathMode::FreqOnly;
    return PathMode::Both;
  }

  std::vector<std::string> ablations() const {
    std::vector<std::string> out;
    if (no_shuffle) out.emplace_back("no_shuffle");
    if (no_freq_path) out.emplace_back("no_freq_path");
    if (no_temp_path) out.emplace_back("no_temp_path");
    if (no_adaresnorm) out.emplace_back("no_adaresnorm");
    return out;
  }

  void set_ablation(std::string_view flag) {
    if (flag == "no_shuffle") no_shuffle = true;
    else if (flag == "no_freq_path") no_freq_path = true;
    else if (flag == "no_temp_path") no_temp_path = true;
    else if (flag == "no_adaresnorm") no_adaresnorm = true;
    else throw std::invalid_argument("unknown ablation flag '" + std::string(flag) + "'");
  }
};

inline void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"tau", c.tau},
                     {"num_classes", c.num_classes},
                     {"ablations", c.ablations()},
                     {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, NetConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "tau") c.tau = value.get<std::size_t>();
    else if (key == "num_classes") c.num_classes = value.get<std::size_t>();
    else if (key == "init_seed") c.init_seed = value.get<std::uint64_t>();
    else if (key == "ablations")
      for (const auto& flag : value) c.set_ablation(flag.get<std::string>());
    else throw std::invalid_argument("unknown network config key '" + key + "'");
  }
}

/// Row labels of the architecture table; layer entries point into this list.
inline const std::array<std::string, 11>& architecture_row_labels() {
  static const std::array<std::string, 11> labels{
      "Input",          "ConvBnRelu",     "ConvBnRelu g=C/2", "TF-SepConvs x2",
      "MaxPool",        "TF-SepConvs x2", "MaxPool",          "TF-SepConvs x2",
      "TF-SepConvs x3", "Conv",           "Avgpool"};
  return labels;
}

template <typename T>
class TfSepNet {
 public:
  struct Layer {
    std::string name;
    std::size_t row;
    std::unique_ptr<Module<T>> module;
  };

  explicit TfSepNet(const NetConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    Rng rng(cfg.init_seed);
    const std::size_t c = cfg.tau;
    add("init.conv0", 1,
        std::make_unique<ConvBnRelu<T>>(1, c / 2, 3, 3, Conv2dOptions{2, 2, 1, 1, 1}, rng));
    add("init.conv1", 2,
        std::make_unique<ConvBnRelu<T>>(c / 2, 2 * c, 3, 3, Conv2dOptions{2, 2, 1, 1, c / 2}, rng));
    if (!cfg.no_adaresnorm) add("init.norm", 2, std::make_unique<AdaResNorm<T>>(2 * c));

    const auto widths = cfg.stage_widths();
    constexpr std::array<std::size_t, 4> rows{3, 5, 7, 8};
    std::size_t in_ch = 2 * c;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::string stage = "stage" + std::to_string(s + 1);
      for (std::size_t b = 0; b < NetConfig::kStageDepths[s]; ++b) {
        TfSepConvsSpec spec{in_ch, widths[s], cfg.no_shuffle ? 1u : 2u, cfg.path_mode()};
        add(stage + ".block" + std::to_string(b), rows[s], std::make_unique<TfSepConvs<T>>(spec, rng));
        in_ch = widths[s];
      }
      if (!cfg.no_adaresnorm) add(stage + ".norm", rows[s], std::make_unique<AdaResNorm<T>>(in_ch));
      if (s < 2) add("pool" + std::to_string(s + 1), rows[s] + 1, std::make_unique<MaxPool2d<T>>(2));
    }
    head_index_ = layers_.size();
    add("head.conv", 9,
        std::make_unique<Conv2d<T>>(in_ch, cfg.num_classes, 1, 1, Conv2dOptions{}, true, rng));
    add("head.pool", 10, std::make_unique<GlobalAvgPool<T>>());
  }

  /// Logits of shape (N, num_classes, 1, 1).
  Tensor<T> forward(const Tensor<T>& x) { return run(x, layers_.size()); }

  /// Final feature map before the classifier conv.
  Tensor<T> features(const Tensor<T>& x) { return run(x, head_index_); }

  void set_training(bool on) {
    training_ = on;
    for (auto& l : layers_) l.module->set_training(on);
  }
  bool training() const { return training_; }

  std::vector<NamedTensor<T>> parameters() {
    std::vector<NamedTensor<T>> out;
    for (auto& l : layers_) l.module->parameters(l.name, out);
    return out;
  }
  std::vector<NamedTensor<T>> buffers() {
    std::vector<NamedTensor<T>> out;
    for (auto& l : layers_) l.module->buffers(l.name, out);
    return out;
  }
  /// Parameters followed by buffers: everything a checkpoint must carry.
  std::vector<NamedTensor<T>> state() {
    auto out = parameters();
    auto b = buffers();
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  const NetConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::size_t head_index() const { return head_index_; }

  std::string fingerprint() {
    Fnv1a h;
    h.text(nlohmann::json(cfg_).dump());
    for (auto& nt : state()) h.text(nt.name).values(nt.tensor.data());
    return h.hex();
  }

 private:
  void add(std::string name, std::size_t row, std::unique_ptr<Module<T>> m) {
    layers_.push_back({std::move(name), row, std::move(m)});
  }

  Tensor<T> run(const Tensor<T>& x, std::size_t upto) {
    if (x.shape().c != 1) throw ShapeError("TfSepNet expects a 1-channel input, got " + x.shape().str());
    Tensor<T> h = x;
    for (std::size_t i = 0; i < upto; ++i) h = layers_[i].module->forward(h);
    return h;
  }

  NetConfig cfg_;
  std::vector<Layer> layers_;
  std::size_t head_index_ = 0;
  bool training_ = true;
};

struct LayerSummary {
  std::string name;
  std::string row;
  std::string kind;
  Shape out;
  std::size_t params = 0;
  std::size_t macs = 0;
  std::size_t other_ops = 0;
};

/// Learned scalars, counted from the parameter tensors themselves.
template <typename T>
std::size_t count_params(TfSepNet<T>& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
std::vector<LayerSummary> summarize(const TfSepNet<T>& model, const Shape& input = kDefaultInput) {
  std::vector<LayerSummary> rows;
  Shape s = input;
  for (const auto& l : model.layers()) {
    const LayerCost c = l.module->cost(s);
    rows.push_back({l.name, architecture_row_labels()[l.row], l.module->kind(), c.out, c.params,
                    c.macs, c.other_ops});
    s = c.out;
  }
  return rows;
}

/// Convolution MACs per forward pass on `input`, from static shape analysis.
template <typename T>
std::size_t count_macs(const TfSepNet<T>& model, const Shape& input = kDefaultInput) {
  std::size_t n = 0;
  for (const auto& r : summarize(model, input)) n += r.macs;
  return n;
}

/// Convolution MACs actually executed by one eval-mode forward pass on zeros.
template <typename T>
std::size_t measure_macs(TfSepNet<T>& model, const Shape& input = kDefaultInput) {
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard guard;
  const std::uint64_t before = detail::conv_mac_counter();
  model.forward(Tensor<T>::zeros(input));
  const std::uint64_t executed = detail::conv_mac_counter() - before;
  model.set_training(was_training);
  return static_cast<std::size_t>(executed);
}

struct ArchitectureRow {
  std::string label;
  Shape out;
};

/// Output shape after each row of the architecture table, Input first.
template <typename T>
std::vector<ArchitectureRow> architecture_rows(const TfSepNet<T>& model,
                                               const Shape& input = kDefaultInput) {
  std::vector<ArchitectureRow> rows{{architecture_row_labels()[0], input}};
  std::size_t current = 0;
  Shape s = input;
  for (const auto& l : model.layers()) {
    s = l.module->cost(s).out;
    if (l.row != current) {
      rows.push_back({architecture_row_labels()[l.row], s});
      current = l.row;
    } else {
      rows.back().out = s;
    }
  }
  return rows;
}

struct SummaryTotals {
  std::size_t params = 0;
  std::size_t macs = 0;
  std::size_t other_ops = 0;
};

inline SummaryTotals totals(const std::vector<LayerSummary>& rows) {
  SummaryTotals t;
  for (const auto& r : rows) {
    t.params += r.params;
    t.macs += r.macs;
    t.other_ops += r.other_ops;
  }
  return t;
}

inline std::string shape_string(const Shape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.f) + "x" + std::to_string(s.t);
}

inline std::string summary_csv(const std::vector<LayerSummary>& rows) {
  std::ostringstream os;
  os << "name,row,kind,out_c,out_f,out_t,params,macs,other_ops\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.row << ',' << r.kind << ',' << r.out.c << ',' << r.out.f << ','
       << r.out.t << ',' << r.params << ',' << r.macs << ',' << r.other_ops << '\n';
  }
  const SummaryTotals t = totals(rows);
  os << "total,,,,,," << t.params << ',' << t.macs << ',' << t.other_ops << '\n';
  return os.str();
}

/// Parses summary_csv output back into rows (the totals line is dropped).
inline std::vector<LayerSummary> parse_summary_csv(const std::string& text) {
  std::vector<LayerSummary> rows;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("total,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw std::runtime_error("malformed summary row: " + line);
    LayerSummary r;
    r.name = cells[0];
    r.row = cells[1];
    r.kind = cells[2];
    r.out = {1, std::stoul(cells[3]), std::stoul(cells[4]), std::stoul(cells[5])};
    r.params = std::stoul(cells[6]);
    r.macs = std::stoul(cells[7]);
    r.other_ops = std::stoul(cells[8]);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json summary_json(const std::vector<LayerSummary>& rows) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& r : rows) {
    layers.push_back({{"name", r.name},
                      {"row", r.row},
                      {"kind", r.kind},
                      {"out", {r.out.c, r.out.f, r.out.t}},
                      {"params", r.params},
                      {"macs", r.macs},
                      {"other_ops", r.other_ops}});
  }
  const SummaryTotals t = totals(rows);
  return {{"layers", layers},
          {"total", {{"params", t.params}, {"macs", t.macs}, {"other_ops", t.other_ops}}}};
}

inline std::string summary_table(const std::vector<LayerSummary>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "layer" << std::setw(18) << "row" << std::setw(18) << "kind"
     << std::setw(12) << "output" << std::right << std::setw(10) << "params" << std::setw(12)
     << "MACs" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.name << std::setw(18) << r.row << std::setw(18) << r.kind
       << std::setw(12) << shape_string(r.out) << std::right << std::setw(10) << r.params
       << std::setw(12) << r.macs << '\n';
  }
  const SummaryTotals t = totals(rows);
  os << std::left << std::setw(64) << "total" << std::right << std::setw(10) << t.params
     << std::setw(12) << t.macs << '\n';
  os << std::fixed << std::setprecision(1) << "params " << t.params / 1000.0 << "K, MACs "
     << t.macs / 1e6 << "M\n";
  return os.str();
}

}  // namespace tfsep
