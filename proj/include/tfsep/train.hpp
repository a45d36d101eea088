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

// Training recipe: Adam with linear warmup then cosine decay, Mixup and
// Freq-MixStyle augmentation, soft-label cross entropy, and top-1 evaluation.
// Also the toy and WAV-folder datasets used to drive it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfsep/audio.hpp"
#include "tfsep/hash.hpp"
#include "tfsep/network.hpp"
#include "tfsep/ops.hpp"
#include "tfsep/random.hpp"

namespace tfsep {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double peak_lr = 0.01;
  double warmup_epochs = 5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool use_mixup = true;
  double mixup_alpha = 0.3;
  bool use_freq_mixstyle = true;
  double fms_alpha = 0.3;
  double fms_p = 0.7;
  double fms_eps = 1e-6;
  // Stop once validation accuracy reaches this value; 0 disables.
  double stop_at_val_accuracy = 0;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
    if (epochs == 0) fail("epochs must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(warmup_epochs >= 0) || !(warmup_epochs < static_cast<double>(epochs))) {
      fail("warmup_epochs must be in [0, epochs)");
    }
    if (!(peak_lr > 0)) fail("peak_lr must be positive");
    if (!(mixup_alpha > 0) || !(fms_alpha > 0)) fail("augmentation alphas must be positive");
    if (!(fms_p >= 0 && fms_p <= 1)) fail("fms_p must be a probability");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
      fail("adam betas must be in [0, 1)");
    }
    if (!(adam_eps > 0) || !(fms_eps > 0)) fail("epsilons must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"peak_lr", c.peak_lr},
                     {"warmup_epochs", c.warmup_epochs},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"use_mixup", c.use_mixup},
                     {"mixup_alpha", c.mixup_alpha},
                     {"use_freq_mixstyle", c.use_freq_mixstyle},
                     {"fms_alpha", c.fms_alpha},
                     {"fms_p", c.fms_p},
                     {"fms_eps", c.fms_eps},
                     {"stop_at_val_accuracy", c.stop_at_val_accuracy},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = v.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "peak_lr") c.peak_lr = v.get<double>();
    else if (key == "warmup_epochs") c.warmup_epochs = v.get<double>();
    else if (key == "adam_beta1") c.adam_beta1 = v.get<double>();
    else if (key == "adam_beta2") c.adam_beta2 = v.get<double>();
    else if (key == "adam_eps") c.adam_eps = v.get<double>();
    else if (key == "use_mixup") c.use_mixup = v.get<bool>();
    else if (key == "mixup_alpha") c.mixup_alpha = v.get<double>();
    else if (key == "use_freq_mixstyle") c.use_freq_mixstyle = v.get<bool>();
    else if (key == "fms_alpha") c.fms_alpha = v.get<double>();
    else if (key == "fms_p") c.fms_p = v.get<double>();
    else if (key == "fms_eps") c.fms_eps = v.get<double>();
    else if (key == "stop_at_val_accuracy") c.stop_at_val_accuracy = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("unknown train config key '" + key + "'");
  }
}

/// Learning rate at a (fractional) epoch: linear warmup from 0 to peak_lr,
/// then cosine annealing to 0 at `epochs`.
inline double lr_at(double epoch, const TrainConfig& cfg) {
  const auto total = static_cast<double>(cfg.epochs);
  if (!(epoch >= 0) || epoch > total) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total) + "]");
  }
  if (epoch < cfg.warmup_epochs) return cfg.peak_lr * epoch / cfg.warmup_epochs;
  const double progress = (epoch - cfg.warmup_epochs) / (total - cfg.warmup_epochs);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Adam without weight decay, bias-corrected.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedTensor<T>> params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), T{0});
      v_.emplace_back(p.tensor.numel(), T{0});
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step(double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T>& p = params_[k].tensor;
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      auto w = p.mutable_data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = static_cast<T>(beta1_ * m[i] + (1 - beta1_) * g[i]);
        v[i] = static_cast<T>(beta2_ * v[i] + (1 - beta2_) * g[i] * g[i]);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t s) { steps_ = s; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }
  std::vector<T>& first_moment(std::size_t k) { return m_[k]; }
  std::vector<T>& second_moment(std::size_t k) { return v_[k]; }

 private:
  std::vector<NamedTensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
};

/// Labeled spectrograms, each of shape (1, freq, time).
struct Dataset {
  std::size_t freq = 0;
  std::size_t time = 0;
  std::vector<float> inputs;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t sample_size() const { return freq * time; }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(inputs).subspan(i * sample_size(), sample_size());
  }
  void push(std::span<const float> x, int label, std::string id) {
    if (x.size() != sample_size()) throw ShapeError("dataset sample has wrong size");
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.push_back(label);
    ids.push_back(std::move(id));
  }

  std::string hash() const {
    Fnv1a h;
    h.values(std::span<const float>(inputs)).values(std::span<const int>(labels));
    for (const auto& n : class_names) h.text(n);
    return h.hex();
  }

  /// All samples as one (N, 1, F, T) tensor.
  template <typename T = float>
  Tensor<T> tensor(std::span<const std::size_t> which) const {
    std::vector<T> data;
    data.reserve(which.size() * sample_size());
    for (std::size_t i : which) {
      const auto s = sample(i);
      data.insert(data.end(), s.begin(), s.end());
    }
    return Tensor<T>({which.size(), 1, freq, time}, std::move(data));
  }
};

/// Minibatch with soft labels laid out (B, K).
struct Batch {
  std::size_t size = 0;
  std::size_t freq = 0;
  std::size_t time = 0;
  std::size_t classes = 0;
  std::vector<float> inputs;
  std::vector<float> labels;
  std::vector<std::string> ids;

  std::size_t sample_size() const { return freq * time; }
};

inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> which) {
  Batch b;
  b.size = which.size();
  b.freq = ds.freq;
  b.time = ds.time;
  b.classes = ds.num_classes();
  b.labels.assign(b.size * b.classes, 0.0f);
  for (std::size_t k = 0; k < which.size(); ++k) {
    const auto s = ds.sample(which[k]);
    b.inputs.insert(b.inputs.end(), s.begin(), s.end());
    b.labels[k * b.classes + static_cast<std::size_t>(ds.labels[which[k]])] = 1.0f;
    b.ids.push_back(ds.ids[which[k]]);
  }
  return b;
}

/// x' = λx + (1−λ)x_π, y' = λy + (1−λ)y_π.
inline Batch mixup_with(const Batch& in, double lambda, std::span<const std::size_t> perm) {
  if (in.size < 2) throw std::invalid_argument("mixup needs a batch of at least 2");
  if (perm.size() != in.size) throw std::invalid_argument("mixup permutation size mismatch");
  Batch out = in;
  const std::size_t S = in.sample_size();
  for (std::size_t b = 0; b < in.size; ++b) {
    const std::size_t p = perm[b];
    for (std::size_t i = 0; i < S; ++i) {
      out.inputs[b * S + i] =
          static_cast<float>(lambda * in.inputs[b * S + i] + (1 - lambda) * in.inputs[p * S + i]);
    }
    for (std::size_t k = 0; k < in.classes; ++k) {
      out.labels[b * in.classes + k] = static_cast<float>(
          lambda * in.labels[b * in.classes + k] + (1 - lambda) * in.labels[p * in.classes + k]);
    }
  }
  return out;
}

inline Batch mixup(const Batch& in, double alpha, Rng& rng) {
  if (in.size < 2) throw std::invalid_argument("mixup needs a batch of at least 2");
  const double lambda = sample_beta(rng, alpha, alpha);
  const auto perm = random_permutation(rng, in.size);
  return mixup_with(in, lambda, perm);
}

/// Mixes per-(sample, frequency-bin) statistics, taken over time, with a
/// permuted partner:
///   x' = (x − μ)/max(σ, ε) · (λσ + (1−λ)σ_π) + (λμ + (1−λ)μ_π)
inline Batch freq_mixstyle_with(const Batch& in, double lambda, std::span<const std::size_t> perm,
                                double eps = 1e-6) {
  if (in.size < 2) throw std::invalid_argument("freq_mixstyle needs a batch of at least 2");
  if (perm.size() != in.size) throw std::invalid_argument("freq_mixstyle permutation size mismatch");
  const std::size_t F = in.freq, T = in.time;
  std::vector<double> mu(in.size * F), sigma(in.size * F);
  for (std::size_t b = 0; b < in.size; ++b)
    for (std::size_t f = 0; f < F; ++f) {
      const float* row = in.inputs.data() + (b * F + f) * T;
      double s = 0, sq = 0;
      for (std::size_t t = 0; t < T; ++t) s += row[t];
      const double m = s / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t) sq += (row[t] - m) * (row[t] - m);
      mu[b * F + f] = m;
      sigma[b * F + f] = std::sqrt(sq / static_cast<double>(T));
    }
  Batch out = in;
  for (std::size_t b = 0; b < in.size; ++b)
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t self = b * F + f, other = perm[b] * F + f;
      const double mix_mu = lambda * mu[self] + (1 - lambda) * mu[other];
      const double mix_sigma = lambda * sigma[self] + (1 - lambda) * sigma[other];
      const double denom = std::max(sigma[self], eps);
      float* row = out.inputs.data() + (b * F + f) * T;
      for (std::size_t t = 0; t < T; ++t) {
        row[t] = static_cast<float>((row[t] - mu[self]) / denom * mix_sigma + mix_mu);
      }
    }
  return out;
}

/// Applies freq_mixstyle_with with probability p; λ ~ Beta(α, α).
inline Batch freq_mixstyle(const Batch& in, double alpha, double p, Rng& rng, double eps = 1e-6) {
  if (in.size < 2) throw std::invalid_argument("freq_mixstyle needs a batch of at least 2");
  if (uniform01(rng) >= p) return in;
  const double lambda = sample_beta(rng, alpha, alpha);
  const auto perm = random_permutation(rng, in.size);
  return freq_mixstyle_with(in, lambda, perm, eps);
}

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;  // rate at the last step of the epoch
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
};

using History = std::vector<EpochRecord>;

inline std::string history_csv(const History& h) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_acc,val_acc\n";
  char buf[160];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.lr, r.train_loss,
                  r.train_acc, r.val_acc);
    os << buf;
  }
  return os.str();
}

template <typename T>
std::size_t argmax_row(std::span<const T> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <typename T>
std::vector<int> predict(TfSepNet<T>& model, const Dataset& ds, std::size_t batch_size = 64) {
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard guard;
  std::vector<int> out;
  out.reserve(ds.size());
  std::vector<std::size_t> which;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    which.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) which.push_back(i);
    const Tensor<T> logits = model.forward(ds.tensor<T>(which));
    const std::size_t K = logits.shape().c;
    for (std::size_t b = 0; b < which.size(); ++b) {
      out.push_back(static_cast<int>(argmax_row(logits.data().subspan(b * K, K))));
    }
  }
  model.set_training(was_training);
  return out;
}

/// Top-1 accuracy in eval mode without augmentation.
template <typename T>
double evaluate(TfSepNet<T>& model, const Dataset& ds, std::size_t batch_size = 64) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const auto pred = predict(model, ds, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.labels[i];
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Runs the full recipe. The learning rate is re-evaluated at every step at
/// the fractional epoch step / steps_per_epoch. `on_epoch` may be empty.
template <typename T>
History train(TfSepNet<T>& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg, Adam<T>& adam,
              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  if (train_set.num_classes() != model.config().num_classes) {
    throw std::invalid_argument("train: dataset has " + std::to_string(train_set.num_classes()) +
                                " classes, model expects " +
                                std::to_string(model.config().num_classes));
  }
  Rng rng(cfg.seed);
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  History history;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.set_training(true);
    const auto order = random_permutation(rng, n);
    double loss_sum = 0;
    std::size_t correct = 0;
    double lr = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t begin = s * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      Batch batch = make_batch(train_set, std::span<const std::size_t>(order).subspan(begin, end - begin));
      if (batch.size >= 2) {
        if (cfg.use_mixup) batch = mixup(batch, cfg.mixup_alpha, rng);
        if (cfg.use_freq_mixstyle) batch = freq_mixstyle(batch, cfg.fms_alpha, cfg.fms_p, rng, cfg.fms_eps);
      }
      const double fractional = static_cast<double>(epoch) +
                                static_cast<double>(s) / static_cast<double>(steps_per_epoch);
      lr = lr_at(fractional, cfg);

      std::vector<T> x(batch.inputs.begin(), batch.inputs.end());
      std::vector<T> y(batch.labels.begin(), batch.labels.end());
      const Tensor<T> logits = model.forward(Tensor<T>({batch.size, 1, batch.freq, batch.time}, std::move(x)));
      const Tensor<T> loss = softmax_cross_entropy(logits, std::span<const T>(y));
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(s) + " (lr " + std::to_string(lr) + ")");
      }
      adam.zero_grad();
      backward(loss);
      adam.step(lr);

      loss_sum += loss_value * static_cast<double>(batch.size);
      const std::size_t K = batch.classes;
      for (std::size_t b = 0; b < batch.size; ++b) {
        const std::size_t p = argmax_row(logits.data().subspan(b * K, K));
        const std::size_t t = argmax_row(std::span<const float>(batch.labels).subspan(b * K, K));
        correct += p == t;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    rec.val_acc = val_set.size() > 0 ? evaluate(model, val_set) : 0.0;
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (cfg.stop_at_val_accuracy > 0 && rec.val_acc >= cfg.stop_at_val_accuracy) break;
  }
  model.set_training(false);
  return history;
}

template <typename T>
History train(TfSepNet<T>& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  Adam<T> adam(model.parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  return train(model, train_set, val_set, cfg, adam, on_epoch);
}

struct ToyDatasetSpec {
  std::size_t n_classes = 10;
  std::size_t samples_per_class = 50;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t freq = 256;
  std::size_t time = 64;

  void validate() const {
    if (n_classes < 2) throw std::invalid_argument("toy dataset needs at least 2 classes");
    if (samples_per_class == 0) throw std::invalid_argument("toy dataset needs samples");
    if (freq < 4 * n_classes) throw std::invalid_argument("toy dataset: too few frequency bins");
    if (time == 0) throw std::invalid_argument("toy dataset: time must be positive");
    if (!(noise >= 0)) throw std::invalid_argument("toy dataset: noise must be >= 0");
  }

  /// Rows [first, last) carrying class k's energy. Bands are disjoint with a
  /// guard gap on both sides.
  std::pair<std::size_t, std::size_t> band(std::size_t k) const {
    const std::size_t width = freq / n_classes;
    return {k * width + width / 4, k * width + width - width / 4};
  }
};

inline void to_json(nlohmann::json& j, const ToyDatasetSpec& s) {
  j = nlohmann::json{{"n_classes", s.n_classes}, {"samples_per_class", s.samples_per_class},
                     {"noise", s.noise},         {"seed", s.seed},
                     {"freq", s.freq},           {"time", s.time}};
}

inline void from_json(const nlohmann::json& j, ToyDatasetSpec& s) {
  for (const auto& [key, v] : j.items()) {
    if (key == "n_classes") s.n_classes = v.get<std::size_t>();
    else if (key == "samples_per_class") s.samples_per_class = v.get<std::size_t>();
    else if (key == "noise") s.noise = v.get<double>();
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else if (key == "freq") s.freq = v.get<std::size_t>();
    else if (key == "time") s.time = v.get<std::size_t>();
    else throw std::invalid_argument("unknown toy dataset key '" + key + "'");
  }
}

/// Synthetic spectrograms: class k puts energy in its own frequency band,
/// modulated in time at k + 1 cycles per clip with a random phase and gain,
/// plus white noise everywhere.
inline Dataset generate_toy_dataset(const ToyDatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  std::uniform_real_distribution<double> gain(0.8, 1.2);
  Dataset ds;
  ds.freq = spec.freq;
  ds.time = spec.time;
  for (std::size_t k = 0; k < spec.n_classes; ++k) ds.class_names.push_back("class" + std::to_string(k));
  std::vector<float> x(spec.freq * spec.time);
  for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
      const auto [lo, hi] = spec.band(k);
      const double phi = phase(rng);
      const double a = gain(rng);
      const double rate = static_cast<double>(k + 1);
      for (std::size_t f = 0; f < spec.freq; ++f)
        for (std::size_t t = 0; t < spec.time; ++t) {
          double v = 0;
          if (f >= lo && f < hi) {
            v = a * (0.5 + 0.5 * std::sin(2 * std::numbers::pi * rate * static_cast<double>(t) /
                                                  static_cast<double>(spec.time) +
                                              phi));
          }
          if (spec.noise > 0) v += spec.noise * noise(rng);
          x[f * spec.time + t] = static_cast<float>(v);
        }
      ds.push(x, static_cast<int>(k), "toy-" + std::to_string(k) + "-" + std::to_string(i));
    }
  }
  return ds;
}

/// Shuffled split into (train, held-out) with `held_out_fraction` of the
/// samples in the second part.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double held_out_fraction,
                                                 std::uint64_t seed) {
  if (!(held_out_fraction >= 0 && held_out_fraction < 1)) {
    throw std::invalid_argument("held-out fraction must be in [0, 1)");
  }
  Rng rng(seed);
  const auto order = random_permutation(rng, ds.size());
  const auto held = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(ds.size())));
  Dataset a, b;
  for (Dataset* d : {&a, &b}) {
    d->freq = ds.freq;
    d->time = ds.time;
    d->class_names = ds.class_names;
  }
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t i = order[r];
    (r < order.size() - held ? a : b).push(ds.sample(i), ds.labels[i], ds.ids[i]);
  }
  return {std::move(a), std::move(b)};
}

struct FolderDataset {
  Dataset dataset;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Loads root/<class>/*.wav. Labels follow the sorted class directory names.
inline FolderDataset load_wav_folder(const std::filesystem::path& root, const LogMelConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (!fs::is_directory(root)) throw std::invalid_argument("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw std::invalid_argument("dataset root " + root.string() + " has no class directories");

  FolderDataset out;
  out.dataset.freq = cfg.n_mels;
  out.dataset.time = cfg.target_frames;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out.dataset.class_names.push_back(classes[k].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[k])) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("class directory " + classes[k].string() + " has no WAV files");
    for (const auto& file : files) {
      try {
        const WaveClip clip = resample_linear(load_wav(file), cfg.sample_rate);
        const LogMelSpectrogram spec = log_mel(clip, cfg);
        out.dataset.push(spec.tensor.data(), static_cast<int>(k),
                         classes[k].filename().string() + "/" + file.filename().string());
      } catch (const std::exception& e) {
        ++out.skipped;
        out.warnings.push_back(std::string("skipped ") + file.string() + ": " + e.what());
      }
    }
  }
  return out;
}

}  // namespace tfsep
