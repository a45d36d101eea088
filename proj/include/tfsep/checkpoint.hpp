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

// Checkpoints are weights bundles. Model state is stored under "model.",
// Adam moments under "adam.m." / "adam.v."; the meta object carries the
// network config, training config, Adam step count and model fingerprint.

#pragma once

#include <filesystem>
#include <memory>

#include "tfsep/bundle.hpp"
#include "tfsep/network.hpp"
#include "tfsep/train.hpp"

namespace tfsep {

template <typename T>
Bundle make_checkpoint(TfSepNet<T>& model, Adam<T>* adam, const nlohmann::json& extra = {}) {
  Bundle b;
  b.meta = nlohmann::json{{"kind", "checkpoint"},
                          {"net", model.config()},
                          {"fingerprint", model.fingerprint()}};
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) b.meta[k] = v;
  add_tensors(b, model.state(), "model.");
  if (adam) {
    b.meta["adam_step"] = adam->steps();
    const auto& params = adam->params();
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Shape s = params[k].tensor.shape();
      const auto& m = adam->first_moment(k);
      const auto& v = adam->second_moment(k);
      b.add("adam.m." + params[k].name, s, std::vector<float>(m.begin(), m.end()));
      b.add("adam.v." + params[k].name, s, std::vector<float>(v.begin(), v.end()));
    }
  }
  return b;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, TfSepNet<T>& model, Adam<T>* adam,
                     const nlohmann::json& extra = {}) {
  save_bundle(path, make_checkpoint(model, adam, extra));
}

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<TfSepNet<T>> model;
  nlohmann::json meta;
  Bundle bundle;
};

/// Rebuilds the network from the stored config and restores its state.
/// The model is left in eval mode.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  LoadedCheckpoint<T> out;
  out.bundle = load_bundle(path);
  out.meta = out.bundle.meta;
  if (out.meta.value("kind", "") != "checkpoint") throw BundleError(path.string() + " is not a checkpoint");
  out.model = std::make_unique<TfSepNet<T>>(out.meta.at("net").template get<NetConfig>());
  auto state = out.model->state();
  restore_tensors(out.bundle, state, "model.");
  out.model->set_training(false);
  return out;
}

/// Restores Adam moments and step count saved by make_checkpoint.
template <typename T>
void restore_adam(const Bundle& b, Adam<T>& adam) {
  const auto& params = adam.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (auto [prefix, dst] : {std::pair{"adam.m.", &adam.first_moment(k)},
                               std::pair{"adam.v.", &adam.second_moment(k)}}) {
      const BundleEntry* e = b.find(prefix + params[k].name);
      if (!e || e->values.size() != dst->size()) {
        throw BundleError(std::string("checkpoint lacks optimizer state '") + prefix + params[k].name + "'");
      }
      std::copy(e->values.begin(), e->values.end(), dst->begin());
    }
  }
  adam.set_steps(b.meta.at("adam_step").get<std::size_t>());
}

}  // namespace tfsep
