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

// Training checks shared by the unit tests and the acceptance gate.

#pragma once

#include "tfsep/tfsep.hpp"

namespace train_checks {

using namespace tfsep;

struct OverfitResult {
  std::size_t steps = 0;  // steps taken, stopping as soon as the loss is below the target
  double final_loss = 0;
};

/// Fits one toy sample with a τ=8 network and Adam at the peak rate of the default recipe.
inline OverfitResult overfit_single_sample(std::size_t max_steps, double target = 0.01, double lr = 0.01) {
  ToyDatasetSpec spec;
  spec.samples_per_class = 1;
  const Dataset ds = generate_toy_dataset(spec);
  NetConfig cfg;
  cfg.tau = 8;
  TfSepNet<float> net(cfg);
  net.set_training(true);
  Adam<float> adam(net.parameters());
  const std::vector<std::size_t> which{3};
  const Tensor<float> x = ds.tensor<float>(which);
  std::vector<float> y(cfg.num_classes, 0.0f);
  y[static_cast<std::size_t>(ds.labels[3])] = 1.0f;

  OverfitResult r;
  for (r.steps = 0; r.steps < max_steps; ++r.steps) {
    const Tensor<float> loss = softmax_cross_entropy(net.forward(x), std::span<const float>(y));
    r.final_loss = loss.item();
    if (r.final_loss < target) break;
    adam.zero_grad();
    backward(loss);
    adam.step(lr);
  }
  return r;
}

}  // namespace train_checks
