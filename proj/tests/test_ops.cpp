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

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tfsep/tfsep.hpp"

using namespace tfsep;
using Td = Tensor<double>;

namespace {

std::vector<double> values(const Td& t) { return {t.data().begin(), t.data().end()}; }

void expect_near_all(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Tensor, RejectsDataOfWrongLength) {
  EXPECT_THROW(Td({1, 1, 2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, ItemRequiresScalar) {
  EXPECT_THROW(Td::zeros({1, 2, 1, 1}).item(), ShapeError);
  EXPECT_EQ(Td::full({1, 1, 1, 1}, 3.5).item(), 3.5);
}

TEST(Tensor, NoGradGuardSkipsTape) {
  Td x = Td::full({1, 1, 2, 2}, 1.0);
  x.set_requires_grad();
  {
    NoGradGuard guard;
    EXPECT_FALSE(relu(x).requires_grad());
  }
  EXPECT_TRUE(relu(x).requires_grad());
}

TEST(Tensor, GradientAccumulatesOverSharedUse) {
  Td x({1, 1, 1, 2}, {1.0, -2.0});
  x.set_requires_grad();
  // sum(x + x) has gradient 2 everywhere.
  backward(sum(add(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 2.0);
}

TEST(Conv2d, MatchesDirectOracleOverRandomConfigs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    const std::size_t groups = pick(1, 3);
    const std::size_t cin = groups * pick(1, 2), cout = groups * pick(1, 3);
    const std::size_t kf = pick(1, 3), kt = pick(1, 3);
    const Conv2dOptions opt{pick(1, 2), pick(1, 2), pick(0, 1), pick(0, 1), groups};
    const Shape xs{pick(1, 2), cin, pick(4, 7), pick(4, 7)};
    const Td x = random_normal<double>(xs, rng);
    const Td w = random_normal<double>({cout, cin / groups, kf, kt}, rng);
    const Td b = random_normal<double>({1, cout, 1, 1}, rng);
    const Td y = conv2d(x, w, b, opt);

    Shape os;
    const auto bias = values(b);
    const auto ref = oracle::conv2d(values(x), xs, values(w), w.shape(), &bias,
                                    {opt.stride_f, opt.stride_t, opt.pad_f, opt.pad_t, groups}, os);
    ASSERT_EQ(y.shape(), os) << "seed " << seed;
    expect_near_all(values(y), ref, 1e-12);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  const Td x = Td::zeros({1, 3, 4, 4});
  const Td w = Td::zeros({2, 2, 1, 1});
  EXPECT_THROW(conv2d(x, w, Td(), Conv2dOptions{}), ShapeError);
}

TEST(Conv2d, CounterRecordsExecutedMacs) {
  const Td x = Td::zeros({2, 4, 6, 5});
  const Td w = Td::zeros({6, 2, 3, 3});
  const Conv2dOptions opt{1, 1, 1, 1, 2};
  const auto before = detail::conv_mac_counter();
  const Td y = conv2d(x, w, Td(), opt);
  // out elements × (in channels per group × kernel area)
  EXPECT_EQ(detail::conv_mac_counter() - before, y.numel() * 2 * 9);
}

TEST(BatchNorm, TrainingModeMatchesOracleAndUpdatesRunningStats) {
  Rng rng(3);
  const Shape s{3, 4, 5, 2};
  const Td x = random_normal<double>(s, rng, 2.0);
  const Td gamma = random_normal<double>({1, 4, 1, 1}, rng);
  const Td beta = random_normal<double>({1, 4, 1, 1}, rng);
  Td rm = Td::zeros({1, 4, 1, 1});
  Td rv = Td::full({1, 4, 1, 1}, 1.0);
  const Td y = batch_norm(x, gamma, beta, rm, rv, BatchNormOptions{true, 0.1, 1e-5});

  std::vector<double> mean, var_unbiased;
  const auto ref = oracle::batch_norm_train(values(x), s, values(gamma), values(beta), 1e-5, &mean, &var_unbiased);
  expect_near_all(values(y), ref, 1e-12);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(rm.data()[c], 0.1 * mean[c], 1e-12);
    EXPECT_NEAR(rv.data()[c], 0.9 + 0.1 * var_unbiased[c], 1e-12);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  const Td x({1, 1, 1, 2}, {3.0, 5.0});
  Td rm({1, 1, 1, 1}, {1.0});
  Td rv({1, 1, 1, 1}, {4.0});
  const Td y = batch_norm(x, Td::full({1, 1, 1, 1}, 2.0), Td::full({1, 1, 1, 1}, 0.5), rm, rv,
                          BatchNormOptions{false, 0.1, 1e-5});
  EXPECT_NEAR(y.data()[0], 2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_NEAR(y.data()[1], 2.0 * 4.0 / std::sqrt(4.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_EQ(rm.data()[0], 1.0);
}

TEST(Relu, ClampsNegatives) {
  const Td y = relu(Td({1, 1, 1, 3}, {-1.0, 0.0, 2.0}));
  EXPECT_EQ(values(y), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(MaxPool, MatchesOracle) {
  Rng rng(5);
  const Shape s{2, 3, 8, 6};
  const Td x = random_normal<double>(s, rng);
  const Td y = max_pool2d(x, 2, 2, 2, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 4, 3}));
  expect_near_all(values(y), oracle::max_pool(values(x), s, 2), 0.0);
}

TEST(MaxPool, RejectsInexactTiling) {
  EXPECT_THROW(max_pool2d(Td::zeros({1, 1, 5, 4}), 2, 2, 2, 2), ShapeError);
}

TEST(MeanOverAxis, AveragesTheRequestedAxis) {
  const Td x({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(mean_over_axis(x, Axis::F).shape(), (Shape{1, 1, 1, 3}));
  EXPECT_EQ(values(mean_over_axis(x, Axis::F)), (std::vector<double>{2.5, 3.5, 4.5}));
  EXPECT_EQ(values(mean_over_axis(x, Axis::T)), (std::vector<double>{2.0, 5.0}));
  EXPECT_EQ(values(mean_over_axis(x, Axis::FT)), (std::vector<double>{3.5}));
}

TEST(ChannelShuffle, InterleavesTwoGroups) {
  std::vector<double> v{0, 1, 2, 3, 4, 5};
  const Td y = channel_shuffle(Td({1, 6, 1, 1}, v), 2);
  // Reshape (2, 3) then transpose: channel order 0, 3, 1, 4, 2, 5.
  EXPECT_EQ(values(y), (std::vector<double>{0, 3, 1, 4, 2, 5}));
}

TEST(ChannelShuffle, InverseIsShuffleWithComplementaryGroups) {
  Rng rng(1);
  const Td x = random_normal<double>({2, 12, 3, 2}, rng);
  EXPECT_EQ(values(channel_shuffle(channel_shuffle(x, 3), 4)), values(x));
}

TEST(ChannelShuffle, RejectsIndivisibleChannels) {
  EXPECT_THROW(channel_shuffle(Td::zeros({1, 5, 1, 1}), 2), ShapeError);
}

TEST(Channels, SplitThenConcatRoundTrips) {
  Rng rng(2);
  const Td x = random_normal<double>({2, 6, 3, 4}, rng);
  auto [a, b] = split_channels(x);
  EXPECT_EQ(a.shape().c, 3u);
  EXPECT_EQ(values(concat_channels(a, b)), values(x));
  EXPECT_EQ(values(slice_channels(x, 3, 3)), values(b));
}

TEST(BroadcastAdd, ExpandsAlongTheReducedAxis) {
  const Td x = Td::zeros({1, 1, 2, 3});
  const Td vf({1, 1, 1, 3}, {1, 2, 3});
  const Td vt({1, 1, 2, 1}, {10, 20});
  EXPECT_EQ(values(broadcast_add(x, vf)), (std::vector<double>{1, 2, 3, 1, 2, 3}));
  EXPECT_EQ(values(broadcast_add(x, vt)), (std::vector<double>{10, 10, 10, 20, 20, 20}));
  EXPECT_THROW(broadcast_add(x, Td::zeros({1, 1, 2, 2})), ShapeError);
}

TEST(AdaResNorm, MatchesOracle) {
  Rng rng(4);
  const Shape s{2, 3, 4, 5};
  const Td x = random_normal<double>(s, rng, 3.0);
  const Td lambda = random_uniform<double>({1, 3, 1, 1}, rng, 0.0, 1.0);
  const Td gamma = random_normal<double>({1, 3, 1, 1}, rng);
  const Td beta = random_normal<double>({1, 3, 1, 1}, rng);
  const Td y = ada_res_norm(x, lambda, gamma, beta, 1e-5);
  expect_near_all(values(y), oracle::ada_res_norm(values(x), s, values(lambda), values(gamma), values(beta), 1e-5),
                  1e-12);
}

TEST(AdaResNorm, LambdaOneIsIdentity) {
  Rng rng(6);
  const Td x = random_normal<double>({1, 2, 3, 4}, rng);
  const Td y = ada_res_norm(x, Td::full({1, 2, 1, 1}, 1.0), Td::full({1, 2, 1, 1}, 7.0), Td::full({1, 2, 1, 1}, 9.0),
                            1e-5);
  expect_near_all(values(y), values(x), 0.0);
}

TEST(TransposeFt, SwapsSpatialAxes) {
  const Td x({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const Td y = transpose_ft(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 2}));
  EXPECT_EQ(values(y), (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

TEST(CrossEntropy, UniformLogitsGiveLogOfClassCount) {
  const Td logits = Td::zeros({4, 10, 1, 1});
  std::vector<double> y(40, 0.0);
  for (std::size_t n = 0; n < 4; ++n) y[n * 10 + (n * 3) % 10] = 1.0;
  EXPECT_NEAR(softmax_cross_entropy(logits, std::span<const double>(y)).item(), std::log(10.0), 1e-6);
}

TEST(CrossEntropy, MatchesExplicitSoftLabelFormula) {
  const Td logits({1, 3, 1, 1}, {1.0, 2.0, 0.5});
  const std::vector<double> y{0.2, 0.5, 0.3};
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  const double expect = -(0.2 * std::log(std::exp(1.0) / z) + 0.5 * std::log(std::exp(2.0) / z) +
                          0.3 * std::log(std::exp(0.5) / z));
  EXPECT_NEAR(softmax_cross_entropy(logits, std::span<const double>(y)).item(), expect, 1e-12);
}
