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
#include <numbers>

#include "oracles.hpp"
#include "tfsep/tfsep.hpp"

using namespace tfsep;

namespace {

WaveClip sine(double hz, std::size_t n, double amplitude = 0.5, double rate = 32000) {
  WaveClip c;
  c.sample_rate = rate;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(amplitude * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  }
  return c;
}

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Fft, MatchesDirectDft) {
  Rng rng(11);
  std::normal_distribution<double> d;
  std::vector<std::complex<double>> a(64);
  for (auto& z : a) z = {d(rng), d(rng)};
  auto fast = a;
  fft_inplace(fast);
  const auto slow = oracle::dft(a);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT(std::abs(fast[k] - slow[k]), 1e-10);
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<std::complex<double>> a(12);
  EXPECT_THROW(fft_inplace(a), std::invalid_argument);
}

TEST(HannWindow, IsPeriodic) {
  const auto w = hann_window(8);
  EXPECT_NEAR(w[0], 0.0, 1e-15);
  EXPECT_NEAR(w[4], 1.0, 1e-15);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_NEAR(w[i], w[8 - i], 1e-15);
}

TEST(MelScale, MatchesSlaneyFormula) {
  EXPECT_NEAR(hz_to_mel(1000), 15.0, 1e-12);
  for (double hz : {0.0, 200.0, 999.0, 1000.0, 2500.0, 8000.0, 16000.0}) {
    EXPECT_NEAR(hz_to_mel(hz), oracle::slaney_mel(hz), 1e-9) << hz;
    EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9) << hz;
  }
}

TEST(MelFilterbank, TrianglesHaveUnitAreaInHz) {
  const LogMelConfig cfg;
  const MelFilterbank bank(cfg);
  ASSERT_EQ(bank.bands(), 256u);
  ASSERT_EQ(bank.bins(), 2049u);
  const double df = cfg.sample_rate / static_cast<double>(cfg.n_fft);
  // Bands spanning many FFT bins integrate to ~1 under area normalization.
  for (std::size_t m = 200; m < 256; m += 11) {
    double area = 0;
    for (std::size_t k = 0; k < bank.bins(); ++k) area += bank.weight(m, k) * df;
    EXPECT_NEAR(area, 1.0, 0.02) << "band " << m;
  }
}

TEST(MelFilterbank, RejectsBandsWithNoBins) {
  LogMelConfig cfg;
  cfg.n_fft = 256;
  cfg.win_length = 256;
  EXPECT_THROW(MelFilterbank{cfg}, std::invalid_argument);
}

TEST(Stft, FrameCountAndBinCentredSinePower) {
  const LogMelConfig cfg;
  std::size_t frames = 0;
  // 1000 Hz = bin 128 exactly (32000 / 4096 · 128).
  const WaveClip clip = sine(1000, 32000, 0.5);
  const auto power = stft_power(clip.samples, cfg, &frames);
  EXPECT_EQ(frames, 32000u / 500 + 1);
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const std::size_t mid = frames / 2;
  // |X[k]| = A · Σw / 2 with Σw = L/2 for a periodic Hann of length L.
  const double expected = std::pow(0.5 * 3072 / 4.0, 2);
  EXPECT_NEAR(power[mid * bins + 128] / expected, 1.0, 1e-6);
  const auto row = std::span<const double>(power).subspan(mid * bins, bins);
  EXPECT_EQ(std::max_element(row.begin(), row.end()) - row.begin(), 128);
}

TEST(LogMel, OneSecondClipGivesNetworkInputShape) {
  const auto spec = log_mel(sine(440, 32000), LogMelConfig{});
  EXPECT_EQ(spec.tensor.shape(), (Shape{1, 1, 256, 64}));
  EXPECT_EQ(spec.frames_before_crop, 65u);
}

TEST(LogMel, SilenceIsUniformLogFloor) {
  WaveClip silence;
  silence.sample_rate = 32000;
  silence.samples.assign(32000, 0.0f);
  const auto spec = log_mel(silence, LogMelConfig{});
  const float floor_value = static_cast<float>(std::log(1e-10));
  for (float v : spec.tensor.data()) ASSERT_EQ(v, floor_value);
}

TEST(LogMel, SinePeakLandsOnMelMappedBand) {
  const LogMelConfig cfg;
  const auto spec = log_mel(sine(1000, 32000), cfg);
  const std::size_t expected = oracle::nearest_mel_band(1000, cfg.n_mels, cfg.fmin, cfg.fmax);
  for (std::size_t t : {5u, 32u, 60u}) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < cfg.n_mels; ++m)
      if (spec.tensor.at(0, 0, m, t) > spec.tensor.at(0, 0, best, t)) best = m;
    EXPECT_LE(std::abs(static_cast<long>(best) - static_cast<long>(expected)), 2) << "frame " << t;
  }
}

TEST(LogMel, ShortClipIsPaddedWithFloor) {
  const auto spec = log_mel(sine(1000, 16000), LogMelConfig{});
  EXPECT_EQ(spec.frames_before_crop, 33u);
  const float floor_value = static_cast<float>(std::log(1e-10));
  for (std::size_t m = 0; m < 256; ++m)
    for (std::size_t t = 33; t < 64; ++t) ASSERT_EQ(spec.tensor.at(0, 0, m, t), floor_value);
}

TEST(LogMel, RejectsRateMismatchAndTinyClips) {
  EXPECT_THROW(log_mel(sine(1000, 32000, 0.5, 16000), LogMelConfig{}), AudioError);
  EXPECT_THROW(log_mel(sine(1000, 100), LogMelConfig{}), AudioError);
}

TEST(LogMel, FingerprintTracksConfig) {
  LogMelConfig a, b;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.hop_length = 400;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(LogMelConfig, JsonIsStrict) {
  EXPECT_THROW(nlohmann::json({{"n_mel", 128}}).get<LogMelConfig>(), std::invalid_argument);
  const LogMelConfig c = nlohmann::json({{"n_mels", 128}}).get<LogMelConfig>();
  EXPECT_EQ(c.n_mels, 128u);
}

TEST(Wav, Float32RoundTripIsExact) {
  const std::vector<float> v{0.0f, 0.25f, -0.5f, 0.999f};
  const WaveClip c = decode_wav(bytes_of(encode_wav(v, 1, 32000, WavEncoding::Float32)));
  EXPECT_EQ(c.sample_rate, 32000);
  EXPECT_EQ(c.samples, v);
}

TEST(Wav, Pcm16RoundTripWithinQuantisation) {
  const std::vector<float> v{0.0f, 0.25f, -0.5f, 0.3f};
  const WaveClip c = decode_wav(bytes_of(encode_wav(v, 1, 16000)));
  ASSERT_EQ(c.samples.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(c.samples[i], v[i], 1.0 / 32768);
}

TEST(Wav, StereoIsAveraged) {
  const std::vector<float> interleaved{0.5f, -0.5f, 0.25f, 0.75f};
  const WaveClip c = decode_wav(bytes_of(encode_wav(interleaved, 2, 32000, WavEncoding::Float32)));
  ASSERT_EQ(c.samples.size(), 2u);
  EXPECT_FLOAT_EQ(c.samples[0], 0.0f);
  EXPECT_FLOAT_EQ(c.samples[1], 0.5f);
}

TEST(Wav, RejectsMalformedAndEmpty) {
  EXPECT_THROW(decode_wav(bytes_of("not a wav file at all")), AudioError);
  EXPECT_THROW(decode_wav(bytes_of(encode_wav(std::vector<float>{}, 1, 32000))), AudioError);
}

TEST(Resample, LengthAndLinearSignals) {
  WaveClip ramp;
  ramp.sample_rate = 16000;
  for (int i = 0; i < 1000; ++i) ramp.samples.push_back(static_cast<float>(i) / 1000.0f);
  const WaveClip up = resample_linear(ramp, 32000);
  EXPECT_EQ(up.samples.size(), 2000u);
  // Output sample i sits at source position i/2 on a linear ramp.
  for (std::size_t i = 0; i < 1998; ++i) EXPECT_NEAR(up.samples[i], static_cast<double>(i) / 2000.0, 1e-6);
}
