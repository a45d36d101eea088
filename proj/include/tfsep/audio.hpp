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

// Audio frontend: WAV I/O, linear resampling, and the log-mel spectrogram
// fed to the network.
//
// The spectrogram uses a centered STFT (reflect padding of n_fft/2 on both
// sides) with a periodic Hann window of win_length samples, zero-padded to
// n_fft, a triangular mel filterbank on the Slaney mel scale with
// area normalization, and log(max(power, log_floor)).

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfsep/hash.hpp"
#include "tfsep/tensor.hpp"

namespace tfsep {

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WaveClip {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  double sample_rate = 0;
};

namespace detail {

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte buffer: 16-bit PCM or 32-bit IEEE float, any
/// channel count (averaged to mono).
inline WaveClip decode_wav(std::span<const unsigned char> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError("malformed WAV: missing RIFF/WAVE header");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated data chunk but nothing else.
      if (std::memcmp(chunk, "data", 4) != 0) throw AudioError("malformed WAV: truncated chunk");
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw AudioError("malformed WAV: short fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE) {
        if (avail < 26) throw AudioError("malformed WAV: short extensible fmt chunk");
        format = read_u16(chunk + 8 + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw AudioError("malformed WAV: no fmt chunk");
  if (!data) throw AudioError("malformed WAV: no data chunk");
  if (channels == 0 || rate == 0) throw AudioError("malformed WAV: zero channels or sample rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw AudioError("unsupported WAV codec: format " + std::to_string(format) + ", " +
                     std::to_string(bits) + " bits");
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  if (frames == 0) throw AudioError("WAV has an empty payload");

  WaveClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + (i * channels + ch) * width;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        const std::uint32_t u = read_u32(p);
        float f;
        std::memcpy(&f, &u, sizeof f);
        acc += f;
      }
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

inline WaveClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const AudioError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
}

enum class WavEncoding { Pcm16, Float32 };

/// Encodes interleaved samples as a canonical 44-byte-header WAV.
inline std::string encode_wav(std::span<const float> interleaved, std::uint16_t channels,
                              std::uint32_t sample_rate, WavEncoding enc = WavEncoding::Pcm16) {
  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
  std::string out;
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, enc == WavEncoding::Pcm16 ? 1 : 3);
  detail::put_u16(out, channels);
  detail::put_u32(out, sample_rate);
  detail::put_u32(out, sample_rate * channels * (bits / 8));
  detail::put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (float s : interleaved) {
    if (enc == WavEncoding::Pcm16) {
      const double q = std::clamp(std::round(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      std::uint32_t u;
      std::memcpy(&u, &s, sizeof u);
      detail::put_u32(out, u);
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, std::span<const float> interleaved,
                      std::uint16_t channels, std::uint32_t sample_rate,
                      WavEncoding enc = WavEncoding::Pcm16) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  const std::string bytes = encode_wav(interleaved, channels, sample_rate, enc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Linear-interpolation resampler. Output length is round(n·target/source);
/// output sample i sits at source position i·source/target.
inline WaveClip resample_linear(const WaveClip& clip, double target_rate) {
  if (!(clip.sample_rate > 0) || !(target_rate > 0)) {
    throw std::invalid_argument("resample_linear: sample rates must be positive");
  }
  if (clip.sample_rate == target_rate) return clip;
  const std::size_t n = clip.samples.size();
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));
  WaveClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const double step = clip.sample_rate / target_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto left = static_cast<std::size_t>(pos);
    if (left + 1 >= n) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(left);
    out.samples[i] = static_cast<float>(clip.samples[left] * (1.0 - frac) + clip.samples[left + 1] * frac);
  }
  return out;
}

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    twiddle[k] = std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * twiddle[k * stride];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_hz / f_sp + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

struct LogMelConfig {
  double sample_rate = 32000;
  std::size_t win_length = 3072;
  std::size_t hop_length = 500;
  std::size_t n_fft = 4096;
  std::size_t n_mels = 256;
  double fmin = 0;
  double fmax = 16000;
  double log_floor = 1e-10;
  std::size_t target_frames = 64;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("LogMelConfig: " + m); };
    if (!(sample_rate > 0)) fail("sample_rate must be positive");
    if (n_fft == 0 || (n_fft & (n_fft - 1)) != 0) fail("n_fft must be a power of two");
    if (win_length == 0 || win_length > n_fft) fail("win_length must be in [1, n_fft]");
    if (hop_length == 0) fail("hop_length must be positive");
    if (n_mels == 0) fail("n_mels must be positive");
    if (fmin < 0 || !(fmax > fmin)) fail("need 0 <= fmin < fmax");
    if (fmax > sample_rate / 2) fail("fmax exceeds the Nyquist frequency");
    if (!(log_floor > 0)) fail("log_floor must be positive");
    if (target_frames == 0) fail("target_frames must be positive");
  }

  std::string fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << "logmel/hann-periodic/center-reflect/slaney-mel/slaney-norm/sr=" << sample_rate
       << "/win=" << win_length << "/hop=" << hop_length << "/nfft=" << n_fft
       << "/mels=" << n_mels << "/fmin=" << fmin << "/fmax=" << fmax << "/floor=" << log_floor
       << "/frames=" << target_frames;
    return Fnv1a().text(os.str()).hex();
  }
};

inline void to_json(nlohmann::json& j, const LogMelConfig& c) {
  j = nlohmann::json{{"sample_rate", c.sample_rate}, {"win_length", c.win_length},
                     {"hop_length", c.hop_length},   {"n_fft", c.n_fft},
                     {"n_mels", c.n_mels},           {"fmin", c.fmin},
                     {"fmax", c.fmax},               {"log_floor", c.log_floor},
                     {"target_frames", c.target_frames}};
}

inline void from_json(const nlohmann::json& j, LogMelConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "sample_rate") c.sample_rate = v.get<double>();
    else if (key == "win_length") c.win_length = v.get<std::size_t>();
    else if (key == "hop_length") c.hop_length = v.get<std::size_t>();
    else if (key == "n_fft") c.n_fft = v.get<std::size_t>();
    else if (key == "n_mels") c.n_mels = v.get<std::size_t>();
    else if (key == "fmin") c.fmin = v.get<double>();
    else if (key == "fmax") c.fmax = v.get<double>();
    else if (key == "log_floor") c.log_floor = v.get<double>();
    else if (key == "target_frames") c.target_frames = v.get<std::size_t>();
    else throw std::invalid_argument("unknown frontend config key '" + key + "'");
  }
}

/// Triangular mel filterbank, one row of n_fft/2 + 1 weights per mel band.
class MelFilterbank {
 public:
  explicit MelFilterbank(const LogMelConfig& cfg) : bins_(cfg.n_fft / 2 + 1) {
    cfg.validate();
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);
    edges_hz_.resize(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges_hz_.size(); ++i) {
      edges_hz_[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                            static_cast<double>(cfg.n_mels + 1));
    }
    weights_.assign(cfg.n_mels * bins_, 0.0);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double lo = edges_hz_[m], mid = edges_hz_[m + 1], hi = edges_hz_[m + 2];
      const double norm = 2.0 / (hi - lo);
      bool any = false;
      for (std::size_t k = 0; k < bins_; ++k) {
        const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
        const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
        weights_[m * bins_ + k] = w * norm;
        any = any || w > 0;
      }
      if (!any) {
        throw std::invalid_argument("mel band " + std::to_string(m) +
                                    " covers no FFT bin; lower n_mels or raise n_fft");
      }
    }
  }

  std::size_t bands() const { return edges_hz_.size() - 2; }
  std::size_t bins() const { return bins_; }
  double weight(std::size_t band, std::size_t bin) const { return weights_[band * bins_ + bin]; }
  double center_hz(std::size_t band) const { return edges_hz_[band + 1]; }

  /// Mel energies of one power spectrum.
  std::vector<double> apply(std::span<const double> power) const {
    std::vector<double> out(bands(), 0.0);
    for (std::size_t m = 0; m < bands(); ++m) {
      const double* w = weights_.data() + m * bins_;
      double acc = 0;
      for (std::size_t k = 0; k < bins_; ++k) acc += w[k] * power[k];
      out[m] = acc;
    }
    return out;
  }

 private:
  std::size_t bins_;
  std::vector<double> edges_hz_;
  std::vector<double> weights_;
};

inline std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length));
  }
  return w;
}

/// Centered STFT power spectra, frames × (n_fft/2 + 1), row-major.
/// Frame count is floor(n / hop) + 1.
inline std::vector<double> stft_power(std::span<const float> samples, const LogMelConfig& cfg,
                                      std::size_t* frames_out = nullptr) {
  cfg.validate();
  const std::size_t n = samples.size();
  if (n < cfg.hop_length) {
    throw AudioError("clip of " + std::to_string(n) + " samples is shorter than one hop (" +
                     std::to_string(cfg.hop_length) + ")");
  }
  const auto pad = static_cast<std::ptrdiff_t>(cfg.n_fft / 2);
  const auto len = static_cast<std::ptrdiff_t>(n);
  auto reflect = [len](std::ptrdiff_t i) {
    if (len == 1) return std::ptrdiff_t{0};
    const std::ptrdiff_t period = 2 * (len - 1);
    i %= period;
    if (i < 0) i += period;
    return i < len ? i : period - i;
  };

  const std::size_t frames = n / cfg.hop_length + 1;
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const std::vector<double> window = hann_window(cfg.win_length);
  const std::size_t win_offset = (cfg.n_fft - cfg.win_length) / 2;

  std::vector<double> power(frames * bins);
  std::vector<std::complex<double>> buf(cfg.n_fft);
  for (std::size_t fr = 0; fr < frames; ++fr) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const auto start = static_cast<std::ptrdiff_t>(fr * cfg.hop_length) - pad;
    for (std::size_t i = 0; i < cfg.win_length; ++i) {
      const std::ptrdiff_t src = reflect(start + static_cast<std::ptrdiff_t>(win_offset + i));
      buf[win_offset + i] = samples[static_cast<std::size_t>(src)] * window[i];
    }
    fft_inplace(buf);
    for (std::size_t k = 0; k < bins; ++k) power[fr * bins + k] = std::norm(buf[k]);
  }
  if (frames_out) *frames_out = frames;
  return power;
}

struct LogMelSpectrogram {
  Tensor<float> tensor;  // (1, 1, n_mels, target_frames)
  std::string fingerprint;
  std::size_t frames_before_crop = 0;
};

/// Log-mel spectrogram cropped or right-padded (with log(log_floor)) to
/// target_frames.
inline LogMelSpectrogram log_mel(const WaveClip& clip, const LogMelConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate) {
    throw AudioError("clip sample rate " + std::to_string(clip.sample_rate) +
                     " does not match frontend rate " + std::to_string(cfg.sample_rate));
  }
  std::size_t frames = 0;
  const std::vector<double> power = stft_power(clip.samples, cfg, &frames);
  const MelFilterbank bank(cfg);
  const std::size_t bins = bank.bins();
  const float floor_value = static_cast<float>(std::log(cfg.log_floor));

  std::vector<float> out(cfg.n_mels * cfg.target_frames, floor_value);
  const std::size_t kept = std::min(frames, cfg.target_frames);
  for (std::size_t fr = 0; fr < kept; ++fr) {
    const std::vector<double> mel =
        bank.apply(std::span<const double>(power).subspan(fr * bins, bins));
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      out[m * cfg.target_frames + fr] = static_cast<float>(std::log(std::max(mel[m], cfg.log_floor)));
    }
  }
  return {Tensor<float>({1, 1, cfg.n_mels, cfg.target_frames}, std::move(out)), cfg.fingerprint(),
          frames};
}

}  // namespace tfsep
