// Copyright 2026 The binsep Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binsep/error.hpp"

namespace binsep {

inline constexpr int kPipelineRate = 16000;

// PCM audio with one or two equal-length channels, amplitudes in [-1, 1].
struct AudioClip {
  int sample_rate = kPipelineRate;
  std::vector<std::vector<double>> channels;

  static AudioClip mono(std::vector<double> samples, int rate = kPipelineRate) {
    AudioClip clip;
    clip.sample_rate = rate;
    clip.channels.push_back(std::move(samples));
    return clip;
  }

  static AudioClip stereo(std::vector<double> left, std::vector<double> right,
                          int rate = kPipelineRate) {
    AudioClip clip;
    clip.sample_rate = rate;
    clip.channels.push_back(std::move(left));
    clip.channels.push_back(std::move(right));
    return clip;
  }

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_frames() const {
    return channels.empty() ? 0 : channels.front().size();
  }
  bool empty() const { return num_frames() == 0; }

  const std::vector<double>& channel(std::size_t i) const {
    return channels.at(i);
  }
  const std::vector<double>& left() const { return channels.at(0); }
  const std::vector<double>& right() const { return channels.at(1); }

  void validate() const {
    if (channels.empty() || channels.size() > 2)
      throw Error(ErrorKind::kContract, "audio clip must have 1 or 2 channels");
    if (sample_rate <= 0)
      throw Error(ErrorKind::kContract, "sample rate must be positive");
    for (const auto& ch : channels)
      if (ch.size() != channels.front().size())
        throw Error(ErrorKind::kContract, "stereo channels differ in length");
  }
};

inline void require_pipeline_rate(const AudioClip& clip, std::string_view what) {
  if (clip.sample_rate != kPipelineRate)
    throw Error(ErrorKind::kContract,
                std::string(what) + ": expected 16000 Hz audio, got " +
                    std::to_string(clip.sample_rate) + " Hz");
}

inline void require_stereo(const AudioClip& clip, std::string_view what) {
  clip.validate();
  if (clip.num_channels() != 2)
    throw Error(ErrorKind::kContract,
                std::string(what) + ": expected a stereo clip");
  if (clip.empty())
    throw Error(ErrorKind::kContract, std::string(what) + ": empty clip");
}

enum class WavEncoding { kPcm16, kFloat32 };

namespace detail {

inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline AudioClip read_wav(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  const auto malformed = [&](const std::string& why) {
    return Error(ErrorKind::kFormat,
                 path.string() + ": malformed WAV header (" + why + ")");
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw malformed("missing RIFF/WAVE tags");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = detail::le32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw malformed("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw malformed("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = detail::le16(f);
      channels = detail::le16(f + 2);
      rate = detail::le32(f + 4);
      block_align = detail::le16(f + 12);
      bits = detail::le16(f + 14);
      if (format == 0xFFFE && size >= 26) format = detail::le16(f + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw malformed("no fmt chunk");
  if (data == nullptr) throw malformed("no data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw Error(ErrorKind::kFormat,
                path.string() + ": unsupported encoding (format " +
                    std::to_string(format) + ", " + std::to_string(bits) +
                    " bits)");
  if (channels < 1 || channels > 2)
    throw Error(ErrorKind::kFormat, path.string() + ": unsupported channel count " +
                                        std::to_string(channels));
  const std::size_t sample_bytes = bits / 8;
  if (block_align != channels * sample_bytes) throw malformed("bad block align");
  if (data_size % block_align != 0)
    throw malformed("data payload is not a whole number of frames");
  const std::size_t frames = data_size / block_align;
  if (frames == 0)
    throw Error(ErrorKind::kFormat, path.string() + ": zero-length audio");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.channels.assign(channels, std::vector<double>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * block_align + c * sample_bytes;
      if (pcm16) {
        auto v = static_cast<std::int16_t>(detail::le16(p));
        clip.channels[c][i] = v / 32768.0;
      } else {
        clip.channels[c][i] = std::bit_cast<float>(detail::le32(p));
      }
    }
  }
  return clip;
}

// Writes the clip and returns how many samples had to be clipped to [-1, 1].
inline std::size_t write_wav(const AudioClip& clip,
                             const std::filesystem::path& path,
                             WavEncoding encoding = WavEncoding::kPcm16) {
  clip.validate();
  if (clip.empty()) throw Error(ErrorKind::kContract, "cannot write an empty clip");
  const auto nch = static_cast<std::uint16_t>(clip.num_channels());
  const std::size_t frames = clip.num_frames();
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(nch * bits / 8);
  const std::uint32_t data_size = static_cast<std::uint32_t>(frames * block);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  detail::put_tag(out, "RIFF");
  detail::put32(out, 36 + data_size);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put32(out, 16);
  detail::put16(out, encoding == WavEncoding::kPcm16 ? 1 : 3);
  detail::put16(out, nch);
  detail::put32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put32(out, static_cast<std::uint32_t>(clip.sample_rate) * block);
  detail::put16(out, block);
  detail::put16(out, bits);
  detail::put_tag(out, "data");
  detail::put32(out, data_size);

  std::size_t clipped = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : clip.channels) {
      double x = ch[i];
      if (!std::isfinite(x))
        throw Error(ErrorKind::kContract, "non-finite sample in clip");
      if (x > 1.0 || x < -1.0) {
        ++clipped;
        x = std::clamp(x, -1.0, 1.0);
      }
      if (encoding == WavEncoding::kPcm16) {
        double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
        detail::put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
      }
    }
  }
  if (clipped > 0)
    warn(path.string() + ": clipped " + std::to_string(clipped) + " samples");

  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::kIo, "write failed for " + path.string());
  return clipped;
}

// Rational-rate resampler: zero-stuff by `up`, Kaiser-windowed sinc low-pass
// (70 dB stopband, transition band ending at the lower Nyquist), keep every
// `down`-th sample. The filter is applied zero-phase, so output sample j lines
// up with input time j * down / up.
inline std::vector<double> resample_poly(std::span<const double> x, int up,
                                         int down) {
  if (up <= 0 || down <= 0)
    throw Error(ErrorKind::kContract, "resampling factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return {x.begin(), x.end()};

  const double stop_edge = 0.5 / std::max(up, down);
  const double cutoff = 0.95 * stop_edge;
  const double transition = 0.1 * stop_edge;
  const double atten_db = 70.0;
  const double beta = 0.1102 * (atten_db - 8.7);
  auto taps = static_cast<std::size_t>(std::ceil(
      (atten_db - 7.95) / (2.285 * 2.0 * std::numbers::pi * transition)));
  taps |= 1u;
  const double centre = (taps - 1) / 2.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);

  std::vector<double> h(taps);
  for (std::size_t n = 0; n < taps; ++n) {
    double t = n - centre;
    double arg = 2.0 * cutoff * t;
    double sinc = t == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) /
                                       (std::numbers::pi * arg);
    double r = t / centre;
    double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
                    i0_beta;
    h[n] = 2.0 * cutoff * sinc * kaiser;
  }
  const double gain = std::accumulate(h.begin(), h.end(), 0.0);
  for (auto& v : h) v *= up / gain;

  const std::size_t out_len = (x.size() * up + down - 1) / down;
  const auto half = static_cast<long long>(centre);
  const auto upsampled_len = static_cast<long long>(x.size()) * up;
  std::vector<double> y(out_len, 0.0);
  for (std::size_t j = 0; j < out_len; ++j) {
    // Upsampled index p = j*down + half - n must be a multiple of `up`.
    const long long base = static_cast<long long>(j) * down + half;
    long long n0 = base % up;
    double acc = 0.0;
    for (long long n = n0; n < static_cast<long long>(taps); n += up) {
      long long p = base - n;
      if (p < 0) break;
      if (p >= upsampled_len) continue;
      acc += h[static_cast<std::size_t>(n)] * x[static_cast<std::size_t>(p / up)];
    }
    y[j] = acc;
  }
  return y;
}

inline AudioClip resample_to_16k(const AudioClip& clip) {
  clip.validate();
  if (clip.sample_rate == kPipelineRate) return clip;
  if (clip.sample_rate != 48000)
    throw Error(ErrorKind::kContract,
                "unsupported input rate " + std::to_string(clip.sample_rate) +
                    " Hz (only 16000 and 48000 are accepted)");
  AudioClip out;
  out.sample_rate = kPipelineRate;
  for (const auto& ch : clip.channels) out.channels.push_back(resample_poly(ch, 1, 3));
  return out;
}

}  // namespace binsep
