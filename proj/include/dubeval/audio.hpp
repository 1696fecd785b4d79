#ifndef DUBEVAL_AUDIO_HPP
#define DUBEVAL_AUDIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dubeval/error.hpp"

namespace dubeval {

inline constexpr int kCanonicalSampleRate = 22050;

// Interleaved, frame-major samples. After preprocessing channels == 1.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;
  int channels = 1;

  std::size_t frames() const { return channels > 0 ? samples.size() / channels : 0; }
  double duration_s() const { return static_cast<double>(frames()) / sample_rate; }
};

enum class MonoMode { kCenterChannel, kAverage, kChannel };

struct MonoSelect {
  MonoMode mode = MonoMode::kAverage;
  int channel = 0;  // only read for kChannel
};

namespace detail {

inline std::uint16_t ReadU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t ReadU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Zeroth-order modified Bessel function of the first kind (power series).
inline double BesselI0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

}  // namespace detail

// Decodes RIFF/WAVE PCM16 or IEEE float32 (plain or WAVE_FORMAT_EXTENSIBLE).
inline Waveform DecodeWav(std::span<const unsigned char> bytes, const std::string& name = "<memory>") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    if (bytes.size() < 12 && bytes.size() >= 4 && std::memcmp(bytes.data(), "RIFF", 4) == 0) {
      throw Error(ErrorKind::kTruncated, name + ": truncated RIFF header");
    }
    throw Error(ErrorKind::kUnsupportedFormat, name + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = detail::ReadU32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > bytes.size()) {
        throw Error(ErrorKind::kTruncated, name + ": truncated fmt chunk");
      }
      const unsigned char* f = bytes.data() + body;
      format = detail::ReadU16(f);
      channels = detail::ReadU16(f + 2);
      rate = detail::ReadU32(f + 4);
      bits = detail::ReadU16(f + 14);
      if (format == 0xFFFE) {
        if (chunk_size < 40) throw Error(ErrorKind::kTruncated, name + ": truncated extensible fmt chunk");
        format = detail::ReadU16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorKind::kUnsupportedFormat, name + ": data chunk before fmt chunk");
      const bool pcm16 = format == 1 && bits == 16;
      const bool float32 = format == 3 && bits == 32;
      if (!pcm16 && !float32) {
        throw Error(ErrorKind::kUnsupportedFormat,
                    name + ": unsupported codec (format " + std::to_string(format) + ", " +
                        std::to_string(bits) + " bits); only PCM16 and float32 are accepted");
      }
      if (channels == 0 || rate == 0) {
        throw Error(ErrorKind::kUnsupportedFormat, name + ": zero channels or sample rate");
      }
      const std::size_t width = bits / 8;
      const std::size_t block = width * channels;
      if (body + chunk_size > bytes.size() || chunk_size % block != 0) {
        throw Error(ErrorKind::kTruncated, name + ": truncated data chunk");
      }
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.channels = channels;
      const std::size_t count = chunk_size / width;
      w.samples.resize(count);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < count; ++i) {
        if (pcm16) {
          const auto raw = static_cast<std::int16_t>(detail::ReadU16(d + 2 * i));
          w.samples[i] = raw / 32768.0;
        } else {
          const std::uint32_t raw = detail::ReadU32(d + 4 * i);
          float value;
          std::memcpy(&value, &raw, sizeof(value));
          if (!std::isfinite(value)) {
            throw Error(ErrorKind::kUnsupportedFormat, name + ": non-finite float sample");
          }
          w.samples[i] = value;
        }
      }
      return w;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw Error(ErrorKind::kTruncated, name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kFileNotFound, path.string() + ": cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodeWav(bytes, path.string());
}

// PCM16, interleaved as stored in `w`. Samples are clipped to [-1, 1).
inline std::string EncodeWavPcm16(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::PutU32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::PutU32(out, 16);
  detail::PutU16(out, 1);
  detail::PutU16(out, static_cast<std::uint16_t>(w.channels));
  detail::PutU32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::PutU32(out, static_cast<std::uint32_t>(w.sample_rate * w.channels * 2));
  detail::PutU16(out, static_cast<std::uint16_t>(w.channels * 2));
  detail::PutU16(out, 16);
  out += "data";
  detail::PutU32(out, data_bytes);
  for (double s : w.samples) {
    const double scaled = std::round(s * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    detail::PutU16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

inline void WriteWav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, path.string() + ": cannot open for writing");
  const std::string bytes = EncodeWavPcm16(w);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, path.string() + ": write failed");
}

// Center-channel selection uses the WAVE multichannel order FL, FR, FC, ...
inline Waveform ToMono(const Waveform& w, MonoSelect select = {}) {
  if (w.channels < 1) throw Error(ErrorKind::kInvalidArgument, "waveform has no channels");
  int pick = -1;
  switch (select.mode) {
    case MonoMode::kCenterChannel:
      if (w.channels == 1) return w;
      if (w.channels < 3) {
        throw Error(ErrorKind::kInvalidArgument,
                    "center channel requested but audio has " + std::to_string(w.channels) + " channels");
      }
      pick = 2;
      break;
    case MonoMode::kChannel:
      if (select.channel < 0 || select.channel >= w.channels) {
        throw Error(ErrorKind::kInvalidArgument, "channel index " + std::to_string(select.channel) +
                                                     " out of range for " + std::to_string(w.channels) +
                                                     " channels");
      }
      pick = select.channel;
      break;
    case MonoMode::kAverage:
      break;
  }
  if (w.channels == 1) return w;

  Waveform out;
  out.sample_rate = w.sample_rate;
  out.channels = 1;
  const std::size_t n = w.frames();
  out.samples.resize(n);
  const auto c = static_cast<std::size_t>(w.channels);
  for (std::size_t t = 0; t < n; ++t) {
    if (pick >= 0) {
      out.samples[t] = w.samples[t * c + pick];
    } else {
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) sum += w.samples[t * c + k];
      out.samples[t] = sum / static_cast<double>(c);
    }
  }
  return out;
}

// Band-limited polyphase resampler: Kaiser-windowed sinc designed for an
// 80 dB stopband, passband edge at 90% of the lower Nyquist frequency.
inline Waveform Resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorKind::kInvalidArgument, "target sample rate must be positive");
  if (w.channels != 1) throw Error(ErrorKind::kInvalidArgument, "resample expects mono audio");
  if (target_rate == w.sample_rate) return w;

  const long g = std::gcd(static_cast<long>(target_rate), static_cast<long>(w.sample_rate));
  const long up = target_rate / g;
  const long down = w.sample_rate / g;

  // Frequencies below in cycles per input sample.
  const double rmin = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const double cutoff = 0.95 * 0.5 * rmin;
  const double transition = 0.1 * 0.5 * rmin;
  constexpr double kAttenuationDb = 80.0;
  const double beta = 0.1102 * (kAttenuationDb - 8.7);
  const double taps_needed = (kAttenuationDb - 8.0) / (2.285 * 2.0 * std::numbers::pi * transition);
  const long half = static_cast<long>(std::ceil(taps_needed / 2.0)) + 1;
  const double i0_beta = detail::BesselI0(beta);

  // table[phase][j] holds h(phase/up + half - 1 - j) for j in [0, 2*half).
  const auto width = static_cast<std::size_t>(2 * half);
  std::vector<double> table(static_cast<std::size_t>(up) * width);
  for (long phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    for (std::size_t j = 0; j < width; ++j) {
      const double t = frac + static_cast<double>(half - 1) - static_cast<double>(j);
      const double r = t / static_cast<double>(half);
      double win = 0.0;
      if (std::abs(r) <= 1.0) win = detail::BesselI0(beta * std::sqrt(1.0 - r * r)) / i0_beta;
      table[static_cast<std::size_t>(phase) * width + j] = 2.0 * cutoff * detail::Sinc(2.0 * cutoff * t) * win;
    }
  }

  const auto in_len = static_cast<long>(w.samples.size());
  const long out_len = (in_len * up + down / 2) / down;
  Waveform out;
  out.sample_rate = target_rate;
  out.channels = 1;
  out.samples.resize(static_cast<std::size_t>(out_len));
  for (long n = 0; n < out_len; ++n) {
    const long pos = n * down;
    const long base = pos / up;
    const long phase = pos % up;
    const double* h = table.data() + static_cast<std::size_t>(phase) * width;
    double acc = 0.0;
    const long first = base - half + 1;
    for (std::size_t j = 0; j < width; ++j) {
      const long k = first + static_cast<long>(j);
      if (k < 0 || k >= in_len) continue;
      acc += w.samples[static_cast<std::size_t>(k)] * h[j];
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

inline Waveform PadToLength(const Waveform& w, std::size_t target_frames) {
  if (target_frames < w.frames()) {
    throw Error(ErrorKind::kInvalidArgument, "pad target " + std::to_string(target_frames) +
                                                 " is shorter than waveform length " +
                                                 std::to_string(w.frames()));
  }
  Waveform out = w;
  out.samples.resize(target_frames * static_cast<std::size_t>(w.channels), 0.0);
  return out;
}

// Decode + channel selection + resampling to `rate`.
inline Waveform LoadMono(const std::filesystem::path& path, MonoSelect select = {},
                         int rate = kCanonicalSampleRate) {
  return Resample(ToMono(ReadWav(path), select), rate);
}

}  // namespace dubeval

#endif  // DUBEVAL_AUDIO_HPP
