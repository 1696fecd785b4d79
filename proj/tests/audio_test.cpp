#include "dubeval/audio.hpp"

#include <fftw3.h>
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace dubeval {
namespace {

using testing::ScratchDir;
using testing::Sine;

std::vector<unsigned char> Bytes(const std::string& s) { return {s.begin(), s.end()}; }

// Minimal hand-built WAVE header; `format` 1 = PCM, 3 = float, 0xFFFE = extensible.
std::string WavHeader(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                      std::uint32_t data_bytes, std::uint16_t sub_format = 1) {
  std::string out = "RIFF";
  const bool ext = format == 0xFFFE;
  const std::uint32_t fmt_size = ext ? 40 : 16;
  detail::PutU32(out, 4 + 8 + fmt_size + 8 + data_bytes);
  out += "WAVEfmt ";
  detail::PutU32(out, fmt_size);
  detail::PutU16(out, format);
  detail::PutU16(out, channels);
  detail::PutU32(out, rate);
  detail::PutU32(out, rate * channels * bits / 8);
  detail::PutU16(out, static_cast<std::uint16_t>(channels * bits / 8));
  detail::PutU16(out, bits);
  if (ext) {
    detail::PutU16(out, 22);
    detail::PutU16(out, bits);
    detail::PutU32(out, 0);
    detail::PutU16(out, sub_format);
    out.append(14, '\0');
  }
  out += "data";
  detail::PutU32(out, data_bytes);
  return out;
}

TEST(ReadWav, OneSecondMonoPcm16) {
  ScratchDir dir("wav");
  const Waveform src = Sine(440.0, 1.0, 22050);
  WriteWav(dir / "a.wav", src);
  const Waveform w = ReadWav(dir / "a.wav");
  EXPECT_EQ(w.samples.size(), 22050u);
  EXPECT_EQ(w.sample_rate, 22050);
  EXPECT_EQ(w.channels, 1);
}

TEST(ReadWav, AllZeroPcmIsExactlyZero) {
  std::string bytes = WavHeader(1, 1, 16000, 16, 8);
  bytes.append(8, '\0');
  const Waveform w = DecodeWav(Bytes(bytes));
  ASSERT_EQ(w.samples.size(), 4u);
  for (double s : w.samples) EXPECT_EQ(s, 0.0);
}

TEST(ReadWav, MaxInt16NormalizesTo32767Over32768) {
  std::string bytes = WavHeader(1, 1, 16000, 16, 4);
  detail::PutU16(bytes, 32767);
  detail::PutU16(bytes, static_cast<std::uint16_t>(-32768));
  const Waveform w = DecodeWav(Bytes(bytes));
  EXPECT_NEAR(w.samples[0], 32767.0 / 32768.0, 1e-9);
  EXPECT_EQ(w.samples[1], -1.0);
}

TEST(ReadWav, Float32AndExtensible) {
  std::string plain = WavHeader(3, 2, 48000, 32, 8);
  const float vals[2] = {0.25f, -0.75f};
  plain.append(reinterpret_cast<const char*>(vals), sizeof(vals));
  const Waveform a = DecodeWav(Bytes(plain));
  EXPECT_EQ(a.channels, 2);
  EXPECT_EQ(a.sample_rate, 48000);
  EXPECT_DOUBLE_EQ(a.samples[0], 0.25);
  EXPECT_DOUBLE_EQ(a.samples[1], -0.75);

  std::string ext = WavHeader(0xFFFE, 1, 8000, 16, 2, /*sub_format=*/1);
  detail::PutU16(ext, 16384);
  const Waveform b = DecodeWav(Bytes(ext));
  EXPECT_DOUBLE_EQ(b.samples[0], 0.5);
}

TEST(ReadWav, DistinctErrorKinds) {
  EXPECT_THROW(
      {
        try {
          ReadWav("/nonexistent/dir/missing.wav");
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::kFileNotFound);
          throw;
        }
      },
      Error);

  std::string pcm24 = WavHeader(1, 1, 16000, 24, 3);
  pcm24.append(3, '\0');
  try {
    DecodeWav(Bytes(pcm24));
    FAIL() << "24-bit PCM accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedFormat);
  }

  std::string truncated = WavHeader(1, 1, 16000, 16, 100);
  truncated.append(10, '\0');
  try {
    DecodeWav(Bytes(truncated));
    FAIL() << "truncated payload accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTruncated);
  }

  try {
    DecodeWav(Bytes("not a wave file at all"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedFormat);
  }
}

TEST(ReadWav, RoundTripWithinOneQuantizationStep) {
  ScratchDir dir("roundtrip");
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 0.9999);
  Waveform src;
  src.sample_rate = 16000;
  src.channels = 2;
  for (int i = 0; i < 2000; ++i) src.samples.push_back(u(rng));
  WriteWav(dir / "r.wav", src);
  const Waveform once = ReadWav(dir / "r.wav");
  ASSERT_EQ(once.samples.size(), src.samples.size());
  EXPECT_EQ(once.channels, 2);
  for (std::size_t i = 0; i < src.samples.size(); ++i) EXPECT_LE(std::abs(once.samples[i] - src.samples[i]), 1.0 / 32768);
  WriteWav(dir / "r2.wav", once);
  EXPECT_EQ(ReadWav(dir / "r2.wav").samples, once.samples);
}

TEST(ToMono, MonoInputUnchanged) {
  const Waveform w = Sine(200.0, 0.01);
  EXPECT_EQ(ToMono(w, {MonoMode::kAverage}).samples, w.samples);
  EXPECT_EQ(ToMono(w, {MonoMode::kCenterChannel}).samples, w.samples);
  EXPECT_EQ(ToMono(w, {MonoMode::kChannel, 0}).samples, w.samples);
  EXPECT_THROW(ToMono(w, {MonoMode::kChannel, 1}), Error);
}

TEST(ToMono, StereoAverage) {
  Waveform w;
  w.channels = 2;
  w.samples = {0.2, 0.4};
  const Waveform m = ToMono(w, {MonoMode::kAverage});
  ASSERT_EQ(m.samples.size(), 1u);
  EXPECT_NEAR(m.samples[0], 0.3, 1e-15);
  EXPECT_EQ(m.channels, 1);
}

TEST(ToMono, CenterChannelOfSixChannelAudio) {
  // Channel c carries a tone at 200 * (c + 1) Hz.
  Waveform w;
  w.channels = 6;
  w.sample_rate = 22050;
  std::vector<std::vector<double>> tones;
  for (int c = 0; c < 6; ++c) tones.push_back(Sine(200.0 * (c + 1), 0.05).samples);
  for (std::size_t t = 0; t < tones[0].size(); ++t) {
    for (int c = 0; c < 6; ++c) w.samples.push_back(tones[static_cast<std::size_t>(c)][t]);
  }
  const Waveform center = ToMono(w, {MonoMode::kCenterChannel});
  EXPECT_EQ(center.samples, tones[2]);
  EXPECT_EQ(center.sample_rate, 22050);

  Waveform frame;
  frame.channels = 6;
  frame.samples = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(ToMono(frame, {MonoMode::kCenterChannel}).samples, std::vector<double>{3});
}

TEST(ToMono, CenterChannelNeedsThreeChannels) {
  Waveform w;
  w.channels = 2;
  w.samples = {0.1, 0.2};
  EXPECT_THROW(ToMono(w, {MonoMode::kCenterChannel}), Error);
  EXPECT_THROW(ToMono(w, {MonoMode::kChannel, 2}), Error);
}

TEST(ToMono, AverageCommutesWithGain) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Waveform w;
  w.channels = 4;
  for (int i = 0; i < 400; ++i) w.samples.push_back(u(rng));
  // Power-of-two gains keep the scaled arithmetic exact.
  for (double gain : {0.5, 2.0, -0.25}) {
    Waveform scaled = w;
    for (double& s : scaled.samples) s *= gain;
    const auto a = ToMono(scaled, {MonoMode::kAverage}).samples;
    auto b = ToMono(w, {MonoMode::kAverage}).samples;
    for (double& s : b) s *= gain;
    EXPECT_EQ(a, b);
  }
}

double PeakFrequency(const Waveform& w) {
  const int n = static_cast<int>(w.samples.size());
  std::vector<double> in(w.samples);
  std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  int best = 0;
  double best_mag = -1.0;
  for (int k = 0; k <= n / 2; ++k) {
    const double mag = std::hypot(out[static_cast<std::size_t>(k)][0], out[static_cast<std::size_t>(k)][1]);
    if (mag > best_mag) {
      best_mag = mag;
      best = k;
    }
  }
  return static_cast<double>(best) * w.sample_rate / n;
}

TEST(Resample, SameRateIsBitIdentical) {
  const Waveform w = Sine(330.0, 0.1, 16000);
  EXPECT_EQ(Resample(w, 16000).samples, w.samples);
}

TEST(Resample, ToneKeepsItsFrequency) {
  const Waveform w = Sine(440.0, 1.0, 44100);
  const Waveform r = Resample(w, 22050);
  EXPECT_EQ(r.sample_rate, 22050);
  EXPECT_NEAR(PeakFrequency(r), 440.0, 1.0);
}

TEST(Resample, LengthFollowsRateRatio) {
  const Waveform w = Sine(440.0, 1.0, 48000);
  const Waveform r = Resample(w, 22050);
  EXPECT_NEAR(static_cast<double>(r.samples.size()), 22050.0, 1.0);
  const Waveform up = Resample(Sine(440.0, 1.0, 16000), 22050);
  EXPECT_NEAR(static_cast<double>(up.samples.size()), 22050.0, 1.0);
  EXPECT_NEAR(PeakFrequency(up), 440.0, 1.0);
}

TEST(Resample, StopbandAttenuationReaches80Db) {
  // 15 kHz lies above the 11.025 kHz output Nyquist and would alias to 7.05 kHz.
  const Waveform w = Sine(15000.0, 0.5, 44100, 1.0);
  const Waveform r = Resample(w, 22050);
  double peak = 0.0;
  for (std::size_t i = 1000; i + 1000 < r.samples.size(); ++i) peak = std::max(peak, std::abs(r.samples[i]));
  EXPECT_LT(peak, 1e-4);
}

TEST(Resample, PassbandGainIsUnity) {
  const Waveform r = Resample(Sine(1000.0, 0.5, 48000, 0.5), 22050);
  double peak = 0.0;
  for (std::size_t i = 1000; i + 1000 < r.samples.size(); ++i) peak = std::max(peak, std::abs(r.samples[i]));
  EXPECT_NEAR(peak, 0.5, 0.005);
}

TEST(Resample, RejectsZeroRate) { EXPECT_THROW(Resample(Sine(100, 0.01), 0), Error); }

TEST(PadToLength, Basics) {
  Waveform w;
  w.samples = {0.5, -0.5};
  EXPECT_EQ(PadToLength(w, 2).samples, w.samples);
  EXPECT_EQ(PadToLength(w, 4).samples, (std::vector<double>{0.5, -0.5, 0.0, 0.0}));
  EXPECT_THROW(PadToLength(w, 1), Error);
}

TEST(PadToLength, PrefixIsByteExact) {
  const Waveform w = testing::SyntheticVoice(0.2, 120, 180, 5);
  const Waveform p = PadToLength(w, w.samples.size() + 777);
  EXPECT_EQ(std::memcmp(p.samples.data(), w.samples.data(), w.samples.size() * sizeof(double)), 0);
  for (std::size_t i = w.samples.size(); i < p.samples.size(); ++i) EXPECT_EQ(p.samples[i], 0.0);
}

}  // namespace
}  // namespace dubeval
