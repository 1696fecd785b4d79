#ifndef DUBEVAL_DSP_HPP
#define DUBEVAL_DSP_HPP

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dubeval/audio.hpp"
#include "dubeval/error.hpp"
#include "dubeval/matrix.hpp"

namespace dubeval {

struct FrameParams {
  int fft_size = 1024;
  int hop = 256;
  int win_length = 1024;

  void Validate() const {
    if (!(hop > 0 && hop <= win_length && win_length <= fft_size)) {
      throw Error(ErrorKind::kInvalidArgument, "frame params require 0 < hop <= win_length <= fft_size");
    }
  }
};

struct Spectrogram {
  Matrix frames;  // T x (fft_size/2 + 1) magnitudes
  FrameParams params;
  int sample_rate = kCanonicalSampleRate;

  double frame_rate() const { return static_cast<double>(sample_rate) / params.hop; }
};

struct MelConfig {
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
};

struct MelSpectrogram {
  Matrix frames;  // T x n_mels natural-log energies
  int n_mels = 0;
  double fmin = 0.0;
  double fmax = 0.0;
  double frame_rate = 0.0;
};

struct MfccConfig {
  int n_coeffs = 13;
  // When false the 0th (log-energy) coefficient is dropped and the retained
  // coefficients are 1..n_coeffs.
  bool include_c0 = false;
};

struct MfccSequence {
  Matrix frames;  // T x K
  double frame_rate = 0.0;

  std::size_t size() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

struct EnergyTrack {
  std::vector<double> values;
};

struct PitchConfig {
  double f_min = 50.0;
  double f_max = 600.0;
  double threshold = 0.15;
  int hop = 256;
};

// 0 marks an unvoiced frame; every other value lies in [f_min, f_max].
struct PitchTrack {
  std::vector<double> values;
  double frame_rate = 0.0;
};

struct FeatureConfig {
  FrameParams frame;
  MelConfig mel;
  MfccConfig mfcc;
  PitchConfig pitch;
};

namespace detail {

// Plan creation in FFTW is not thread-safe; execution with the new-array
// interface is.
inline std::mutex& FftwPlannerMutex() {
  static std::mutex mu;
  return mu;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(FftwPlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(FftwPlannerMutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }

  void MagnitudesInto(std::span<double> mags) {
    fftw_execute_dft_r2c(plan_, in_, out_);
    for (int k = 0; k <= n_ / 2; ++k) mags[static_cast<std::size_t>(k)] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  int n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

// Mirror index into [0, n) without repeating the edge sample.
inline std::size_t ReflectIndex(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

inline std::vector<double> PeriodicHann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

}  // namespace detail

inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Center frequencies of the n_mels triangular filters.
inline std::vector<double> MelCenterFrequencies(int n_mels, double fmin, double fmax) {
  std::vector<double> centers(static_cast<std::size_t>(n_mels));
  const double lo = HzToMel(fmin);
  const double step = (HzToMel(fmax) - lo) / (n_mels + 1);
  for (int m = 0; m < n_mels; ++m) centers[static_cast<std::size_t>(m)] = MelToHz(lo + step * (m + 1));
  return centers;
}

// n_mels x (fft_size/2 + 1) HTK-scale triangular filterbank, unnormalized
// (peak weight 1).
inline Matrix MelFilterbank(int sample_rate, int fft_size, const MelConfig& cfg) {
  if (cfg.n_mels < 1) throw Error(ErrorKind::kInvalidArgument, "n_mels must be >= 1");
  if (!(cfg.fmin >= 0.0 && cfg.fmin < cfg.fmax && cfg.fmax <= sample_rate / 2.0)) {
    throw Error(ErrorKind::kInvalidArgument, "mel band edges must satisfy 0 <= fmin < fmax <= sr/2");
  }
  const int bins = fft_size / 2 + 1;
  const double lo = HzToMel(cfg.fmin);
  const double step = (HzToMel(cfg.fmax) - lo) / (cfg.n_mels + 1);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges[static_cast<std::size_t>(i)] = MelToHz(lo + step * i);

  Matrix fb(static_cast<std::size_t>(cfg.n_mels), static_cast<std::size_t>(bins));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      fb(static_cast<std::size_t>(m), static_cast<std::size_t>(k)) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

// Orthonormal DCT-II basis, n x n, row k is the k-th basis vector.
inline Matrix DctMatrix(int n) {
  Matrix d(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) {
      d(static_cast<std::size_t>(k), static_cast<std::size_t>(i)) =
          scale * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  return d;
}

// Centered STFT: the signal is reflect-padded by win_length/2 on each side
// and each Hann-windowed frame sits in the middle of the FFT buffer.
inline Spectrogram StftMagnitude(const Waveform& w, const FrameParams& p = {}) {
  p.Validate();
  if (w.channels != 1) throw Error(ErrorKind::kInvalidArgument, "stft expects mono audio");
  if (w.samples.empty()) throw Error(ErrorKind::kEmptyInput, "stft of an empty waveform");

  const std::size_t len = w.samples.size();
  const long pad = p.win_length / 2;
  const std::size_t n_frames = 1 + (len + 2 * static_cast<std::size_t>(pad) - p.win_length) / p.hop;
  const auto bins = static_cast<std::size_t>(p.fft_size / 2 + 1);
  const std::vector<double> window = detail::PeriodicHann(p.win_length);
  const int offset = (p.fft_size - p.win_length) / 2;

  Spectrogram s;
  s.params = p;
  s.sample_rate = w.sample_rate;
  s.frames = Matrix(n_frames, bins);
  detail::RealFft fft(p.fft_size);
  double* buf = fft.input();
  for (std::size_t t = 0; t < n_frames; ++t) {
    std::fill(buf, buf + p.fft_size, 0.0);
    const long start = static_cast<long>(t) * p.hop - pad;
    for (int i = 0; i < p.win_length; ++i) {
      buf[offset + i] = w.samples[detail::ReflectIndex(start + i, len)] * window[static_cast<std::size_t>(i)];
    }
    fft.MagnitudesInto(s.frames.row(t));
  }
  return s;
}

inline MelSpectrogram MelFromSpectrogram(const Spectrogram& s, const MelConfig& cfg = {}) {
  if (!(cfg.log_floor > 0.0)) throw Error(ErrorKind::kInvalidArgument, "log floor must be positive");
  const Matrix fb = MelFilterbank(s.sample_rate, s.params.fft_size, cfg);
  MelSpectrogram mel;
  mel.n_mels = cfg.n_mels;
  mel.fmin = cfg.fmin;
  mel.fmax = cfg.fmax;
  mel.frame_rate = s.frame_rate();
  mel.frames = Matrix(s.frames.rows(), static_cast<std::size_t>(cfg.n_mels));
  for (std::size_t t = 0; t < s.frames.rows(); ++t) {
    const auto mag = s.frames.row(t);
    for (std::size_t m = 0; m < fb.rows(); ++m) {
      const auto weights = fb.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) acc += weights[k] * mag[k] * mag[k];
      mel.frames(t, m) = std::log(std::max(cfg.log_floor, acc));
    }
  }
  return mel;
}

inline MfccSequence Mfcc(const MelSpectrogram& mel, const MfccConfig& cfg = {}) {
  const int n = mel.n_mels;
  const int first = cfg.include_c0 ? 0 : 1;
  const int max_k = n - first;
  if (cfg.n_coeffs < 1 || cfg.n_coeffs > max_k) {
    throw Error(ErrorKind::kInvalidArgument, "MFCC count " + std::to_string(cfg.n_coeffs) + " outside [1, " +
                                                 std::to_string(max_k) + "] for " + std::to_string(n) +
                                                 " mel bands");
  }
  const Matrix dct = DctMatrix(n);
  MfccSequence out;
  out.frame_rate = mel.frame_rate;
  out.frames = Matrix(mel.frames.rows(), static_cast<std::size_t>(cfg.n_coeffs));
  for (std::size_t t = 0; t < mel.frames.rows(); ++t) {
    const auto x = mel.frames.row(t);
    for (int k = 0; k < cfg.n_coeffs; ++k) {
      const auto basis = dct.row(static_cast<std::size_t>(k + first));
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += basis[i] * x[i];
      out.frames(t, static_cast<std::size_t>(k)) = acc;
    }
  }
  return out;
}

// Per-frame L2 norm of the STFT magnitudes.
inline EnergyTrack Energy(const Spectrogram& s) {
  EnergyTrack e;
  e.values.resize(s.frames.rows());
  for (std::size_t t = 0; t < s.frames.rows(); ++t) {
    double acc = 0.0;
    for (double m : s.frames.row(t)) acc += m * m;
    e.values[t] = std::sqrt(acc);
  }
  return e;
}

// YIN: cumulative-mean-normalized difference function, absolute threshold,
// parabolic refinement. Frames are centered on t * hop, so the frame grid
// matches a centered STFT with win_length == fft_size.
inline PitchTrack TrackPitch(const Waveform& w, const PitchConfig& cfg = {}) {
  if (w.channels != 1) throw Error(ErrorKind::kInvalidArgument, "pitch tracking expects mono audio");
  if (!(cfg.f_min > 0.0 && cfg.f_min < cfg.f_max && cfg.f_max <= w.sample_rate / 2.0)) {
    throw Error(ErrorKind::kInvalidArgument, "pitch band must satisfy 0 < f_min < f_max <= sr/2");
  }
  if (cfg.hop <= 0) throw Error(ErrorKind::kInvalidArgument, "pitch hop must be positive");

  const double sr = w.sample_rate;
  const auto tau_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / cfg.f_max)));
  const auto tau_max = static_cast<std::size_t>(std::ceil(sr / cfg.f_min));
  const std::size_t window = tau_max + 2;
  const std::size_t span = window + tau_max + 1;
  const std::size_t len = w.samples.size();

  PitchTrack track;
  track.frame_rate = sr / cfg.hop;
  const std::size_t n_frames = 1 + len / static_cast<std::size_t>(cfg.hop);
  track.values.assign(n_frames, 0.0);

  std::vector<double> frame(span);
  std::vector<double> diff(tau_max + 2);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const long start = static_cast<long>(t) * cfg.hop - static_cast<long>(span / 2);
    for (std::size_t i = 0; i < span; ++i) {
      const long idx = start + static_cast<long>(i);
      frame[i] = (idx >= 0 && idx < static_cast<long>(len)) ? w.samples[static_cast<std::size_t>(idx)] : 0.0;
    }

    diff[0] = 1.0;
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      double d = 0.0;
      for (std::size_t j = 0; j < window; ++j) {
        const double delta = frame[j] - frame[j + tau];
        d += delta * delta;
      }
      running += d;
      diff[tau] = running > 1e-20 ? d * static_cast<double>(tau) / running : 1.0;
    }

    std::size_t tau = tau_min;
    bool found = false;
    for (; tau <= tau_max; ++tau) {
      if (diff[tau] < cfg.threshold) {
        while (tau + 1 <= tau_max && diff[tau + 1] < diff[tau]) ++tau;
        found = true;
        break;
      }
    }
    if (!found) continue;

    double refined = static_cast<double>(tau);
    const double a = diff[tau - 1];
    const double b = diff[tau];
    const double c = diff[tau + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) refined += 0.5 * (a - c) / denom;
    const double f0 = sr / refined;
    if (f0 >= cfg.f_min && f0 <= cfg.f_max) track.values[t] = f0;
  }
  return track;
}

struct PitchStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance, Hz^2
  std::size_t frames = 0;
};

// Pooled population mean/variance over all retained frames of all tracks.
inline PitchStats ComputePitchStats(std::span<const PitchTrack> tracks, bool include_unvoiced = false) {
  PitchStats stats;
  double sum = 0.0;
  for (const auto& track : tracks) {
    for (double v : track.values) {
      if (v == 0.0 && !include_unvoiced) continue;
      sum += v;
      ++stats.frames;
    }
  }
  if (stats.frames == 0) throw Error(ErrorKind::kEmptyInput, "no pitch frames retained");
  stats.mean = sum / static_cast<double>(stats.frames);
  double sq = 0.0;
  for (const auto& track : tracks) {
    for (double v : track.values) {
      if (v == 0.0 && !include_unvoiced) continue;
      sq += (v - stats.mean) * (v - stats.mean);
    }
  }
  stats.variance = sq / static_cast<double>(stats.frames);
  return stats;
}

// "m ± v" with two decimals.
inline std::string FormatPlusMinus(double center, double spread) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.2f \xC2\xB1 %.2f", center, spread);
  return buf;
}

inline MfccSequence ExtractMfcc(const Waveform& w, const FeatureConfig& cfg = {}) {
  return Mfcc(MelFromSpectrogram(StftMagnitude(w, cfg.frame), cfg.mel), cfg.mfcc);
}

}  // namespace dubeval

#endif  // DUBEVAL_DSP_HPP
