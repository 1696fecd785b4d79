#ifndef DUBEVAL_METRICS_HPP
#define DUBEVAL_METRICS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dubeval/audio.hpp"
#include "dubeval/dsp.hpp"
#include "dubeval/error.hpp"
#include "dubeval/matrix.hpp"
#include "json.hpp"

namespace dubeval {

// kRaw reports the raw mean Euclidean distance; kConventional multiplies by
// 10*sqrt(2)/ln(10) (the dB-style constant common in other MCD tools).
enum class McdScale { kRaw, kConventional };

inline double ScaleFactor(McdScale scale) {
  return scale == McdScale::kConventional ? 10.0 * std::numbers::sqrt2 / std::numbers::ln10 : 1.0;
}

inline double FrameDistance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "frame dimension mismatch: " + std::to_string(a.size()) +
                                                   " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Frame-by-frame mean distance; both sequences must already have equal length.
inline double Mcd(const Matrix& a, const Matrix& b, McdScale scale = McdScale::kRaw) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "coefficient count mismatch: " + std::to_string(a.cols()) +
                                                   " vs " + std::to_string(b.cols()));
  }
  if (a.rows() != b.rows()) {
    throw Error(ErrorKind::kLengthMismatch, "MCD needs equal frame counts: " + std::to_string(a.rows()) +
                                                " vs " + std::to_string(b.rows()));
  }
  if (a.rows() == 0) throw Error(ErrorKind::kEmptyInput, "MCD of empty sequences");
  double sum = 0.0;
  for (std::size_t t = 0; t < a.rows(); ++t) sum += FrameDistance(a.row(t), b.row(t));
  return ScaleFactor(scale) * sum / static_cast<double>(a.rows());
}

// Indices are 0-based: the path runs from (0, 0) to (m-1, n-1).
struct AlignmentResult {
  double cost = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;
  std::size_t m = 0;
  std::size_t n = 0;

  std::size_t path_len() const { return path.size(); }
};

// Full-matrix DTW with steps (1,1), (1,0), (0,1) and the frame distance as
// local cost. Backtracking prefers the diagonal predecessor, then the
// vertical one (i-1, j), then the horizontal one (i, j-1).
inline AlignmentResult DtwAlign(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw Error(ErrorKind::kEmptyInput, "DTW of an empty sequence");
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "coefficient count mismatch: " + std::to_string(a.cols()) +
                                                   " vs " + std::to_string(b.cols()));
  }
  const std::size_t m = a.rows();
  const std::size_t n = b.rows();
  Matrix gamma(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = FrameDistance(a.row(i), b.row(j));
      if (i == 0 && j == 0) {
        gamma(i, j) = d;
      } else if (i == 0) {
        gamma(i, j) = d + gamma(i, j - 1);
      } else if (j == 0) {
        gamma(i, j) = d + gamma(i - 1, j);
      } else {
        gamma(i, j) = d + std::min({gamma(i - 1, j - 1), gamma(i - 1, j), gamma(i, j - 1)});
      }
    }
  }

  AlignmentResult result;
  result.m = m;
  result.n = n;
  result.cost = gamma(m - 1, n - 1);
  std::size_t i = m - 1;
  std::size_t j = n - 1;
  result.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = gamma(i - 1, j - 1);
      const double up = gamma(i - 1, j);
      const double left = gamma(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    result.path.emplace_back(i, j);
  }
  std::reverse(result.path.begin(), result.path.end());
  return result;
}

inline double McdDtw(const AlignmentResult& a) {
  return a.path.empty() ? 0.0 : a.cost / static_cast<double>(a.path_len());
}

// Length ratio of the longer to the shorter sequence.
inline double SpeechLengthCoefficient(std::size_t m, std::size_t n) {
  if (std::min(m, n) == 0) throw Error(ErrorKind::kEmptyInput, "speech length coefficient of an empty sequence");
  return static_cast<double>(std::max(m, n)) / static_cast<double>(std::min(m, n));
}

struct WeightedScore {
  double score = 0.0;
  double eta = 1.0;
};

inline WeightedScore McdDtwSl(const AlignmentResult& a) {
  const double eta = SpeechLengthCoefficient(a.m, a.n);
  return {eta / static_cast<double>(a.path_len()) * a.cost, eta};
}

enum class PadMode { kZeroPad, kStrict };

struct EvalConfig {
  FeatureConfig features;
  MonoSelect mono;
  int sample_rate = kCanonicalSampleRate;
  McdScale scale = McdScale::kRaw;
  PadMode pad = PadMode::kZeroPad;
  int jobs = 1;
};

struct MetricRow {
  std::string id;
  double mcd = 0.0;
  double mcd_dtw = 0.0;
  double mcd_dtw_sl = 0.0;
  double eta = 1.0;
  std::size_t m = 0;  // generated frames
  std::size_t n = 0;  // reference frames
  std::size_t path_len = 0;
  std::optional<std::string> error;
};

// Both waveforms must already be mono at the same rate. The plain MCD runs on
// zero-padded audio (or fails in strict mode); the DTW metrics run on the
// unpadded features.
inline MetricRow EvaluateWaveforms(const Waveform& gen, const Waveform& ref, const EvalConfig& cfg) {
  if (gen.sample_rate != ref.sample_rate) {
    throw Error(ErrorKind::kInvalidArgument, "generated and reference sample rates differ");
  }
  MetricRow row;
  const MfccSequence gen_feat = ExtractMfcc(gen, cfg.features);
  const MfccSequence ref_feat = ExtractMfcc(ref, cfg.features);

  const std::size_t longest = std::max(gen.frames(), ref.frames());
  if (gen.frames() == ref.frames()) {
    row.mcd = Mcd(gen_feat.frames, ref_feat.frames, cfg.scale);
  } else if (cfg.pad == PadMode::kStrict) {
    throw Error(ErrorKind::kLengthMismatch, "strict mode: waveform lengths differ (" +
                                                std::to_string(gen.frames()) + " vs " +
                                                std::to_string(ref.frames()) + " samples)");
  } else {
    const Waveform& shorter = gen.frames() < ref.frames() ? gen : ref;
    const MfccSequence padded = ExtractMfcc(PadToLength(shorter, longest), cfg.features);
    const MfccSequence& longer_feat = gen.frames() < ref.frames() ? ref_feat : gen_feat;
    row.mcd = Mcd(padded.frames, longer_feat.frames, cfg.scale);
  }

  const AlignmentResult align = DtwAlign(gen_feat.frames, ref_feat.frames);
  const double factor = ScaleFactor(cfg.scale);
  row.mcd_dtw = factor * McdDtw(align);
  const WeightedScore weighted = McdDtwSl(align);
  row.mcd_dtw_sl = factor * weighted.score;
  row.eta = weighted.eta;
  row.m = align.m;
  row.n = align.n;
  row.path_len = align.path_len();
  return row;
}

inline MetricRow EvaluatePair(const std::filesystem::path& generated, const std::filesystem::path& reference,
                              const EvalConfig& cfg) {
  const Waveform gen = LoadMono(generated, cfg.mono, cfg.sample_rate);
  const Waveform ref = LoadMono(reference, cfg.mono, cfg.sample_rate);
  return EvaluateWaveforms(gen, ref, cfg);
}

struct PairEntry {
  std::string id;
  std::filesystem::path generated;
  std::filesystem::path reference;
};

// JSON Lines rows {id, generated, reference}; relative paths resolve against
// the manifest's directory.
inline std::vector<PairEntry> LoadPairManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kFileNotFound, path.string() + ": cannot open manifest");
  const std::filesystem::path base = path.parent_path();
  std::vector<PairEntry> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::kParse, where + ": " + e.what());
    }
    if (!row.is_object()) throw Error(ErrorKind::kParse, where + ": row is not an object");
    PairEntry entry;
    for (const char* key : {"id", "generated", "reference"}) {
      if (!row.contains(key) || !row[key].is_string()) {
        throw Error(ErrorKind::kValidation, where + ": missing string field '" + key + "'");
      }
    }
    entry.id = row["id"].get<std::string>();
    entry.generated = row["generated"].get<std::string>();
    entry.reference = row["reference"].get<std::string>();
    if (entry.generated.is_relative()) entry.generated = base / entry.generated;
    if (entry.reference.is_relative()) entry.reference = base / entry.reference;
    pairs.push_back(std::move(entry));
  }
  return pairs;
}

struct CorpusReport {
  std::vector<MetricRow> rows;  // manifest order, failed rows carry `error`
  double mean_mcd = 0.0;
  double mean_mcd_dtw = 0.0;
  double mean_mcd_dtw_sl = 0.0;
  double mean_eta = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
};

inline CorpusReport EvaluateCorpus(std::span<const PairEntry> pairs, const EvalConfig& cfg) {
  CorpusReport report;
  report.rows.resize(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      MetricRow row;
      try {
        row = EvaluatePair(pairs[i].generated, pairs[i].reference, cfg);
      } catch (const std::exception& e) {
        row = MetricRow{};
        row.error = e.what();
      }
      row.id = pairs[i].id;
      report.rows[i] = std::move(row);
    }
  };
  const auto jobs = static_cast<std::size_t>(std::max(1, cfg.jobs));
  if (jobs == 1 || pairs.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(jobs, pairs.size()); ++t) pool.emplace_back(worker);
  }

  for (const auto& row : report.rows) {
    if (row.error) {
      ++report.n_failed;
      continue;
    }
    ++report.n_ok;
    report.mean_mcd += row.mcd;
    report.mean_mcd_dtw += row.mcd_dtw;
    report.mean_mcd_dtw_sl += row.mcd_dtw_sl;
    report.mean_eta += row.eta;
  }
  if (report.n_ok > 0) {
    const auto n = static_cast<double>(report.n_ok);
    report.mean_mcd /= n;
    report.mean_mcd_dtw /= n;
    report.mean_mcd_dtw_sl /= n;
    report.mean_eta /= n;
  }
  return report;
}

inline nlohmann::json ToJson(const MetricRow& row) {
  nlohmann::json j;
  j["id"] = row.id;
  if (row.error) {
    j["error"] = *row.error;
    return j;
  }
  j["mcd"] = row.mcd;
  j["mcd_dtw"] = row.mcd_dtw;
  j["mcd_dtw_sl"] = row.mcd_dtw_sl;
  j["eta"] = row.eta;
  j["M"] = row.m;
  j["N"] = row.n;
  j["R"] = row.path_len;
  return j;
}

inline nlohmann::json ToJson(const CorpusReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) rows.push_back(ToJson(row));
  nlohmann::json aggregate;
  aggregate["mcd"] = report.mean_mcd;
  aggregate["mcd_dtw"] = report.mean_mcd_dtw;
  aggregate["mcd_dtw_sl"] = report.mean_mcd_dtw_sl;
  aggregate["eta"] = report.mean_eta;
  aggregate["n_ok"] = report.n_ok;
  aggregate["n_failed"] = report.n_failed;
  return {{"rows", rows}, {"aggregate", aggregate}};
}

}  // namespace dubeval

#endif  // DUBEVAL_METRICS_HPP
