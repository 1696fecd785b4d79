#ifndef DUBEVAL_CLI_HPP
#define DUBEVAL_CLI_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dubeval/audio.hpp"
#include "dubeval/corpus.hpp"
#include "dubeval/dsp.hpp"
#include "dubeval/error.hpp"
#include "dubeval/eval.hpp"
#include "dubeval/metrics.hpp"
#include "json.hpp"

namespace dubeval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Raised for flag values that fail validation before any work starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureFlags {
  int sample_rate = kCanonicalSampleRate;
  std::string mono = "average";
  int channel = 0;
  int fft_size = 1024;
  int hop = 256;
  int win_length = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
  int n_mfcc = 13;
  bool include_c0 = false;
  double pitch_fmin = 50.0;
  double pitch_fmax = 600.0;
  double pitch_threshold = 0.15;

  void Register(CLI::App* app) {
    app->add_option("--rate", sample_rate, "Working sample rate in Hz (inputs are resampled)");
    app->add_option("--mono", mono, "Channel reduction: average, center-channel or channel")
        ->check(CLI::IsMember({"average", "center-channel", "channel"}));
    app->add_option("--channel", channel, "Channel index used with --mono channel");
    app->add_option("--fft-size", fft_size, "FFT size in samples");
    app->add_option("--hop", hop, "Hop size in samples");
    app->add_option("--win-length", win_length, "Hann window length in samples");
    app->add_option("--n-mels", n_mels, "Number of mel bands");
    app->add_option("--fmin", fmin, "Lowest mel filter edge in Hz");
    app->add_option("--fmax", fmax, "Highest mel filter edge in Hz");
    app->add_option("--log-floor", log_floor, "Floor applied before the log of mel energies");
    app->add_option("--n-mfcc", n_mfcc, "Number of cepstral coefficients K");
    app->add_flag("--include-c0", include_c0, "Keep the 0th cepstral coefficient");
    app->add_option("--pitch-fmin", pitch_fmin, "Lowest pitch searched, Hz");
    app->add_option("--pitch-fmax", pitch_fmax, "Highest pitch searched, Hz");
    app->add_option("--pitch-threshold", pitch_threshold, "YIN voicing threshold");
  }

  FeatureConfig Features() const {
    FeatureConfig cfg;
    cfg.frame = {fft_size, hop, win_length};
    cfg.mel = {n_mels, fmin, fmax, log_floor};
    cfg.mfcc = {n_mfcc, include_c0};
    cfg.pitch = {pitch_fmin, pitch_fmax, pitch_threshold, hop};
    return cfg;
  }

  MonoSelect Mono() const {
    if (mono == "center-channel") return {MonoMode::kCenterChannel, 0};
    if (mono == "channel") return {MonoMode::kChannel, channel};
    return {MonoMode::kAverage, 0};
  }

  void Validate() const {
    if (sample_rate <= 0) throw UsageError("--rate must be positive");
    if (!(hop > 0 && hop <= win_length && win_length <= fft_size)) {
      throw UsageError("frame parameters require 0 < --hop <= --win-length <= --fft-size");
    }
    if (n_mels < 1) throw UsageError("--n-mels must be >= 1");
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
      throw UsageError("mel band requires 0 <= --fmin < --fmax <= rate/2");
    }
    if (!(log_floor > 0.0)) throw UsageError("--log-floor must be positive");
    const int max_k = include_c0 ? n_mels : n_mels - 1;
    if (n_mfcc < 1 || n_mfcc > max_k) {
      throw UsageError("--n-mfcc must lie in [1, " + std::to_string(max_k) + "]");
    }
    if (!(pitch_fmin > 0.0 && pitch_fmin < pitch_fmax && pitch_fmax <= sample_rate / 2.0)) {
      throw UsageError("pitch band requires 0 < --pitch-fmin < --pitch-fmax <= rate/2");
    }
    if (mono == "channel" && channel < 0) throw UsageError("--channel must be >= 0");
  }

  nlohmann::json ToJson() const {
    return {{"sample_rate", sample_rate}, {"mono", mono},         {"channel", channel},
            {"fft_size", fft_size},       {"hop", hop},           {"win_length", win_length},
            {"window", "hann"},           {"n_mels", n_mels},     {"fmin", fmin},
            {"fmax", fmax},               {"log_floor", log_floor}, {"n_mfcc", n_mfcc},
            {"include_c0", include_c0},   {"pitch_fmin", pitch_fmin}, {"pitch_fmax", pitch_fmax},
            {"pitch_threshold", pitch_threshold}};
  }
};

struct MetricFlags {
  std::string scale = "raw";
  bool strict = false;

  void Register(CLI::App* app) {
    app->add_option("--scale", scale, "Distance scale: raw or conventional (10*sqrt(2)/ln 10)")
        ->check(CLI::IsMember({"raw", "conventional"}));
    app->add_flag("--strict", strict, "Fail on unequal lengths instead of zero-padding for plain MCD");
  }

  void Apply(EvalConfig& cfg) const {
    cfg.scale = scale == "conventional" ? McdScale::kConventional : McdScale::kRaw;
    cfg.pad = strict ? PadMode::kStrict : PadMode::kZeroPad;
  }
};

namespace detail {

inline std::string Fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline nlohmann::json Matrix2Json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline std::vector<double> ParseRatios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw UsageError("bad ratio '" + item + "'");
    } catch (const std::invalid_argument&) {
      throw UsageError("bad ratio '" + item + "'");
    } catch (const std::out_of_range&) {
      throw UsageError("bad ratio '" + item + "'");
    }
  }
  if (out.size() != 3) throw UsageError("--ratios needs exactly three comma-separated values");
  return out;
}

}  // namespace detail

// Parses argv, dispatches, and writes one JSON document (or a --pretty table)
// to `out` or to the --out file. Errors go to `err` as a JSON object.
inline int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech synthesis evaluation and corpus toolkit", "dubeval"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string out_path;
  bool pretty = false;
  app.add_option("--out", out_path, "Write the result here instead of stdout");
  app.add_flag("--pretty", pretty, "Human-readable output instead of JSON");

  FeatureFlags feat;
  MetricFlags metric;

  // features
  std::string features_input;
  auto* features = app.add_subcommand("features", "Extract mel, MFCC, pitch and energy for one WAV file");
  features->add_option("input", features_input, "Input WAV")->required();
  feat.Register(features);

  // mcd
  std::string mcd_gen, mcd_ref;
  auto* mcd = app.add_subcommand("mcd", "MCD, MCD-DTW and MCD-DTW-SL for one generated/reference pair");
  mcd->add_option("generated", mcd_gen, "Generated WAV")->required();
  mcd->add_option("reference", mcd_ref, "Reference WAV")->required();
  feat.Register(mcd);
  metric.Register(mcd);

  // batch
  std::string batch_manifest;
  int jobs = 1;
  auto* batch = app.add_subcommand("batch", "Evaluate every pair of a JSONL manifest {id, generated, reference}");
  batch->add_option("manifest", batch_manifest, "Pair manifest (JSON Lines)")->required();
  batch->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  feat.Register(batch);
  metric.Register(batch);

  // accuracy
  std::string train_path, test_path, label_key = "speaker";
  auto* accuracy = app.add_subcommand("accuracy", "Centroid/cosine classification accuracy of embeddings");
  accuracy->add_option("--train", train_path, "Embeddings used to build centroids (JSONL)")->required();
  accuracy->add_option("--test", test_path, "Embeddings to classify (JSONL)")->required();
  accuracy->add_option("--label-key", label_key, "Row field holding the class label")
      ->check(CLI::IsMember({"speaker", "emotion", "label"}));

  // mos
  std::string ratings_path;
  auto* mos = app.add_subcommand("mos", "Aggregate ACR ratings into mean and 95% confidence half-width");
  mos->add_option("ratings", ratings_path, "Ratings file (single-column CSV or JSONL {rater, item, score})")
      ->required();

  // srt parse | plan
  auto* srt = app.add_subcommand("srt", "SubRip subtitle tools");
  srt->require_subcommand(1);
  std::string srt_input;
  auto* srt_parse = srt->add_subcommand("parse", "Parse an SRT file into JSON cues");
  srt_parse->add_option("input", srt_input, "SRT file")->required();
  std::string plan_input, movie_path, out_dir = "clips", movie_id, audio_mode = "center-channel";
  int plan_rate = kCanonicalSampleRate;
  bool with_commands = false;
  auto* srt_plan = srt->add_subcommand("plan", "Plan one audio/video clip per subtitle cue");
  srt_plan->add_option("input", plan_input, "SRT file")->required();
  srt_plan->add_option("--movie", movie_path, "Source movie file")->required();
  srt_plan->add_option("--out-dir", out_dir, "Directory the planned clips are written to");
  srt_plan->add_option("--movie-id", movie_id, "Movie id used in clip names (default: movie file stem)");
  srt_plan->add_option("--audio-mode", audio_mode, "center-channel or downmix")
      ->check(CLI::IsMember({"center-channel", "downmix"}));
  srt_plan->add_option("--rate", plan_rate, "Sample rate of extracted audio")->check(CLI::PositiveNumber);
  srt_plan->add_flag("--commands", with_commands, "Include FFmpeg argument vectors per job");

  // split
  std::string split_manifest, ratios_text = "0.6,0.1,0.3";
  std::optional<std::uint64_t> seed;
  bool stratify = false;
  auto* split = app.add_subcommand("split", "Seeded train/val/test split of a clip manifest");
  split->add_option("manifest", split_manifest, "Clip manifest (JSON Lines)")->required();
  split->add_option("--ratios", ratios_text, "train,val,test ratios");
  split->add_option("--seed", seed, "Shuffle seed (required)")->required();
  split->add_flag("--stratify-speaker", stratify, "Split each speaker's clips separately");

  // stats
  std::string stats_manifest;
  bool with_pitch = false, include_unvoiced = false;
  std::size_t top_words = 30;
  auto* stats = app.add_subcommand("stats", "Corpus statistics of a clip manifest");
  stats->add_option("manifest", stats_manifest, "Clip manifest (JSON Lines)")->required();
  stats->add_flag("--pitch", with_pitch, "Track pitch of each record's audio_path and report mean/variance");
  stats->add_flag("--include-unvoiced", include_unvoiced, "Count 0 Hz frames in pitch statistics");
  stats->add_option("--top-words", top_words, "Number of ranked words to report");
  feat.Register(stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    nlohmann::json j = {{"error", {{"kind", "usage"}, {"message", e.what()}}}};
    err << j.dump() << "\n";
    return kExitUsage;
  }

  const auto emit = [&](const nlohmann::json& doc, const std::string& text) {
    const std::string body = pretty ? text : doc.dump(2) + "\n";
    if (out_path.empty()) {
      out << body;
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) throw Error(ErrorKind::kIo, out_path + ": cannot open for writing");
      f << body;
      if (!f) throw Error(ErrorKind::kIo, out_path + ": write failed");
    }
  };

  try {
    if (*features) {
      feat.Validate();
      const FeatureConfig cfg = feat.Features();
      const Waveform w = LoadMono(features_input, feat.Mono(), feat.sample_rate);
      const Spectrogram spec = StftMagnitude(w, cfg.frame);
      const MelSpectrogram mel = MelFromSpectrogram(spec, cfg.mel);
      const MfccSequence mfcc_seq = Mfcc(mel, cfg.mfcc);
      const PitchTrack pitch = TrackPitch(w, cfg.pitch);
      const EnergyTrack energy = Energy(spec);
      nlohmann::json doc = {{"config", feat.ToJson()},
                            {"input", features_input},
                            {"frames", spec.frames.rows()},
                            {"frame_rate", spec.frame_rate()},
                            {"mel", detail::Matrix2Json(mel.frames)},
                            {"mfcc", detail::Matrix2Json(mfcc_seq.frames)},
                            {"pitch", pitch.values},
                            {"energy", energy.values}};
      std::ostringstream text;
      text << features_input << ": " << spec.frames.rows() << " frames at " << spec.frame_rate() << " fps, "
           << cfg.mel.n_mels << " mel bands, " << cfg.mfcc.n_coeffs << " MFCCs\n";
      emit(doc, text.str());
    } else if (*mcd || *batch) {
      feat.Validate();
      EvalConfig cfg;
      cfg.features = feat.Features();
      cfg.mono = feat.Mono();
      cfg.sample_rate = feat.sample_rate;
      cfg.jobs = jobs;
      metric.Apply(cfg);
      nlohmann::json config = feat.ToJson();
      config["scale"] = metric.scale;
      config["strict"] = metric.strict;
      if (*mcd) {
        MetricRow row = EvaluatePair(mcd_gen, mcd_ref, cfg);
        row.id = std::filesystem::path(mcd_gen).stem().string() + "|" +
                 std::filesystem::path(mcd_ref).stem().string();
        nlohmann::json doc = ToJson(row);
        doc["generated"] = mcd_gen;
        doc["reference"] = mcd_ref;
        doc["config"] = config;
        std::ostringstream text;
        text << "MCD " << detail::Fixed2(row.mcd) << "  MCD-DTW " << detail::Fixed2(row.mcd_dtw) << "  MCD-DTW-SL "
             << detail::Fixed2(row.mcd_dtw_sl) << "  eta " << detail::Fixed2(row.eta) << "  M " << row.m << "  N "
             << row.n << "\n";
        emit(doc, text.str());
      } else {
        config["jobs"] = jobs;
        const std::vector<PairEntry> pairs = LoadPairManifest(batch_manifest);
        const CorpusReport report = EvaluateCorpus(pairs, cfg);
        nlohmann::json doc = ToJson(report);
        doc["config"] = config;
        std::ostringstream text;
        text << "id\tMCD\tMCD-DTW\tMCD-DTW-SL\teta\n";
        for (const auto& row : report.rows) {
          if (row.error) {
            text << row.id << "\terror: " << *row.error << "\n";
          } else {
            text << row.id << "\t" << detail::Fixed2(row.mcd) << "\t" << detail::Fixed2(row.mcd_dtw) << "\t"
                 << detail::Fixed2(row.mcd_dtw_sl) << "\t" << detail::Fixed2(row.eta) << "\n";
          }
        }
        text << "mean\t" << detail::Fixed2(report.mean_mcd) << "\t" << detail::Fixed2(report.mean_mcd_dtw) << "\t"
             << detail::Fixed2(report.mean_mcd_dtw_sl) << "\t" << detail::Fixed2(report.mean_eta) << "\n";
        emit(doc, text.str());
        if (report.n_ok == 0 && report.n_failed > 0) return kExitRuntime;
      }
    } else if (*accuracy) {
      const EmbeddingSet train = LoadEmbeddings(train_path, label_key);
      const EmbeddingSet test = LoadEmbeddings(test_path, label_key);
      const CentroidModel model = BuildCentroids(train);
      const double acc = Accuracy(test, model);
      nlohmann::json doc = {{"label_key", label_key},
                            {"n_train", train.size()},
                            {"n_test", test.size()},
                            {"accuracy_percent", acc},
                            {"config", {{"train", train_path}, {"test", test_path}, {"label_key", label_key}}}};
      emit(doc, label_key + " accuracy: " + detail::Fixed2(acc) + "% (" + std::to_string(test.size()) +
                    " test, " + std::to_string(train.size()) + " train)\n");
    } else if (*mos) {
      const std::vector<double> ratings = LoadRatings(ratings_path);
      const MosSummary s = AggregateMos(ratings);
      nlohmann::json doc = {{"mean", s.mean},
                            {"std", s.std},
                            {"half_width", s.half_width},
                            {"n", s.n},
                            {"rendered", s.Render()},
                            {"config", {{"ratings", ratings_path}, {"confidence", 0.95}}}};
      emit(doc, "MOS " + s.Render() + " (n = " + std::to_string(s.n) + ")\n");
    } else if (*srt_parse) {
      const auto entries = ReadSrtFile(srt_input);
      nlohmann::json cues = nlohmann::json::array();
      for (const auto& e : entries) cues.push_back(ToJson(e));
      emit({{"input", srt_input}, {"entries", cues}}, SerializeSrt(entries));
    } else if (*srt_plan) {
      const auto entries = ReadSrtFile(plan_input);
      ClipPlanOptions opts;
      opts.audio_mode = audio_mode == "downmix" ? AudioExtraction::kDownmix : AudioExtraction::kCenterChannel;
      opts.movie_id = movie_id;
      opts.sample_rate = plan_rate;
      const ClipPlan plan = BuildClipPlan(entries, movie_path, out_dir, opts);
      nlohmann::json doc = ToJson(plan, with_commands);
      doc["config"] = {{"input", plan_input}, {"movie", movie_path}, {"out_dir", out_dir},
                       {"movie_id", movie_id}, {"audio_mode", audio_mode}, {"rate", plan_rate},
                       {"commands", with_commands}};
      std::ostringstream text;
      for (const auto& job : plan.jobs) {
        text << job.index << "\t" << FormatSeconds(job.start_s) << "\t" << FormatSeconds(job.end_s) << "\t"
             << job.out_audio << "\t" << job.out_video << "\n";
      }
      emit(doc, text.str());
    } else if (*split) {
      const std::vector<double> r = detail::ParseRatios(ratios_text);
      SplitOptions opts;
      opts.ratios = {r[0], r[1], r[2]};
      opts.seed = *seed;
      opts.stratify_by_speaker = stratify;
      for (double v : r) {
        if (!(v > 0.0)) throw UsageError("--ratios must be positive");
      }
      if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw UsageError("--ratios must sum to 1");
      const auto records = LoadManifest(split_manifest);
      const SplitAssignment a = SplitDataset(records, opts);
      nlohmann::json doc = {
          {"config", {{"manifest", split_manifest}, {"ratios", r}, {"seed", *seed}, {"stratify_speaker", stratify}}},
          {"sizes", {{"train", a.train.size()}, {"val", a.val.size()}, {"test", a.test.size()}}},
          {"train", a.train},
          {"val", a.val},
          {"test", a.test}};
      emit(doc, "train " + std::to_string(a.train.size()) + "  val " + std::to_string(a.val.size()) + "  test " +
                    std::to_string(a.test.size()) + "\n");
    } else if (*stats) {
      if (with_pitch) feat.Validate();
      const auto records = LoadManifest(stats_manifest);
      std::vector<PitchTrack> tracks;
      if (with_pitch) {
        const std::filesystem::path base = std::filesystem::path(stats_manifest).parent_path();
        const FeatureConfig cfg = feat.Features();
        for (const auto& rec : records) {
          if (!rec.audio_path) throw Error(ErrorKind::kValidation, ClipId(rec) + ": --pitch needs audio_path");
          std::filesystem::path p = *rec.audio_path;
          if (p.is_relative()) p = base / p;
          tracks.push_back(TrackPitch(LoadMono(p, feat.Mono(), feat.sample_rate), cfg.pitch));
        }
      }
      const CorpusStats s = ComputeCorpusStats(records, tracks, include_unvoiced);
      nlohmann::json doc = ToJson(s, top_words);
      nlohmann::json config = {{"manifest", stats_manifest}, {"pitch", with_pitch},
                               {"include_unvoiced", include_unvoiced}, {"top_words", top_words}};
      if (with_pitch) config["features"] = feat.ToJson();
      doc["config"] = config;
      std::ostringstream text;
      text << "movies " << s.n_movies << "  clips " << s.n_clips << "  speakers " << s.n_speakers << "  avg words "
           << detail::Fixed2(s.avg_subtitle_words) << "  avg duration " << detail::Fixed2(s.avg_duration_s) << " s\n";
      for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
        text << kEmotionNames[i] << "\t" << s.emotion_counts[i] << "\n";
      }
      if (s.pitch) text << "pitch " << FormatPlusMinus(s.pitch->mean, s.pitch->variance) << " Hz\n";
      emit(doc, text.str());
    }
  } catch (const UsageError& e) {
    err << nlohmann::json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << nlohmann::json{{"error", {{"kind", std::string(ErrorKindName(e.kind()))}, {"message", e.what()}}}}.dump()
        << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dubeval::cli

#endif  // DUBEVAL_CLI_HPP
