#ifndef DUBEVAL_CORPUS_HPP
#define DUBEVAL_CORPUS_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dubeval/audio.hpp"
#include "dubeval/dsp.hpp"
#include "dubeval/error.hpp"
#include "json.hpp"

namespace dubeval {

// ---------------------------------------------------------------------------
// SubRip subtitles
// ---------------------------------------------------------------------------

struct SrtEntry {
  int index = 1;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string text;

  bool operator==(const SrtEntry&) const = default;
};

namespace detail {

inline std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool AllDigits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// HH:MM:SS,mmm (a '.' before the milliseconds is tolerated).
inline std::optional<std::int64_t> ParseTimestamp(std::string_view s) {
  const auto c1 = s.find(':');
  if (c1 == std::string_view::npos) return std::nullopt;
  const auto c2 = s.find(':', c1 + 1);
  if (c2 == std::string_view::npos) return std::nullopt;
  const auto sep = s.find_first_of(",.", c2 + 1);
  if (sep == std::string_view::npos) return std::nullopt;
  const std::string_view hh = s.substr(0, c1);
  const std::string_view mm = s.substr(c1 + 1, c2 - c1 - 1);
  const std::string_view ss = s.substr(c2 + 1, sep - c2 - 1);
  const std::string_view ms = s.substr(sep + 1);
  if (!AllDigits(hh) || mm.size() != 2 || !AllDigits(mm) || ss.size() != 2 || !AllDigits(ss) ||
      ms.size() != 3 || !AllDigits(ms) || hh.size() > 6) {
    return std::nullopt;
  }
  const auto num = [](std::string_view v) { return std::stoll(std::string(v)); };
  const std::int64_t minutes = num(mm);
  const std::int64_t seconds = num(ss);
  if (minutes > 59 || seconds > 59) return std::nullopt;
  return ((num(hh) * 60 + minutes) * 60 + seconds) * 1000 + num(ms);
}

}  // namespace detail

inline std::string FormatSrtTimestamp(std::int64_t ms) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld,%03lld", static_cast<long long>(ms / 3600000),
                static_cast<long long>(ms / 60000 % 60), static_cast<long long>(ms / 1000 % 60),
                static_cast<long long>(ms % 1000));
  return buf;
}

// Cues are separated by blank lines; multi-line cue text is joined with
// single spaces. A UTF-8 BOM and CRLF line endings are accepted.
inline std::vector<SrtEntry> ParseSrt(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }

  std::vector<SrtEntry> entries;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (detail::Trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    const std::size_t index_line = i + 1;
    const std::string_view index_text = detail::Trim(lines[i]);
    if (!detail::AllDigits(index_text) || index_text.size() > 9) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(index_line) + ": non-numeric cue index '" +
                                         std::string(index_text) + "'");
    }
    SrtEntry entry;
    entry.index = std::stoi(std::string(index_text));
    if (entry.index < 1) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(index_line) + ": cue index must be >= 1");
    }
    const std::string where = "entry " + std::to_string(entry.index);
    ++i;
    if (i >= lines.size() || detail::Trim(lines[i]).empty()) {
      throw Error(ErrorKind::kParse, where + " (line " + std::to_string(i + 1) + "): missing timestamp line");
    }
    const std::string_view timing = detail::Trim(lines[i]);
    const auto arrow = timing.find("-->");
    std::optional<std::int64_t> start;
    std::optional<std::int64_t> end;
    if (arrow != std::string_view::npos) {
      start = detail::ParseTimestamp(detail::Trim(timing.substr(0, arrow)));
      // Anything after the end timestamp (positioning hints) is ignored.
      std::string_view rest = detail::Trim(timing.substr(arrow + 3));
      rest = rest.substr(0, rest.find_first_of(" \t"));
      end = detail::ParseTimestamp(rest);
    }
    if (!start || !end) {
      throw Error(ErrorKind::kParse, where + " (line " + std::to_string(i + 1) + "): malformed timestamp '" +
                                         std::string(timing) + "'");
    }
    if (*start >= *end) {
      throw Error(ErrorKind::kParse, where + " (line " + std::to_string(i + 1) +
                                         "): start time is not before end time");
    }
    entry.start_ms = *start;
    entry.end_ms = *end;
    ++i;
    while (i < lines.size() && !detail::Trim(lines[i]).empty()) {
      if (!entry.text.empty()) entry.text += ' ';
      entry.text += detail::Trim(lines[i]);
      ++i;
    }
    if (entry.text.empty()) throw Error(ErrorKind::kParse, where + ": empty cue text");
    entries.push_back(std::move(entry));
  }
  return entries;
}

inline std::string SerializeSrt(std::span<const SrtEntry> entries) {
  std::string out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0) out += '\n';
    const SrtEntry& e = entries[i];
    out += std::to_string(e.index);
    out += '\n';
    out += FormatSrtTimestamp(e.start_ms);
    out += " --> ";
    out += FormatSrtTimestamp(e.end_ms);
    out += '\n';
    out += e.text;
    out += '\n';
  }
  return out;
}

inline std::vector<SrtEntry> ReadSrtFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kFileNotFound, path.string() + ": cannot open subtitle file");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return ParseSrt(buf.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

inline nlohmann::json ToJson(const SrtEntry& e) {
  return {{"index", e.index}, {"start_ms", e.start_ms}, {"end_ms", e.end_ms}, {"text", e.text}};
}

// ---------------------------------------------------------------------------
// Clip records and manifests
// ---------------------------------------------------------------------------

enum class Emotion { kAngry, kDisgust, kFear, kHappy, kNeutral, kSad, kSurprise, kOthers };

inline constexpr std::array<std::string_view, 8> kEmotionNames = {
    "angry", "disgust", "fear", "happy", "neutral", "sad", "surprise", "others"};

inline std::string_view EmotionName(Emotion e) { return kEmotionNames[static_cast<std::size_t>(e)]; }

inline std::optional<Emotion> ParseEmotion(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == name) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

struct ClipRecord {
  std::string movie_id;
  int clip_index = 1;
  std::string speaker;
  Emotion emotion = Emotion::kNeutral;
  std::string text;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::optional<std::string> audio_path;
  std::optional<std::string> video_path;

  std::int64_t duration_ms() const { return end_ms - start_ms; }
  bool operator==(const ClipRecord&) const = default;
};

// "{movie_id}_{index:05}", also the stem of the planned clip files.
inline std::string ClipId(std::string_view movie_id, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_%05d", index);
  return std::string(movie_id) + buf;
}

inline std::string ClipId(const ClipRecord& r) { return ClipId(r.movie_id, r.clip_index); }

inline nlohmann::json ToJson(const ClipRecord& r) {
  nlohmann::json j = {{"movie_id", r.movie_id},  {"clip_index", r.clip_index},
                      {"speaker", r.speaker},    {"emotion", std::string(EmotionName(r.emotion))},
                      {"text", r.text},          {"start_ms", r.start_ms},
                      {"end_ms", r.end_ms}};
  if (r.audio_path) j["audio_path"] = *r.audio_path;
  if (r.video_path) j["video_path"] = *r.video_path;
  return j;
}

inline ClipRecord ClipRecordFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kParse, "row is not an object");
  const auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw Error(ErrorKind::kValidation, std::string("missing required field '") + key + "'");
    return j.at(key);
  };
  const auto string_field = [&](const char* key) {
    const auto& v = require(key);
    if (!v.is_string()) throw Error(ErrorKind::kValidation, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  };
  const auto int_field = [&](const char* key) {
    const auto& v = require(key);
    if (!v.is_number_integer()) {
      throw Error(ErrorKind::kValidation, std::string("field '") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
  };

  ClipRecord r;
  r.movie_id = string_field("movie_id");
  r.clip_index = static_cast<int>(int_field("clip_index"));
  r.speaker = string_field("speaker");
  const std::string emotion = string_field("emotion");
  const auto parsed = ParseEmotion(emotion);
  if (!parsed) throw Error(ErrorKind::kValidation, "unknown emotion label '" + emotion + "'");
  r.emotion = *parsed;
  r.text = string_field("text");
  r.start_ms = int_field("start_ms");
  r.end_ms = int_field("end_ms");
  if (r.end_ms <= r.start_ms) throw Error(ErrorKind::kValidation, "end_ms must be greater than start_ms");
  if (j.contains("audio_path") && !j["audio_path"].is_null()) r.audio_path = string_field("audio_path");
  if (j.contains("video_path") && !j["video_path"].is_null()) r.video_path = string_field("video_path");
  return r;
}

inline std::vector<ClipRecord> LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kFileNotFound, path.string() + ": cannot open manifest");
  std::vector<ClipRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(ClipRecordFromJson(nlohmann::json::parse(line)));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ": row " + std::to_string(row) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse, path.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
  }
  return records;
}

inline std::string ManifestText(std::span<const ClipRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += ToJson(r).dump();
    out += '\n';
  }
  return out;
}

inline void SaveManifest(std::span<const ClipRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, path.string() + ": cannot open for writing");
  out << ManifestText(records);
  if (!out) throw Error(ErrorKind::kIo, path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Clip plan
// ---------------------------------------------------------------------------

enum class AudioExtraction { kCenterChannel, kDownmix };

inline std::string_view AudioExtractionName(AudioExtraction m) {
  return m == AudioExtraction::kCenterChannel ? "center-channel" : "downmix";
}

struct ClipJob {
  std::string movie_id;
  int index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  AudioExtraction audio_mode = AudioExtraction::kCenterChannel;
  std::string out_audio;
  std::string out_video;
};

struct ClipPlan {
  std::string movie_path;
  std::string out_dir;
  int sample_rate = kCanonicalSampleRate;
  std::vector<ClipJob> jobs;
};

struct ClipPlanOptions {
  AudioExtraction audio_mode = AudioExtraction::kCenterChannel;
  std::string movie_id;  // defaults to the movie file stem
  int sample_rate = kCanonicalSampleRate;
};

inline ClipPlan BuildClipPlan(std::span<const SrtEntry> entries, const std::filesystem::path& movie,
                              const std::filesystem::path& out_dir, const ClipPlanOptions& opts = {}) {
  if (entries.empty()) throw Error(ErrorKind::kEmptyInput, "clip plan needs at least one subtitle cue");
  std::set<int> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.index).second) {
      throw Error(ErrorKind::kValidation, "duplicate cue index " + std::to_string(e.index));
    }
  }
  ClipPlan plan;
  plan.movie_path = movie.string();
  plan.out_dir = out_dir.string();
  plan.sample_rate = opts.sample_rate;
  const std::string movie_id = opts.movie_id.empty() ? movie.stem().string() : opts.movie_id;
  for (const auto& e : entries) {
    ClipJob job;
    job.movie_id = movie_id;
    job.index = e.index;
    job.start_s = static_cast<double>(e.start_ms) / 1000.0;
    job.end_s = static_cast<double>(e.end_ms) / 1000.0;
    job.audio_mode = opts.audio_mode;
    const std::string stem = ClipId(movie_id, e.index);
    job.out_audio = (out_dir / (stem + ".wav")).string();
    job.out_video = (out_dir / (stem + ".mp4")).string();
    plan.jobs.push_back(std::move(job));
  }
  return plan;
}

inline std::string FormatSeconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", s);
  return buf;
}

// FFmpeg-compatible argument vectors: one audio extraction, one video cut.
inline std::vector<std::vector<std::string>> ClipCommands(const ClipPlan& plan, const ClipJob& job) {
  const std::string ss = FormatSeconds(job.start_s);
  const std::string to = FormatSeconds(job.end_s);
  std::vector<std::string> audio = {"ffmpeg", "-y", "-ss", ss, "-to", to, "-i", plan.movie_path, "-vn"};
  if (job.audio_mode == AudioExtraction::kCenterChannel) {
    audio.insert(audio.end(), {"-af", "pan=mono|c0=FC"});
  } else {
    audio.insert(audio.end(), {"-ac", "1"});
  }
  audio.insert(audio.end(), {"-ar", std::to_string(plan.sample_rate), "-c:a", "pcm_s16le", job.out_audio});
  std::vector<std::string> video = {"ffmpeg", "-y", "-ss", ss, "-to", to, "-i", plan.movie_path,
                                    "-an", "-c:v", "libx264", job.out_video};
  return {audio, video};
}

inline nlohmann::json ToJson(const ClipPlan& plan, bool with_commands) {
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& job : plan.jobs) {
    nlohmann::json j = {{"movie_id", job.movie_id},
                        {"index", job.index},
                        {"start_s", job.start_s},
                        {"end_s", job.end_s},
                        {"audio_mode", std::string(AudioExtractionName(job.audio_mode))},
                        {"out_audio", job.out_audio},
                        {"out_video", job.out_video}};
    if (with_commands) j["commands"] = ClipCommands(plan, job);
    jobs.push_back(std::move(j));
  }
  return {{"movie_path", plan.movie_path}, {"out_dir", plan.out_dir}, {"sample_rate", plan.sample_rate},
          {"jobs", jobs}};
}

// ---------------------------------------------------------------------------
// Dataset split
// ---------------------------------------------------------------------------

struct SplitOptions {
  std::array<double, 3> ratios = {0.6, 0.1, 0.3};
  std::uint64_t seed = 0;
  bool stratify_by_speaker = false;
};

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// floor(r_train * n), floor(r_val * n), remainder to test.
inline SplitSizes ComputeSplitSizes(std::size_t n, const std::array<double, 3>& ratios) {
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
  s.val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
  s.test = n - s.train - s.val;
  return s;
}

namespace detail {

// Fisher-Yates driven directly by mt19937_64 with rejection sampling, so the
// permutation does not depend on the standard library's distributions.
inline void SeededShuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    std::swap(v[i - 1], v[static_cast<std::size_t>(draw % bound)]);
  }
}

}  // namespace detail

inline SplitAssignment SplitDataset(std::span<const ClipRecord> records, const SplitOptions& opts) {
  for (double r : opts.ratios) {
    if (!(r > 0.0)) throw Error(ErrorKind::kInvalidArgument, "split ratios must be positive");
  }
  const double total = opts.ratios[0] + opts.ratios[1] + opts.ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::kInvalidArgument, "split ratios must sum to 1");
  if (records.size() < 3) {
    throw Error(ErrorKind::kInvalidArgument, "need at least 3 records to split, got " + std::to_string(records.size()));
  }

  SplitAssignment out;
  out.seed = opts.seed;
  std::mt19937_64 rng(opts.seed);

  std::vector<std::vector<std::size_t>> groups;
  if (opts.stratify_by_speaker) {
    std::map<std::string, std::vector<std::size_t>> by_speaker;
    for (std::size_t i = 0; i < records.size(); ++i) by_speaker[records[i].speaker].push_back(i);
    for (auto& [speaker, idx] : by_speaker) groups.push_back(std::move(idx));
  } else {
    groups.emplace_back(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) groups[0][i] = i;
  }

  for (auto& group : groups) {
    detail::SeededShuffle(group, rng);
    const SplitSizes sizes = ComputeSplitSizes(group.size(), opts.ratios);
    for (std::size_t k = 0; k < group.size(); ++k) {
      std::string id = ClipId(records[group[k]]);
      if (k < sizes.train) {
        out.train.push_back(std::move(id));
      } else if (k < sizes.train + sizes.val) {
        out.val.push_back(std::move(id));
      } else {
        out.test.push_back(std::move(id));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
  std::size_t n_movies = 0;
  std::size_t n_clips = 0;
  std::size_t n_speakers = 0;
  double avg_subtitle_words = 0.0;
  double avg_duration_s = 0.0;
  std::array<std::size_t, 8> emotion_counts{};
  std::vector<std::pair<std::string, std::size_t>> word_counts;  // count desc, then word asc
  std::map<std::size_t, std::size_t> utterance_length_histogram;  // words -> clips
  std::optional<PitchStats> pitch;
};

inline std::size_t WhitespaceTokenCount(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

// Lowercased, ASCII punctuation stripped, split on whitespace.
inline std::vector<std::string> NormalizedWords(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

inline CorpusStats ComputeCorpusStats(std::span<const ClipRecord> records,
                                      std::span<const PitchTrack> pitch_tracks = {},
                                      bool include_unvoiced = false) {
  if (records.empty()) throw Error(ErrorKind::kEmptyInput, "corpus statistics of an empty record list");
  CorpusStats s;
  std::set<std::string> movies;
  std::set<std::string> speakers;
  std::unordered_map<std::string, std::size_t> words;
  std::size_t total_tokens = 0;
  std::int64_t total_ms = 0;
  for (const auto& r : records) {
    movies.insert(r.movie_id);
    speakers.insert(r.speaker);
    const std::size_t tokens = WhitespaceTokenCount(r.text);
    total_tokens += tokens;
    ++s.utterance_length_histogram[tokens];
    total_ms += r.duration_ms();
    ++s.emotion_counts[static_cast<std::size_t>(r.emotion)];
    for (auto& w : NormalizedWords(r.text)) ++words[std::move(w)];
  }
  s.n_movies = movies.size();
  s.n_speakers = speakers.size();
  s.n_clips = records.size();
  s.avg_subtitle_words = static_cast<double>(total_tokens) / static_cast<double>(s.n_clips);
  s.avg_duration_s = static_cast<double>(total_ms) / 1000.0 / static_cast<double>(s.n_clips);
  s.word_counts.assign(words.begin(), words.end());
  std::sort(s.word_counts.begin(), s.word_counts.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (!pitch_tracks.empty()) s.pitch = ComputePitchStats(pitch_tracks, include_unvoiced);
  return s;
}

inline nlohmann::json ToJson(const CorpusStats& s, std::size_t top_words) {
  nlohmann::json emotions = nlohmann::json::object();
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) emotions[std::string(kEmotionNames[i])] = s.emotion_counts[i];
  nlohmann::json words = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min(top_words, s.word_counts.size()); ++i) {
    words.push_back({s.word_counts[i].first, s.word_counts[i].second});
  }
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [len, count] : s.utterance_length_histogram) hist.push_back({{"words", len}, {"clips", count}});
  nlohmann::json j = {{"n_movies", s.n_movies},
                      {"n_clips", s.n_clips},
                      {"n_speakers", s.n_speakers},
                      {"avg_subtitle_words", s.avg_subtitle_words},
                      {"avg_duration_s", s.avg_duration_s},
                      {"emotion_counts", emotions},
                      {"word_counts", words},
                      {"utterance_length_histogram", hist}};
  if (s.pitch) {
    j["pitch"] = {{"mean_hz", s.pitch->mean},
                  {"variance", s.pitch->variance},
                  {"frames", s.pitch->frames},
                  {"rendered", FormatPlusMinus(s.pitch->mean, s.pitch->variance)}};
  }
  return j;
}

}  // namespace dubeval

#endif  // DUBEVAL_CORPUS_HPP
