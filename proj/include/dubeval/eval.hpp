#ifndef DUBEVAL_EVAL_HPP
#define DUBEVAL_EVAL_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dubeval/dsp.hpp"
#include "dubeval/error.hpp"
#include "json.hpp"

namespace dubeval {

struct Embedding {
  std::string label;
  std::string id;
  std::vector<double> vector;  // unit L2 norm
};

class EmbeddingSet {
 public:
  // The vector is L2-normalized on insert; zero vectors, dimension changes
  // and duplicate (label, id) pairs are rejected.
  void Add(std::string label, std::string id, std::vector<double> v) {
    if (v.empty()) throw Error(ErrorKind::kValidation, "embedding '" + id + "' is empty");
    if (dim_ && v.size() != *dim_) {
      throw Error(ErrorKind::kDimensionMismatch, "embedding '" + id + "' has dimension " +
                                                     std::to_string(v.size()) + ", expected " +
                                                     std::to_string(*dim_));
    }
    double norm = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) throw Error(ErrorKind::kValidation, "embedding '" + id + "' has a non-finite entry");
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorKind::kValidation, "embedding '" + id + "' is a zero vector");
    if (!keys_.emplace(label, id).second) {
      throw Error(ErrorKind::kValidation, "duplicate embedding (" + label + ", " + id + ")");
    }
    for (double& x : v) x /= norm;
    dim_ = v.size();
    records_.push_back({std::move(label), std::move(id), std::move(v)});
  }

  const std::vector<Embedding>& records() const { return records_; }
  std::optional<std::size_t> dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

 private:
  std::vector<Embedding> records_;
  std::set<std::pair<std::string, std::string>> keys_;
  std::optional<std::size_t> dim_;
};

// Rows are JSON objects {<label_field>, id, vector}. When the row lacks
// `label_field`, a plain `label` field is accepted instead.
inline EmbeddingSet LoadEmbeddings(const std::filesystem::path& path, const std::string& label_field = "label") {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kFileNotFound, path.string() + ": cannot open embeddings");
  EmbeddingSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    try {
      const nlohmann::json row = nlohmann::json::parse(line);
      if (!row.is_object()) throw Error(ErrorKind::kParse, "row is not an object");
      const char* key = row.contains(label_field) ? label_field.c_str() : "label";
      if (!row.contains(key) || !row[key].is_string()) {
        throw Error(ErrorKind::kValidation, "missing string field '" + label_field + "'");
      }
      if (!row.contains("id") || !(row["id"].is_string() || row["id"].is_number_integer())) {
        throw Error(ErrorKind::kValidation, "missing field 'id'");
      }
      if (!row.contains("vector") || !row["vector"].is_array()) {
        throw Error(ErrorKind::kValidation, "missing array field 'vector'");
      }
      std::vector<double> v;
      for (const auto& x : row["vector"]) {
        if (!x.is_number()) throw Error(ErrorKind::kValidation, "non-numeric vector entry");
        v.push_back(x.get<double>());
      }
      const std::string id = row["id"].is_string() ? row["id"].get<std::string>() : row["id"].dump();
      set.Add(row[key].get<std::string>(), id, std::move(v));
    } catch (const Error& e) {
      throw Error(e.kind(), where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse, where + ": " + e.what());
    }
  }
  return set;
}

struct Centroid {
  std::vector<double> mean;  // unnormalized mean of unit members
  std::size_t count = 0;
  bool degenerate = false;   // near-zero mean, excluded from classification
};

struct CentroidModel {
  std::map<std::string, Centroid> centroids;  // ordered: ties go to the smallest label
  std::size_t dim = 0;
};

inline constexpr double kDegenerateNorm = 1e-12;

inline CentroidModel BuildCentroids(const EmbeddingSet& set) {
  if (set.empty()) throw Error(ErrorKind::kEmptyInput, "cannot build centroids from an empty set");
  CentroidModel model;
  model.dim = *set.dim();
  for (const auto& rec : set.records()) {
    Centroid& c = model.centroids[rec.label];
    if (c.mean.empty()) c.mean.assign(model.dim, 0.0);
    for (std::size_t k = 0; k < model.dim; ++k) c.mean[k] += rec.vector[k];
    ++c.count;
  }
  for (auto& [label, c] : model.centroids) {
    double norm = 0.0;
    for (double& x : c.mean) {
      x /= static_cast<double>(c.count);
      norm += x * x;
    }
    c.degenerate = std::sqrt(norm) < kDegenerateNorm;
  }
  return model;
}

inline double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Classification {
  std::string label;
  double similarity = 0.0;
};

inline Classification Classify(std::span<const double> v, const CentroidModel& model) {
  if (v.size() != model.dim) {
    throw Error(ErrorKind::kDimensionMismatch, "query dimension " + std::to_string(v.size()) +
                                                   " does not match model dimension " + std::to_string(model.dim));
  }
  std::optional<Classification> best;
  for (const auto& [label, c] : model.centroids) {
    if (c.degenerate) continue;
    const double sim = CosineSimilarity(v, c.mean);
    if (!best || sim > best->similarity) best = Classification{label, sim};
  }
  if (!best) throw Error(ErrorKind::kValidation, "all centroids are degenerate");
  return *best;
}

// Percentage of test records whose nearest centroid carries their own label.
inline double Accuracy(const EmbeddingSet& test, const CentroidModel& model) {
  if (test.empty()) throw Error(ErrorKind::kEmptyInput, "accuracy over an empty test set");
  std::size_t correct = 0;
  for (const auto& rec : test.records()) {
    if (Classify(rec.vector, model).label == rec.label) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

struct MosSummary {
  double mean = 0.0;
  double std = 0.0;         // sample standard deviation (n - 1)
  double half_width = 0.0;  // 1.96 * std / sqrt(n)
  std::size_t n = 0;

  std::string Render() const { return FormatPlusMinus(mean, half_width); }
};

// Accepts ratings on the 1..5 scale in 0.5 steps.
inline MosSummary AggregateMos(std::span<const double> ratings) {
  if (ratings.empty()) throw Error(ErrorKind::kEmptyInput, "no ratings");
  for (double r : ratings) {
    const double doubled = r * 2.0;
    if (!(r >= 1.0 && r <= 5.0) || std::abs(doubled - std::round(doubled)) > 1e-9) {
      std::ostringstream msg;
      msg << "rating " << r << " is not on the 1..5 half-point scale";
      throw Error(ErrorKind::kValidation, msg.str());
    }
  }
  MosSummary s;
  s.n = ratings.size();
  double sum = 0.0;
  for (double r : ratings) sum += r;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double sq = 0.0;
    for (double r : ratings) sq += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  s.half_width = 1.96 * s.std / std::sqrt(static_cast<double>(s.n));
  return s;
}

// Single-column CSV (an optional non-numeric header line is skipped) or JSON
// Lines with a `score` field. The format is sniffed from the first data line.
inline std::vector<double> LoadRatings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kFileNotFound, path.string() + ": cannot open ratings");
  std::vector<double> ratings;
  std::string line;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string body = line.substr(first, last - first + 1);
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (body.front() == '{') {
      try {
        const nlohmann::json row = nlohmann::json::parse(body);
        if (!row.contains("score") || !row["score"].is_number()) {
          throw Error(ErrorKind::kValidation, where + ": missing numeric field 'score'");
        }
        ratings.push_back(row["score"].get<double>());
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::kParse, where + ": " + e.what());
      }
    } else {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(body, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != body.size()) {
        if (!seen_data && ratings.empty()) {
          seen_data = true;  // header
          continue;
        }
        throw Error(ErrorKind::kParse, where + ": not a number: '" + body + "'");
      }
      ratings.push_back(value);
    }
    seen_data = true;
  }
  return ratings;
}

}  // namespace dubeval

#endif  // DUBEVAL_EVAL_HPP
