#include "dubeval/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"

namespace dubeval {
namespace {

using testing::ScratchDir;

Matrix RandomMatrix(std::mt19937& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = u(rng);
  }
  return m;
}

oracle::Sequence ToSequence(const Matrix& m) {
  oracle::Sequence s;
  for (std::size_t r = 0; r < m.rows(); ++r) s.emplace_back(m.row(r).begin(), m.row(r).end());
  return s;
}

void ExpectValidPath(const AlignmentResult& a, const Matrix& x, const Matrix& y) {
  ASSERT_FALSE(a.path.empty());
  EXPECT_EQ(a.path.front(), std::make_pair(std::size_t{0}, std::size_t{0}));
  EXPECT_EQ(a.path.back(), std::make_pair(a.m - 1, a.n - 1));
  double sum = 0.0;
  for (std::size_t p = 0; p < a.path.size(); ++p) {
    sum += FrameDistance(x.row(a.path[p].first), y.row(a.path[p].second));
    if (p == 0) continue;
    const auto di = a.path[p].first - a.path[p - 1].first;
    const auto dj = a.path[p].second - a.path[p - 1].second;
    EXPECT_TRUE((di == 1 && dj == 1) || (di == 1 && dj == 0) || (di == 0 && dj == 1));
  }
  EXPECT_EQ(sum, a.cost);
  EXPECT_GE(a.path_len(), std::max(a.m, a.n));
  EXPECT_LE(a.path_len(), a.m + a.n - 1);
}

TEST(FrameDistance, Basics) {
  const std::vector<double> zero{0.0, 0.0};
  const std::vector<double> p{3.0, 4.0};
  EXPECT_EQ(FrameDistance(p, p), 0.0);
  EXPECT_EQ(FrameDistance(zero, p), 5.0);
  EXPECT_THROW(FrameDistance(zero, std::vector<double>{1.0}), Error);

  std::mt19937 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Matrix m = RandomMatrix(rng, 2, 7);
    EXPECT_EQ(FrameDistance(m.row(0), m.row(1)), FrameDistance(m.row(1), m.row(0)));
  }
}

TEST(Mcd, HandCase) {
  const Matrix c{{0, 0}, {1, 1}};
  const Matrix c2{{3, 4}, {1, 1}};
  EXPECT_EQ(Mcd(c, c), 0.0);
  EXPECT_EQ(Mcd(c, c2), 2.5);
  EXPECT_NEAR(Mcd(c, c2, McdScale::kConventional), 2.5 * 10.0 * std::sqrt(2.0) / std::log(10.0), 1e-12);
}

TEST(Mcd, SymmetricAndChecked) {
  std::mt19937 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Matrix a = RandomMatrix(rng, 9, 13);
    const Matrix b = RandomMatrix(rng, 9, 13);
    EXPECT_EQ(Mcd(a, b), Mcd(b, a));
  }
  const Matrix a = RandomMatrix(rng, 3, 2);
  EXPECT_THROW(Mcd(a, RandomMatrix(rng, 4, 2)), Error);
  EXPECT_THROW(Mcd(a, RandomMatrix(rng, 3, 3)), Error);
}

TEST(Dtw, IdenticalSequencesAlignDiagonally) {
  std::mt19937 rng(3);
  const Matrix a = RandomMatrix(rng, 8, 3);
  const AlignmentResult r = DtwAlign(a, a);
  EXPECT_EQ(r.cost, 0.0);
  EXPECT_EQ(r.path_len(), 8u);
  for (std::size_t p = 0; p < r.path.size(); ++p) EXPECT_EQ(r.path[p], std::make_pair(p, p));
  EXPECT_EQ(McdDtw(r), 0.0);
}

TEST(Dtw, WorkedThreeByTwoExample) {
  const Matrix c{{0}, {1}, {2}};
  const Matrix c2{{0}, {2}};
  const oracle::PathMinimum brute = oracle::EnumerateDtw(ToSequence(c), ToSequence(c2));
  EXPECT_EQ(brute.cost, 1.0);
  EXPECT_EQ(brute.shortest_len_at_min, 3u);

  const AlignmentResult r = DtwAlign(c, c2);
  EXPECT_EQ(r.cost, 1.0);
  EXPECT_EQ(r.path_len(), 3u);
  EXPECT_DOUBLE_EQ(McdDtw(r), 1.0 / 3.0);
  const WeightedScore sl = McdDtwSl(r);
  EXPECT_EQ(sl.eta, 1.5);
  EXPECT_DOUBLE_EQ(sl.score, 0.5);
  ExpectValidPath(r, c, c2);
}

TEST(Dtw, MatchesExhaustiveEnumeration) {
  std::mt19937 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 6);
  std::uniform_int_distribution<std::size_t> dim(1, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = dim(rng);
    const Matrix a = RandomMatrix(rng, len(rng), k);
    const Matrix b = RandomMatrix(rng, len(rng), k);
    const AlignmentResult r = DtwAlign(a, b);
    const oracle::PathMinimum brute = oracle::EnumerateDtw(ToSequence(a), ToSequence(b));
    EXPECT_NEAR(r.cost, brute.cost, 1e-9);
    ExpectValidPath(r, a, b);
  }
}

TEST(Dtw, SymmetricAndTransposable) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = RandomMatrix(rng, 1 + trial % 7, 2);
    const Matrix b = RandomMatrix(rng, 1 + (trial * 3) % 9, 2);
    const AlignmentResult ab = DtwAlign(a, b);
    const AlignmentResult ba = DtwAlign(b, a);
    EXPECT_NEAR(ab.cost, ba.cost, 1e-12);
    // The transposed path of (a, b) is a valid path of (b, a) with the same optimal cost.
    AlignmentResult transposed = ab;
    std::swap(transposed.m, transposed.n);
    for (auto& [i, j] : transposed.path) std::swap(i, j);
    double sum = 0.0;
    for (const auto& [i, j] : transposed.path) sum += FrameDistance(b.row(i), a.row(j));
    transposed.cost = sum;
    ExpectValidPath(transposed, b, a);
    EXPECT_NEAR(sum, ba.cost, 1e-12);
  }
}

// Repeating a frame can only add the cost of one extra cell on an optimal path.
TEST(Dtw, DuplicatedFrameAddsAtMostOneCell) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = RandomMatrix(rng, 6, 3);
    const Matrix b = RandomMatrix(rng, 5, 3);
    const std::size_t dup = static_cast<std::size_t>(trial) % 6;
    Matrix a2(7, 3);
    for (std::size_t r = 0, src = 0; r < 7; ++r) {
      for (std::size_t c = 0; c < 3; ++c) a2(r, c) = a(src, c);
      if (r != dup) ++src;
    }
    const AlignmentResult base = DtwAlign(a, b);
    double extra = std::numeric_limits<double>::infinity();
    for (const auto& [i, j] : base.path) {
      if (i == dup) extra = std::min(extra, FrameDistance(a.row(i), b.row(j)));
    }
    const double cost = DtwAlign(a2, b).cost;
    EXPECT_GE(cost, base.cost - 1e-12);
    EXPECT_LE(cost, base.cost + extra + 1e-12);
    EXPECT_NEAR(cost, oracle::EnumerateDtw(ToSequence(a2), ToSequence(b)).cost, 1e-9);
  }
}

TEST(Dtw, CostBoundedByDiagonal) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = RandomMatrix(rng, 10, 4);
    const Matrix b = RandomMatrix(rng, 10, 4);
    EXPECT_LE(DtwAlign(a, b).cost, 10.0 * Mcd(a, b) + 1e-12);
  }
}

TEST(Dtw, Errors) {
  const Matrix empty(0, 2);
  const Matrix a{{1, 2}};
  EXPECT_THROW(DtwAlign(empty, a), Error);
  EXPECT_THROW(DtwAlign(a, Matrix{{1, 2, 3}}), Error);
}

TEST(McdDtw, PerfectlyAlignedEqualsMcd) {
  // Distinct, well-separated frames force the diagonal path.
  const Matrix a{{0, 0}, {10, 0}, {20, 0}, {30, 0}};
  const Matrix b{{0, 1}, {10, 1}, {20, 1}, {30, 1}};
  const AlignmentResult r = DtwAlign(a, b);
  EXPECT_EQ(r.path_len(), 4u);
  EXPECT_DOUBLE_EQ(McdDtw(r), Mcd(a, b));
  EXPECT_DOUBLE_EQ(McdDtwSl(r).score, McdDtw(r));
  EXPECT_EQ(McdDtwSl(r).eta, 1.0);
}

TEST(McdDtwSl, EqualsEtaTimesMcdDtw) {
  std::mt19937 rng(8);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const AlignmentResult r = DtwAlign(RandomMatrix(rng, len(rng), 3), RandomMatrix(rng, len(rng), 3));
    const WeightedScore sl = McdDtwSl(r);
    EXPECT_GE(sl.eta, 1.0);
    EXPECT_NEAR(sl.score, sl.eta * McdDtw(r), 1e-12);
  }
  AlignmentResult zero;
  zero.m = 2;
  zero.n = 6;
  zero.path = {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 5}};
  EXPECT_EQ(McdDtwSl(zero).score, 0.0);
  EXPECT_EQ(McdDtwSl(zero).eta, 3.0);
  EXPECT_THROW(SpeechLengthCoefficient(0, 3), Error);
}

class EvaluatePairTest : public ::testing::Test {
 protected:
  void SetUp() override {
    voice_a_ = testing::SyntheticVoice(0.8, 110, 170, 21);
    voice_b_ = testing::SyntheticVoice(0.8, 140, 120, 22);
    WriteWav(dir_ / "a.wav", voice_a_);
    WriteWav(dir_ / "b.wav", voice_b_);
    Waveform tail = voice_a_;
    tail.samples.resize(tail.samples.size() + kCanonicalSampleRate / 2, 0.0);
    WriteWav(dir_ / "a_tail.wav", tail);
  }

  ScratchDir dir_{"pairs"};
  Waveform voice_a_;
  Waveform voice_b_;
  EvalConfig cfg_;
};

TEST_F(EvaluatePairTest, IdenticalFilesScoreZero) {
  const MetricRow row = EvaluatePair(dir_ / "a.wav", dir_ / "a.wav", cfg_);
  EXPECT_EQ(row.mcd, 0.0);
  EXPECT_EQ(row.mcd_dtw, 0.0);
  EXPECT_EQ(row.mcd_dtw_sl, 0.0);
  EXPECT_EQ(row.eta, 1.0);
  EXPECT_EQ(row.m, row.n);
}

TEST_F(EvaluatePairTest, SwappingInputsLeavesMetricsUnchanged) {
  const MetricRow ab = EvaluatePair(dir_ / "a.wav", dir_ / "b.wav", cfg_);
  const MetricRow ba = EvaluatePair(dir_ / "b.wav", dir_ / "a.wav", cfg_);
  EXPECT_GT(ab.mcd, 0.0);
  EXPECT_NEAR(ab.mcd, ba.mcd, 1e-12);
  EXPECT_NEAR(ab.mcd_dtw, ba.mcd_dtw, 1e-12);
  EXPECT_NEAR(ab.mcd_dtw_sl, ba.mcd_dtw_sl, 1e-12);
  EXPECT_EQ(ab.eta, ba.eta);

  const MetricRow t1 = EvaluatePair(dir_ / "a.wav", dir_ / "a_tail.wav", cfg_);
  const MetricRow t2 = EvaluatePair(dir_ / "a_tail.wav", dir_ / "a.wav", cfg_);
  EXPECT_NEAR(t1.mcd, t2.mcd, 1e-12);
  EXPECT_NEAR(t1.mcd_dtw_sl, t2.mcd_dtw_sl, 1e-9);
}

TEST_F(EvaluatePairTest, TrailingSilenceIsPenalized) {
  const MetricRow row = EvaluatePair(dir_ / "a.wav", dir_ / "a_tail.wav", cfg_);
  EXPECT_GT(row.eta, 1.0);
  EXPECT_GE(row.mcd_dtw_sl, row.mcd_dtw);
  EXPECT_NEAR(row.mcd_dtw_sl, row.eta * row.mcd_dtw, 1e-12);
  EXPECT_GT(row.n, row.m);
}

TEST_F(EvaluatePairTest, StrictModeRejectsUnequalLengths) {
  EvalConfig strict = cfg_;
  strict.pad = PadMode::kStrict;
  EXPECT_THROW(EvaluatePair(dir_ / "a.wav", dir_ / "a_tail.wav", strict), Error);
  EXPECT_NO_THROW(EvaluatePair(dir_ / "a.wav", dir_ / "b.wav", strict));
}

TEST_F(EvaluatePairTest, ConventionalScaleMultipliesEveryMetric) {
  EvalConfig conv = cfg_;
  conv.scale = McdScale::kConventional;
  const MetricRow raw = EvaluatePair(dir_ / "a.wav", dir_ / "b.wav", cfg_);
  const MetricRow scaled = EvaluatePair(dir_ / "a.wav", dir_ / "b.wav", conv);
  const double k = 10.0 * std::sqrt(2.0) / std::log(10.0);
  EXPECT_NEAR(scaled.mcd, k * raw.mcd, 1e-9);
  EXPECT_NEAR(scaled.mcd_dtw, k * raw.mcd_dtw, 1e-9);
  EXPECT_NEAR(scaled.mcd_dtw_sl, k * raw.mcd_dtw_sl, 1e-9);
}

TEST_F(EvaluatePairTest, MissingFileIsReported) {
  EXPECT_THROW(EvaluatePair(dir_ / "a.wav", dir_ / "nope.wav", cfg_), Error);
}

class CorpusTest : public EvaluatePairTest {
 protected:
  std::filesystem::path WriteManifest(const std::string& body) {
    const auto path = dir_ / "pairs.jsonl";
    std::ofstream(path) << body;
    return path;
  }
};

TEST_F(CorpusTest, IdenticalPairsAggregateToZero) {
  const auto path = WriteManifest(
      R"({"id":"p1","generated":"a.wav","reference":"a.wav"})"
      "\n"
      R"({"id":"p2","generated":"b.wav","reference":"b.wav"})"
      "\n");
  const CorpusReport r = EvaluateCorpus(LoadPairManifest(path), cfg_);
  EXPECT_EQ(r.n_ok, 2u);
  EXPECT_EQ(r.mean_mcd, 0.0);
  EXPECT_EQ(r.mean_mcd_dtw, 0.0);
  EXPECT_EQ(r.mean_mcd_dtw_sl, 0.0);
}

TEST_F(CorpusTest, AggregateIsRowMeanInManifestOrder) {
  const auto path = WriteManifest(
      R"({"id":"ab","generated":"a.wav","reference":"b.wav"})"
      "\n\n"
      R"({"id":"tail","generated":"a.wav","reference":"a_tail.wav"})"
      "\n"
      R"({"id":"bad","generated":"a.wav","reference":"missing.wav"})"
      "\n");
  const auto pairs = LoadPairManifest(path);
  ASSERT_EQ(pairs.size(), 3u);
  const MetricRow ab = EvaluatePair(dir_ / "a.wav", dir_ / "b.wav", cfg_);
  const MetricRow tail = EvaluatePair(dir_ / "a.wav", dir_ / "a_tail.wav", cfg_);

  for (int jobs : {1, 3}) {
    EvalConfig cfg = cfg_;
    cfg.jobs = jobs;
    const CorpusReport r = EvaluateCorpus(pairs, cfg);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.rows[0].id, "ab");
    EXPECT_EQ(r.rows[1].id, "tail");
    EXPECT_EQ(r.rows[2].id, "bad");
    EXPECT_TRUE(r.rows[2].error.has_value());
    EXPECT_EQ(r.n_ok, 2u);
    EXPECT_EQ(r.n_failed, 1u);
    EXPECT_DOUBLE_EQ(r.mean_mcd, (ab.mcd + tail.mcd) / 2.0);
    EXPECT_DOUBLE_EQ(r.mean_mcd_dtw, (ab.mcd_dtw + tail.mcd_dtw) / 2.0);
    EXPECT_DOUBLE_EQ(r.mean_mcd_dtw_sl, (ab.mcd_dtw_sl + tail.mcd_dtw_sl) / 2.0);

    const nlohmann::json j = ToJson(r);
    EXPECT_TRUE(j["aggregate"].contains("mcd_dtw_sl"));
    EXPECT_EQ(j["rows"][0]["mcd"].get<double>(), ab.mcd);
    EXPECT_TRUE(j["rows"][2].contains("error"));
  }
}

TEST_F(CorpusTest, OnePairAggregateEqualsRow) {
  const auto path = WriteManifest(R"({"id":"x","generated":"b.wav","reference":"a_tail.wav"})" "\n");
  const CorpusReport r = EvaluateCorpus(LoadPairManifest(path), cfg_);
  EXPECT_EQ(r.mean_mcd, r.rows[0].mcd);
  EXPECT_EQ(r.mean_mcd_dtw, r.rows[0].mcd_dtw);
  EXPECT_EQ(r.mean_mcd_dtw_sl, r.rows[0].mcd_dtw_sl);
}

TEST_F(CorpusTest, MalformedManifestNamesTheLine) {
  const auto path = WriteManifest(R"({"id":"x","generated":"a.wav"})" "\n");
  try {
    LoadPairManifest(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
  }
}

}  // namespace
}  // namespace dubeval
