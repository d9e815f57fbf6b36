#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "chronoalign/error.hpp"
#include "chronoalign/metrics.hpp"
#include "oracles.hpp"

using namespace chronoalign;

namespace {

std::vector<std::vector<double>> random_cost(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<std::vector<double>> c(n, std::vector<double>(m));
  for (auto& row : c)
    for (double& v : row) v = std::round(u(rng) * 4.0) / 4.0;  // coarse values force ties
  return c;
}

double path_cost(const CostMatrix& c, const std::vector<int>& path) {
  double s = 0.0;
  for (int i = 0; i < static_cast<int>(path.size()); ++i) s += c(i, path[i]);
  return s;
}

}  // namespace

TEST(Dtw, HandCases) {
  const DtwResult r = dtw(CostMatrix::from_rows({{0, 5}, {5, 0}}));
  EXPECT_EQ(r.total_cost, 0.0);
  EXPECT_EQ(r.path, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));

  std::mt19937_64 rng(1);
  const auto seq = oracle::random_sequence(rng, 6, 3);
  const DtwResult self = dtw(pairwise_cost(seq, seq));
  EXPECT_EQ(self.total_cost, 0.0);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(self.path[i], (std::pair<int, int>{i, i}));
}

TEST(Dtw, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(1, 5);
  for (int t = 0; t < 300; ++t) {
    const auto rows = random_cost(rng, size(rng), size(rng));
    const CostMatrix c = CostMatrix::from_rows(rows);
    const DtwResult r = dtw(c);
    ASSERT_NEAR(r.total_cost, oracle::brute_dtw(rows), 1e-12);
    double along = 0.0;
    for (std::size_t s = 0; s < r.path.size(); ++s) {
      along += c(r.path[s].first, r.path[s].second);
      if (s > 0) {
        const int di = r.path[s].first - r.path[s - 1].first, dj = r.path[s].second - r.path[s - 1].second;
        ASSERT_TRUE((di == 1 || di == 0) && (dj == 1 || dj == 0) && di + dj > 0);
      }
    }
    ASSERT_NEAR(along, r.total_cost, 1e-12);
    ASSERT_EQ(r.path.front(), (std::pair<int, int>{0, 0}));
    ASSERT_EQ(r.path.back(), (std::pair<int, int>{c.rows - 1, c.cols - 1}));
  }
}

TEST(Dtw, TransposeSymmetry) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const CostMatrix c = CostMatrix::from_rows(random_cost(rng, 4 + t % 3, 6));
    const DtwResult a = dtw(c), b = dtw(c.transposed());
    EXPECT_NEAR(a.total_cost, b.total_cost, 1e-12);
  }
}

TEST(ModifiedDta, FollowsZeroStaircase) {
  CostMatrix c(4, 10, 1.0);
  const std::vector<int> stairs{1, 3, 3, 7};
  for (int i = 0; i < 4; ++i) c(i, stairs[i]) = 0.0;
  const DtaResult r = modified_dta(c, 5);
  EXPECT_EQ(r.path, stairs);
  EXPECT_EQ(r.total_cost, 0.0);
}

TEST(ModifiedDta, UniformCostIsDeterministic) {
  const CostMatrix c(5, 8, 1.0);
  const DtaResult a = modified_dta(c), b = modified_dta(c);
  EXPECT_EQ(a.path, b.path);
  EXPECT_EQ(a.path, (std::vector<int>{0, 0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(a.total_cost, 5.0);
}

TEST(ModifiedDta, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> rows(1, 6), cols(6, 10), jump(1, 5);
  for (int t = 0; t < 500; ++t) {
    const int n = rows(rng), j = jump(rng);
    const auto rws = random_cost(rng, n, cols(rng));
    const CostMatrix c = CostMatrix::from_rows(rws);
    const DtaResult r = modified_dta(c, j);
    ASSERT_NEAR(r.total_cost, oracle::brute_dta(rws, j), 1e-12);
    ASSERT_NEAR(path_cost(c, r.path), r.total_cost, 1e-12);
    for (int i = 1; i < n; ++i) {
      ASSERT_GE(r.path[i], r.path[i - 1]);
      ASSERT_LE(r.path[i] - r.path[i - 1], j);
    }
  }
}

TEST(ModifiedDta, RejectsInvalidInput) {
  EXPECT_THROW(modified_dta(CostMatrix(3, 3, 1.0), -1), std::invalid_argument);
  CostMatrix bad(2, 3, 1.0);
  bad(0, 1) = -1.0;
  EXPECT_THROW(modified_dta(bad), std::invalid_argument);
}

TEST(ShiftErrors, HandCases) {
  const std::vector<int> truth{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  ShiftErrors e = shift_error_metrics(truth, truth);
  EXPECT_EQ(e.mean, 0.0);
  EXPECT_EQ(e.max, 0);
  EXPECT_EQ(e.top1, 1.0);

  std::vector<int> off = truth;
  off[4] += 3;
  e = shift_error_metrics(off, truth);
  EXPECT_NEAR(e.mean, 0.3, 1e-12);
  EXPECT_EQ(e.max, 3);
  EXPECT_NEAR(e.top1, 0.9, 1e-12);

  std::vector<int> all = truth;
  for (int& v : all) v += 1;
  e = shift_error_metrics(all, truth);
  EXPECT_EQ(e.mean, 1.0);
  EXPECT_EQ(e.max, 1);
  EXPECT_EQ(e.top1, 0.0);

  e = shift_error_metrics({4, 9, 2}, {4, LabelMap::kOutOfBounds, 3});
  EXPECT_EQ(e.frames, 2);
  EXPECT_EQ(e.mean, 0.5);
  EXPECT_THROW(shift_error_metrics({1, 2}, {1}), std::invalid_argument);
}

TEST(EditStatistics, HandCases) {
  EXPECT_EQ(edit_statistics({0, 1, 2, 3, 4}), (EditStats{0, 0, 4, 5}));
  EXPECT_EQ(edit_statistics({0, 0, 2}), (EditStats{1, 1, 0, 2}));
  EXPECT_EQ(edit_statistics({0, 1, 1, 2}), (EditStats{1, 0, 2, 3}));
  EXPECT_EQ(edit_statistics({3, 3, 3}), (EditStats{2, 0, 0, 1}));
}

TEST(Pearson, AffineAndHandCases) {
  const std::vector<double> x{1.5, -2.0, 0.25, 7.0, 3.0};
  std::vector<double> y(x.size()), z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = 2.0 * x[i] + 3.0;
    z[i] = -x[i];
  }
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
  EXPECT_NEAR(pearson(x, z), -1.0, 1e-12);
  // Hand computation: x=[1..5], y=[2,4,5,4,5]; sxy=6, sxx=10, syy=6.
  EXPECT_NEAR(pearson({1, 2, 3, 4, 5}, {2, 4, 5, 4, 5}), 6.0 / std::sqrt(60.0), 1e-12);
  EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), NumericError);
  EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Mcd, HandCases) {
  FeatureSequence a, b;
  a.frames = {{0.3, 1.0, 2.0}};
  b.frames = {{0.3, 1.25, 2.0}};
  EXPECT_NEAR(mcd(a, b), 10.0 / std::numbers::ln10 * std::sqrt(2.0) * 0.25, 1e-12);
  EXPECT_EQ(mcd(a, a), 0.0);
  FeatureSequence c0 = a;
  c0.frames[0][0] = 9.0;
  EXPECT_EQ(mcd(a, c0), 0.0);
  EXPECT_THROW(mcd(a, FeatureSequence{}), std::invalid_argument);
}

TEST(Mcd, DtwAbsorbsDuplicatedFrame) {
  std::mt19937_64 rng(5);
  const FeatureSequence ref = oracle::random_sequence(rng, 12, 6);
  FeatureSequence dup;
  for (int i = 0; i < 12; ++i) {
    dup.frames.push_back(ref.frames[i]);
    if (i == 5) dup.frames.push_back(ref.frames[i]);
  }
  EXPECT_EQ(mcd_dtw(ref, dup), 0.0);
  EXPECT_GT(mcd(ref, dup.slice(0, 12)), 0.0);
}

TEST(Mcd, DtwNeverExceedsFrameAligned) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const FeatureSequence x = oracle::random_sequence(rng, 15, 8), y = oracle::random_sequence(rng, 15, 8);
    ASSERT_LE(mcd_dtw(x, y), mcd(x, y) + 1e-12);
    ASSERT_EQ(mcd(x, x), 0.0);
  }
}

TEST(MetricReport, JsonRoundTripAndValidation) {
  MetricReport r;
  r.mean_shift_error = 0.75;
  r.max_shift_error = 4;
  r.top1_accuracy = 0.62;
  r.per_video_accuracy = 0.9;
  r.dup = 3;
  r.mcd = 1.5;
  const MetricReport back = MetricReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  for (const char* key : {"mean_shift_error", "max_shift_error", "top1_accuracy", "per_video_accuracy", "dup", "del",
                          "conseq", "unique", "corr_x", "corr_y", "mcd", "mcd_dtw"})
    EXPECT_TRUE(r.to_json().contains(key)) << key;
  r.top1_accuracy = 1.5;
  EXPECT_THROW(r.validate(), ConfigError);
}

TEST(MetricReport, CsvHasOneRowPerSequence) {
  std::ostringstream os;
  SequenceMetrics a;
  a.id = "seq0";
  a.shift = shift_error_metrics({1, 2}, {1, 3});
  write_metrics_csv(os, {a, a});
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 3);
}
