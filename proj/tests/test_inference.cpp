#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "chronoalign/error.hpp"
#include "chronoalign/inference.hpp"
#include "chronoalign/synth.hpp"
#include "oracles.hpp"

using namespace chronoalign;

namespace {

std::vector<std::vector<int>> random_candidates(std::mt19937_64& rng, int max_frames = 8) {
  std::uniform_int_distribution<int> frames(1, max_frames), count(0, 3), idx(0, 11);
  std::vector<std::vector<int>> c(frames(rng));
  for (auto& set : c) {
    std::set<int> s;
    const int k = count(rng);
    while (static_cast<int>(s.size()) < k) s.insert(idx(rng));
    set.assign(s.begin(), s.end());
  }
  return c;
}

int assigned(const std::vector<int>& path) {
  int a = 0;
  for (int v : path) a += v != kGap;
  return a;
}

AlignerParams tiny_model(std::uint64_t seed) {
  AlignerConfig cfg;
  cfg.audio_dim = 5;
  cfg.video_dim = 4;
  cfg.encoder_hidden = 6;
  cfg.embed_dim = 4;
  cfg.rnn_hidden = 6;
  cfg.mlp_hidden = {6};
  cfg.label_embed_dim = 4;
  cfg.attention_dim = 5;
  return AlignerParams::create(cfg, seed);
}

VoteTable table_of(const std::vector<std::map<int, int>>& votes) {
  VoteTable t;
  t.votes = votes;
  t.windows.resize(votes.size());
  return t;
}

std::vector<int> ramp(int n, int offset = 0) {
  std::vector<int> p(n);
  for (int k = 0; k < n; ++k) p[k] = k + offset;
  return p;
}

}  // namespace

TEST(Windows, KeyWindowIsCenteredThenClamped) {
  EXPECT_EQ(key_window_start(30, 25, 75, 200), 5);
  EXPECT_EQ(key_window_start(0, 25, 75, 200), 0);
  EXPECT_EQ(key_window_start(190, 25, 75, 200), 125);
}

TEST(Windows, VoteCoverage) {
  const AlignerParams model = tiny_model(1);
  std::mt19937_64 rng(2);
  const auto video = oracle::random_sequence(rng, 100, 4);

  const VoteTable one = windowed_predict(oracle::random_sequence(rng, 25, 5), video, model);
  for (int k = 0; k < 25; ++k) {
    EXPECT_EQ(one.total_votes(k), 1);
    EXPECT_EQ(one.windows[k], std::vector<int>{0});
  }

  const VoteTable three = windowed_predict(oracle::random_sequence(rng, 45, 5), video, model);
  EXPECT_EQ(three.windows[20], (std::vector<int>{0, 10, 20}));
  for (int k = 0; k < 45; ++k) {
    EXPECT_LE(three.total_votes(k), 3);
    const int covering = (k < 25) + (k >= 10 && k < 35) + (k >= 20);
    EXPECT_EQ(three.total_votes(k), covering) << k;
    for (const auto& [idx, count] : three.votes[k]) {
      EXPECT_GE(idx, 0);
      EXPECT_LT(idx, 100);
    }
  }

  WindowOptions threaded;
  threaded.threads = 3;
  const auto queries = oracle::random_sequence(rng, 60, 5);
  EXPECT_EQ(windowed_predict(queries, video, model).votes, windowed_predict(queries, video, model, threaded).votes);

  EXPECT_THROW(windowed_predict(oracle::random_sequence(rng, 24, 5), video, model), std::invalid_argument);
  EXPECT_THROW(windowed_predict(queries, video.slice(0, 74), model), std::invalid_argument);
}

TEST(Candidates, KeepOnlyMaximalVotes) {
  const auto c = candidate_sets(table_of({{{7, 2}, {9, 1}}, {{3, 1}, {4, 1}, {8, 1}}, {}, {{5, 3}}}));
  EXPECT_EQ(c[0], std::vector<int>{7});
  EXPECT_EQ(c[1], (std::vector<int>{3, 4, 8}));
  EXPECT_TRUE(c[2].empty());
  EXPECT_EQ(c[3], std::vector<int>{5});
}

TEST(MonotoneMatch, HandExamples) {
  EXPECT_EQ(longest_monotone_match({{1}, {2}, {4}}), (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(longest_monotone_match({{5}, {3}, {6}}), (std::vector<int>{5, kGap, 6}));
  EXPECT_EQ(longest_monotone_match({{2}, {2}, {2}}), (std::vector<int>{2, 2, 2}));
  EXPECT_EQ(longest_monotone_match({{}, {1, 4}, {2}}), (std::vector<int>{kGap, 1, 2}));
  EXPECT_TRUE(longest_monotone_match({}).empty());
}

TEST(MonotoneMatch, OptimalLengthAgainstExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto c = random_candidates(rng);
    const auto path = longest_monotone_match(c);
    ASSERT_EQ(path.size(), c.size());
    ASSERT_EQ(assigned(path), oracle::best_monotone_count(c));
    int last = -1;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (path[k] == kGap) continue;
      ASSERT_NE(std::find(c[k].begin(), c[k].end(), path[k]), c[k].end());
      ASSERT_GE(path[k], last);
      last = path[k];
    }
  }
}

TEST(MonotoneMatch, TieRuleAgainstExhaustiveSearch) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    const auto c = random_candidates(rng, 6);
    ASSERT_EQ(longest_monotone_match(c), oracle::best_monotone_lexmin(c));
  }
}

TEST(ResumeAfterBreak, HandExamples) {
  EXPECT_EQ(resume_after_break({1, 2, 3}), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(resume_after_break({39, 40, 38, 41}), (std::vector<int>{39, 40, kGap, 41}));
  EXPECT_EQ(resume_after_break({40, 38, 37, 36}), (std::vector<int>{40, kGap, kGap, kGap}));
  EXPECT_EQ(resume_after_break({40, kGap, 42}, {{40}, {30, 41, 50}, {42}}), (std::vector<int>{40, 41, 42}));
  EXPECT_EQ(resume_after_break({40, kGap, 42}, {{40}, {30, 50}, {42}}), (std::vector<int>{40, kGap, 42}));
  EXPECT_THROW(resume_after_break({1, 2}, {{1}}), std::invalid_argument);
}

TEST(Smoothing, SlopeOnePathIsUnchanged) {
  const SmoothResult r = adaptive_smooth(ramp(30, 12));
  EXPECT_EQ(r.path, ramp(30, 12));
  EXPECT_EQ(r.sigma, 0.5);
  EXPECT_FALSE(r.fallback);
}

TEST(Smoothing, SpikeIsFlattened) {
  std::vector<int> p = ramp(21);
  p[10] += 10;
  const SmoothResult r = adaptive_smooth(p);
  EXPECT_GT(r.sigma, 0.5);
  for (int k = 1; k < 21; ++k) EXPECT_GE(r.path[k], r.path[k - 1]);
  EXPECT_LE(std::abs(r.path[10] - 10), 2);
  EXPECT_LT(*std::max_element(r.path.begin(), r.path.end()), 21);
}

TEST(Smoothing, EdgesArePaddedWithMatchedValues) {
  std::vector<int> p = ramp(30, 5);
  for (int k = 25; k < 30; ++k) p[k] = kGap;
  p[0] = p[1] = kGap;
  const SmoothResult r = adaptive_smooth(p);
  for (int k = 25; k < 30; ++k) EXPECT_EQ(r.path[k], 29);
  EXPECT_EQ(r.path[0], 7);
  EXPECT_EQ(r.path[1], 7);
}

TEST(Smoothing, GapsAreInterpolated) {
  const SmoothResult r = adaptive_smooth({0, kGap, kGap, kGap, 4, 5});
  EXPECT_EQ(r.path, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Smoothing, FallbackWithFewerThanTwoMatches) {
  const SmoothResult none = adaptive_smooth({kGap, kGap, kGap});
  EXPECT_TRUE(none.fallback);
  EXPECT_EQ(none.path, (std::vector<int>{0, 1, 2}));
  const SmoothResult one = adaptive_smooth({kGap, 9, kGap});
  EXPECT_TRUE(one.fallback);
  EXPECT_EQ(one.path, (std::vector<int>{8, 9, 10}));
}

TEST(Smoothing, OutputMonotoneAndSigmaGridMinimal) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> jitter(-6, 6), gap(0, 4);
  const SmoothingConfig cfg;
  for (int t = 0; t < 200; ++t) {
    std::vector<int> p(40);
    for (int k = 0; k < 40; ++k) p[k] = gap(rng) == 0 ? kGap : std::max(0, k + 20 + jitter(rng));
    p[3] = 23;
    p[35] = 55;
    const SmoothResult r = adaptive_smooth(p, cfg);
    ASSERT_EQ(r.path.size(), 40u);
    for (int k = 1; k < 40; ++k) ASSERT_GE(r.path[k], r.path[k - 1]);

    // Rebuild the filled curve independently and check the previous grid value fails.
    std::vector<int> idx;
    for (int k = 0; k < 40; ++k)
      if (p[k] != kGap) idx.push_back(k);
    std::vector<double> curve;
    for (int k = idx.front(); k <= idx.back(); ++k) {
      auto hi = std::lower_bound(idx.begin(), idx.end(), k);
      if (*hi == k) {
        curve.push_back(p[k]);
        continue;
      }
      const int k1 = *hi, k0 = *(hi - 1);
      curve.push_back(p[k0] + (p[k1] - p[k0]) * double(k - k0) / (k1 - k0));
    }
    const auto pos = std::find(cfg.sigma_grid.begin(), cfg.sigma_grid.end(), r.sigma);
    ASSERT_NE(pos, cfg.sigma_grid.end());
    if (pos != cfg.sigma_grid.begin())
      ASSERT_GT(max_abs_second_difference(gaussian_smooth(curve, *(pos - 1))), cfg.criterion_threshold);
  }
}

TEST(Smoothing, GaussianKeepsLinesAndConstants) {
  std::vector<double> line(15), flat(15, 3.0);
  for (int i = 0; i < 15; ++i) line[i] = 2.0 * i - 1.0;
  for (double sigma : {0.5, 2.0, 8.0}) {
    const auto a = gaussian_smooth(line, sigma), b = gaussian_smooth(flat, sigma);
    for (int i = 0; i < 15; ++i) {
      EXPECT_NEAR(a[i], line[i], 1e-9);
      EXPECT_NEAR(b[i], 3.0, 1e-12);
    }
  }
  EXPECT_THROW(adaptive_smooth({1, 2}, SmoothingConfig{{2.0, 1.0}}), ConfigError);
}

TEST(Render, HandExamplesAndBounds) {
  FeatureSequence v;
  v.frames = {{0.0}, {1.0}};
  EXPECT_EQ(render_video_warp(v, {0, 1}).frames, v.frames);
  EXPECT_EQ(render_video_warp(v, {0, 0, 1}).frames, (std::vector<std::vector<double>>{{0.0}, {0.0}, {1.0}}));
  EXPECT_THROW(render_video_warp(v, {0, 2}), std::out_of_range);
  EXPECT_THROW(render_video_warp(v, {-1}), std::out_of_range);
}

TEST(Render, GroundTruthPathRestoresOriginalOrder) {
  std::mt19937_64 rng(6);
  FeatureSequence video;
  for (int i = 0; i < 120; ++i) video.frames.push_back({static_cast<double>(i)});
  for (int t = 0; t < 50; ++t) {
    const EditScript s = sample_edit_script(rng(), 120, 0.2, 0.2);
    const EditedStream edited = apply_edit(video, s);
    const LabelMap lm = build_label_map(edited.provenance, 100, 0, 0, edited.frames.size(), 120);
    std::vector<int> path;
    for (int l : lm.labels)
      if (l != LabelMap::kOutOfBounds) path.push_back(l);
    const FeatureSequence out = render_video_warp(edited.frames, path);
    std::set<int> survivors(edited.provenance.begin(), edited.provenance.end()), seen;
    for (int k = 0; k < out.size(); ++k) {
      if (k > 0) ASSERT_GE(out.frames[k][0], out.frames[k - 1][0]);
      seen.insert(static_cast<int>(out.frames[k][0]));
    }
    for (int o : survivors)
      if (o <= out.frames.back()[0]) ASSERT_TRUE(seen.count(o)) << o;
  }
}

TEST(GlobalShift, ModeOfOffsets) {
  std::vector<std::map<int, int>> votes(20);
  for (int k = 0; k < 20; ++k) votes[k][k] = 1;
  EXPECT_EQ(estimate_global_shift(table_of(votes)), 0);
  for (int k = 0; k < 20; ++k) votes[k] = {{k + 7, 2}};
  EXPECT_EQ(estimate_global_shift(table_of(votes)), 7);
  for (int k = 0; k < 14; ++k) votes[k] = {{k < 10 ? k + 3 : k - 2, 1}};
  votes.resize(14);
  EXPECT_EQ(estimate_global_shift(table_of(votes)), 3);
  std::vector<std::map<int, int>> tie{{{2, 1}}, {{-1, 1}}};
  EXPECT_EQ(estimate_global_shift(table_of(tie)), -2);
  std::vector<std::map<int, int>> far{{{40, 1}}};
  EXPECT_EQ(estimate_global_shift(table_of(far)), 25);
}

TEST(Alignment, PipelineProducesDensePath) {
  const AlignerParams model = tiny_model(7);
  std::mt19937_64 rng(8);
  const auto audio = oracle::random_sequence(rng, 60, 5), video = oracle::random_sequence(rng, 90, 4);
  const AlignmentResult a = align_video_to_audio(audio, video, model);
  ASSERT_EQ(a.smoothed.path.size(), 60u);
  for (int k = 0; k < 60; ++k) {
    ASSERT_GE(a.smoothed.path[k], 0);
    ASSERT_LT(a.smoothed.path[k], 90);
    if (k > 0) ASSERT_GE(a.smoothed.path[k], a.smoothed.path[k - 1]);
  }
  EXPECT_EQ(align_video_to_audio(audio, video, model).smoothed.path, a.smoothed.path);

  // Audio-warp direction: video frames query audio keys; the path covers every video frame.
  const auto long_audio = oracle::random_sequence(rng, 120, 5), short_video = oracle::random_sequence(rng, 40, 4);
  const AlignmentResult b = align_audio_to_video(long_audio, short_video, model);
  ASSERT_EQ(b.smoothed.path.size(), 40u);
  for (int v : b.smoothed.path) ASSERT_LT(v, 120);
}

TEST(PathFiles, RoundTripAndMalformedInput) {
  const std::vector<int> p{3, kGap, 5, 5, 9};
  std::stringstream ss;
  write_path(ss, p);
  EXPECT_EQ(ss.str().substr(0, 23), "CHRONOPATH v1 count=5\n3");
  EXPECT_EQ(read_path(ss), p);

  std::istringstream bad_header("CHRONOFEAT v1 count=1\n3\n");
  EXPECT_THROW(read_path(bad_header), UnsupportedFormatError);
  std::istringstream short_body("CHRONOPATH v1 count=3\n3\n4\n");
  EXPECT_THROW(read_path(short_body), IoError);
  std::istringstream junk("CHRONOPATH v1 count=1\nx\n");
  EXPECT_THROW(read_path(junk), IoError);

  const auto file = std::filesystem::temp_directory_path() / "chronoalign_path_test.txt";
  save_path(file, p);
  EXPECT_EQ(load_path(file), p);
  std::filesystem::remove(file);
  EXPECT_THROW(load_path(file), IoError);
}
