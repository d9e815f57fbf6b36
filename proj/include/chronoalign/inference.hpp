#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "chronoalign/aligner.hpp"
#include "chronoalign/feature_sequence.hpp"

namespace chronoalign {

inline constexpr int kGap = -1;

/// Votes per query frame: absolute key index -> count, plus the windows that
/// covered the frame.
struct VoteTable {
  std::vector<std::map<int, int>> votes;
  std::vector<std::vector<int>> windows;  // window start of every vote cast

  int frames() const { return static_cast<int>(votes.size()); }
  int total_votes(int frame) const;
  nlohmann::json to_json() const;
};

struct WindowOptions {
  int stride = 10;
  bool swap_roles = false;  // queries are video frames, keys audio frames
  int threads = 1;
};

/// Start of the key window for a query window starting at s: centered
/// (s - (m - n) / 2) and shifted inward at the sequence edges.
int key_window_start(int s, int n, int m, int key_length);

/// Slides the model over the queries with the given stride. Windows start at
/// 0, stride, ... while a full window of n queries fits.
VoteTable windowed_predict(const FeatureSequence& queries, const FeatureSequence& keys, const AlignerParams& params,
                           const WindowOptions& opts = {});

/// Indices with the maximal vote count per frame, ascending; empty when the
/// frame got no vote.
std::vector<std::vector<int>> candidate_sets(const VoteTable& votes);

/// Largest number of frames assigned a candidate with non-decreasing indices.
/// Among optimal assignments the lexicographically smallest per-frame
/// sequence wins, a gap counting as larger than any index.
std::vector<int> longest_monotone_match(const std::vector<std::vector<int>>& candidates);

/// Walks the path keeping the last accepted index; entries that would go
/// back become gaps. When candidates are given, a gap frame is filled with
/// its smallest candidate that fits between the neighbouring accepted indices.
std::vector<int> resume_after_break(const std::vector<int>& path,
                                    const std::vector<std::vector<int>>& candidates = {});

struct SmoothingConfig {
  std::vector<double> sigma_grid{0.5, 1.0, 2.0, 4.0, 8.0};
  double criterion_threshold = 1.0;  // max |second difference|
  double truncation = 4.0;           // kernel half-width in sigmas

  void validate() const;
  nlohmann::json to_json() const;
  static SmoothingConfig from_json(const nlohmann::json& j);
};

struct SmoothResult {
  std::vector<int> path;  // dense, non-decreasing
  double sigma = 0.0;     // 0 when no smoothing ran
  bool fallback = false;  // fewer than two matches
};

/// Gaussian smoothing of a real-valued curve with point reflection at both
/// ends (linear curves pass through unchanged).
std::vector<double> gaussian_smooth(const std::vector<double>& curve, double sigma, double truncation = 4.0);
double max_abs_second_difference(const std::vector<double>& curve);

/// Gap filling, adaptive smoothing, rounding, running max, and edge padding
/// (leading frames take the first match, trailing frames the last). With
/// fewer than two matches the result is the identity path shifted through
/// the single match (if any) and `fallback` is set.
SmoothResult adaptive_smooth(const std::vector<int>& path, const SmoothingConfig& cfg = {});

/// Output frame k is video frame path[k].
FeatureSequence render_video_warp(const FeatureSequence& video, const std::vector<int>& path);

/// Mode of (candidate index - query index) over all voted frames, ties to the
/// smaller |shift| and then the smaller value, clamped to [-25, 25].
int estimate_global_shift(const VoteTable& votes, int max_shift = 25);
int estimate_global_shift(const FeatureSequence& audio, const FeatureSequence& video, const AlignerParams& params,
                          const WindowOptions& opts = {});

struct AlignmentResult {
  VoteTable votes;
  std::vector<std::vector<int>> candidates;
  std::vector<int> raw_path;  // with gaps
  SmoothResult smoothed;
};

/// windowed_predict -> candidate_sets -> longest_monotone_match ->
/// resume_after_break -> adaptive_smooth. The path maps every query frame to
/// a key index.
AlignmentResult align_sequences(const FeatureSequence& queries, const FeatureSequence& keys,
                                const AlignerParams& params, const WindowOptions& opts = {},
                                const SmoothingConfig& smoothing = {});

/// Audio frame -> video frame.
AlignmentResult align_video_to_audio(const FeatureSequence& audio, const FeatureSequence& video,
                                     const AlignerParams& params, WindowOptions opts = {},
                                     const SmoothingConfig& smoothing = {});
/// Video frame -> audio frame, same checkpoint with the encoders swapped.
AlignmentResult align_audio_to_video(const FeatureSequence& audio, const FeatureSequence& video,
                                     const AlignerParams& params, WindowOptions opts = {},
                                     const SmoothingConfig& smoothing = {});

// Path file: "CHRONOPATH v1 count=<n>" then one integer per line, -1 for gaps.
void write_path(std::ostream& os, const std::vector<int>& path);
std::vector<int> read_path(std::istream& is);
void save_path(const std::filesystem::path& file, const std::vector<int>& path);
std::vector<int> load_path(const std::filesystem::path& file);

}  // namespace chronoalign
