#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chronoalign/feature_sequence.hpp"
#include "chronoalign/synth.hpp"

namespace chronoalign {

/// Row-major n x m matrix of nonnegative finite costs.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  CostMatrix() = default;
  CostMatrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  static CostMatrix from_rows(const std::vector<std::vector<double>>& rows);

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  CostMatrix transposed() const;
  void validate() const;
};

/// Euclidean distance between every frame of a and every frame of b.
CostMatrix pairwise_cost(const FeatureSequence& a, const FeatureSequence& b);

struct DtwResult {
  std::vector<std::pair<int, int>> path;  // (row, col) from (0,0) to (n-1,m-1)
  double total_cost = 0.0;
};

/// Classic boundary-anchored DTW; the backtrack prefers the diagonal on ties,
/// then the vertical step.
DtwResult dtw(const CostMatrix& cost);

struct DtaResult {
  std::vector<int> path;  // video index per audio frame
  double total_cost = 0.0;
};

/// Shortest non-decreasing path with per-step jump <= max_jump, one node per
/// (audio frame, video index). Dijkstra with (distance, row, col) ordering so
/// equal-cost nodes settle smallest column first.
DtaResult modified_dta(const CostMatrix& cost, int max_jump = 5);

struct ShiftErrors {
  double mean = 0.0;
  int max = 0;
  double top1 = 0.0;
  int frames = 0;  // frames with a ground-truth label
};

/// Per-frame |pred - truth| over frames whose truth is not the sentinel.
ShiftErrors shift_error_metrics(const std::vector<int>& predicted, const std::vector<int>& truth);

struct EditStats {
  int dup = 0;
  int del = 0;
  int conseq = 0;
  int unique = 0;
  bool operator==(const EditStats&) const = default;
};

EditStats edit_statistics(const std::vector<int>& path);

/// Sample Pearson correlation. Throws NumericError on zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Per-frame cepstral distance without the 10/ln10 factor: sqrt(2 sum_{i>=1} d_i^2).
double cepstral_distance(const std::vector<double>& a, const std::vector<double>& b);
/// Mel cepstral distortion in dB over frame-aligned sequences (c0 excluded).
double mcd(const FeatureSequence& ref, const FeatureSequence& test);
/// MCD after DTW: total cost along the optimal path divided by path length.
double mcd_dtw(const FeatureSequence& ref, const FeatureSequence& test);

struct MetricReport {
  double mean_shift_error = 0.0;
  double max_shift_error = 0.0;
  double top1_accuracy = 0.0;
  double per_video_accuracy = 0.0;
  double dup = 0.0;
  double del = 0.0;
  double conseq = 0.0;
  double unique = 0.0;
  double corr_x = 0.0;
  double corr_y = 0.0;
  double mcd = 0.0;
  double mcd_dtw = 0.0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  void validate() const;
};

/// One evaluated sequence, for the per-sequence CSV.
struct SequenceMetrics {
  std::string id;
  ShiftErrors shift;
  bool shift_exact = false;
  EditStats edits;
};

void write_metrics_csv(std::ostream& out, const std::vector<SequenceMetrics>& rows);
void write_metric_report(const std::filesystem::path& path, const MetricReport& report);

}  // namespace chronoalign
