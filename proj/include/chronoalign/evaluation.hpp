#pragma once

#include <vector>

#include "chronoalign/aligner.hpp"
#include "chronoalign/inference.hpp"
#include "chronoalign/metrics.hpp"
#include "chronoalign/synth.hpp"

namespace chronoalign {

/// Distances between the learned audio and video embeddings of one window,
/// as a cost matrix for the classical aligners.
CostMatrix encoder_cost(const AlignerParams& params, const FeatureSequence& queries, const FeatureSequence& keys);

struct WindowComparison {
  ShiftErrors model;     // free-running decoder
  ShiftErrors baseline;  // modified_dta over encoder_cost
};

/// Per-frame errors of the learned model and the modified_dta baseline on the
/// first max_examples windows of a split (-1: all).
WindowComparison compare_on_windows(const AlignerParams& params, const SyntheticDataset& data, Split split,
                                    int max_jump = 5, int max_examples = -1, int threads = 1);

struct GlobalShiftEvaluation {
  std::vector<int> truth;
  std::vector<int> estimate;
  double exact_fraction = 0.0;
  double mean_error = 0.0;
  int max_error = 0;
};

/// estimate_global_shift on `count` shift-only sequences of `length` frames.
GlobalShiftEvaluation evaluate_global_shift(const AlignerParams& params, const SyntheticDataset& data, Split split,
                                            int count, int length, const WindowOptions& opts = {});

}  // namespace chronoalign
