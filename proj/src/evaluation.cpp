#include "chronoalign/evaluation.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "chronoalign/error.hpp"

namespace chronoalign {

namespace {

template <typename F>
void parallel_for(int count, int threads, F&& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

// Frame-weighted merge of per-example errors.
ShiftErrors merge(const std::vector<ShiftErrors>& parts) {
  ShiftErrors out;
  double err = 0.0, exact = 0.0;
  for (const auto& p : parts) {
    out.frames += p.frames;
    err += p.mean * p.frames;
    exact += p.top1 * p.frames;
    out.max = std::max(out.max, p.max);
  }
  if (out.frames > 0) {
    out.mean = err / out.frames;
    out.top1 = exact / out.frames;
  }
  return out;
}

}  // namespace

CostMatrix encoder_cost(const AlignerParams& params, const FeatureSequence& queries, const FeatureSequence& keys) {
  ad::Graph g(/*record=*/false);
  const ad::Tensor rho =
      distance_features(encode_inputs(g, const_cast<AlignerParams&>(params), queries, keys)).value();
  CostMatrix c(rho.rows(), rho.cols());
  for (int r = 0; r < rho.rows(); ++r)
    for (int q = 0; q < rho.cols(); ++q) c(r, q) = rho(r, q);
  return c;
}

WindowComparison compare_on_windows(const AlignerParams& params, const SyntheticDataset& data, Split split,
                                    int max_jump, int max_examples, int threads) {
  int count = data.count(split);
  if (max_examples >= 0) count = std::min(count, max_examples);
  if (count == 0) throw ConfigError("compare_on_windows: empty split");
  std::vector<ShiftErrors> model(count), baseline(count);
  parallel_for(count, threads, [&](int i) {
    const TrainingExample ex = data.example(split, i);
    model[i] = shift_error_metrics(predict_window(params, ex.audio, ex.video).predictions, ex.labels.labels);
    baseline[i] = shift_error_metrics(modified_dta(encoder_cost(params, ex.audio, ex.video), max_jump).path,
                                      ex.labels.labels);
  });
  return {merge(model), merge(baseline)};
}

GlobalShiftEvaluation evaluate_global_shift(const AlignerParams& params, const SyntheticDataset& data, Split split,
                                            int count, int length, const WindowOptions& opts) {
  if (count < 1 || count > data.count(split))
    throw ConfigError("evaluate_global_shift: count must lie in [1, split size]");
  GlobalShiftEvaluation out;
  out.truth.resize(count);
  out.estimate.resize(count);
  WindowOptions inner = opts;
  inner.threads = 1;
  parallel_for(count, opts.threads, [&](int i) {
    const SequenceExample seq = data.sequence(split, i, length, /*shift_only=*/true);
    out.truth[i] = seq.global_shift;
    out.estimate[i] = estimate_global_shift(seq.audio, seq.video, params, inner);
  });
  int exact = 0, err_sum = 0;
  for (int i = 0; i < count; ++i) {
    const int e = std::abs(out.estimate[i] - out.truth[i]);
    exact += e == 0;
    err_sum += e;
    out.max_error = std::max(out.max_error, e);
  }
  out.exact_fraction = static_cast<double>(exact) / count;
  out.mean_error = static_cast<double>(err_sum) / count;
  return out;
}

}  // namespace chronoalign
