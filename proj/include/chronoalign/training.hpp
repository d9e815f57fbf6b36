#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chronoalign/ad/optim.hpp"
#include "chronoalign/aligner.hpp"
#include "chronoalign/synth.hpp"

namespace chronoalign {

/// Phase-1 objective: contrastive matching on encoder distances (trains the
/// frame encoders only, see forward_distance_matching) or the full decoder
/// pipeline.
enum class PretrainLoss { kContrastive, kPipeline };

struct TrainConfig {
  int phase1_epochs = 3;
  int phase2_epochs = 22;
  int batch_size = 4;
  ad::AdamConfig adam{};  // lr 1e-3, betas (0.5, 0.999)
  double clip_norm = 5.0;
  double jitter_sigma = 0.05;   // additive Gaussian noise on video features
  bool retain_head_after_phase1 = true;
  PretrainLoss pretrain_loss = PretrainLoss::kContrastive;
  double contrastive_margin = 1.0;
  bool free_running = true;     // phase 2 decodes with its own predictions; false: teacher forcing
  // Phase-2 scheduled sampling: the feed-back probability rises linearly from
  // 0 in the first epoch to this value in the last. Ignored when free_running.
  double scheduled_sampling = 0.0;
  int max_train_examples = -1;  // -1: whole split
  int max_val_examples = -1;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }
};

enum class Phase { kPretrain = 1, kFull = 2 };

struct EpochLog {
  int epoch = 0;  // 1-based within the phase
  Phase phase = Phase::kFull;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
};

struct EvalSummary {
  double loss = 0.0;            // mean per labelled frame, free-running decode
  double top1 = 0.0;            // fraction of labelled frames predicted exactly
  double mean_shift_error = 0.0;
  int max_shift_error = 0;
  int frames = 0;
};

/// Free-running evaluation of a split (first max_examples examples, -1: all).
/// With a contrastive margin the loss is the contrastive objective and the
/// prediction the nearest key frame (see forward_distance_matching).
EvalSummary evaluate(const AlignerParams& params, const SyntheticDataset& data, Split split, bool shift_only,
                     int max_examples = -1, int threads = 1, std::optional<double> contrastive_margin = {});

/// Mean loss of one batch; gradients are summed into the parameters (divided
/// by the labelled-frame count of the batch). feed_prediction_prob 0 is pure
/// teacher forcing, 1 is free-running decoding.
double accumulate_batch_gradients(AlignerParams& params, const std::vector<TrainingExample>& batch, bool training,
                                  std::uint64_t dropout_seed, double feed_prediction_prob = 0.0, int threads = 1,
                                  std::optional<double> contrastive_margin = {});

/// Resumable training state. Epochs are numbered globally: phase-1 epochs
/// first, then phase-2 epochs.
class Trainer {
 public:
  Trainer(AlignerParams params, const SyntheticDataset& data, TrainConfig cfg);

  /// Runs the remaining epochs of both phases. on_epoch is called after every
  /// epoch (e.g. to write logs and checkpoints).
  void run(const std::function<void(const EpochLog&, const Trainer&)>& on_epoch = {});
  /// Feed-back probability used by the given global epoch.
  double feed_prediction_prob(int epoch_index) const;
  /// One epoch of the current phase; returns its log.
  EpochLog run_epoch();
  bool done() const;

  const AlignerParams& params() const { return params_; }
  AlignerParams& params() { return params_; }
  const std::vector<EpochLog>& history() const { return history_; }
  int epochs_completed() const { return epochs_completed_; }
  Phase current_phase() const;

  /// Parameters, optimizer moments and progress counters.
  ad::Checkpoint state_checkpoint() const;
  /// Restores a state written by state_checkpoint().
  void restore(const ad::Checkpoint& ckpt);

 private:
  AlignerParams params_;
  const SyntheticDataset& data_;
  TrainConfig cfg_;
  ad::AdamState adam_;
  int epochs_completed_ = 0;
  std::vector<EpochLog> history_;
};

/// Phase 1 alone: trains the whole pipeline on shift-only examples. Without
/// retain_head_after_phase1 everything except the frame encoders is
/// re-initialized afterwards. epochs == 0 returns the input unchanged.
AlignerParams train_phase1(AlignerParams params, const SyntheticDataset& data, int epochs, TrainConfig cfg);

/// Phase 2 alone: the full synthetic examples, batch cfg.batch_size.
AlignerParams train_phase2(AlignerParams params, const SyntheticDataset& data, int epochs, TrainConfig cfg,
                           std::vector<EpochLog>* log = nullptr);

}  // namespace chronoalign
