#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "chronoalign/feature_sequence.hpp"

namespace chronoalign {

/// Canonical window geometry: 25 audio frames matched against 75 video frames,
/// audio centered (offset 25), global shifts and per-frame drift within 25.
inline constexpr int kAudioWindow = 25;
inline constexpr int kVideoWindow = 75;
inline constexpr int kWindowOffset = 25;
inline constexpr int kMaxShift = 25;

struct LatentScript {
  std::vector<int> states;
  int n_symbols = 0;
};

/// Dataset-level linear maps from one-hot latent states to each modality.
struct MixingMatrices {
  std::vector<std::vector<double>> video;  // video_dim x n_symbols
  std::vector<std::vector<double>> audio;  // audio_dim x n_symbols

  /// Entries drawn i.i.d. N(0, 1).
  static MixingMatrices random(std::uint64_t seed, int n_symbols, int video_dim, int audio_dim);
  static MixingMatrices identity(int n_symbols);
  int n_symbols() const { return video.empty() ? 0 : static_cast<int>(video.front().size()); }
};

struct SyntheticPair {
  FeatureSequence video;
  FeatureSequence audio;
  LatentScript script;
};

/// Markov latent script of length m (stay with probability self_transition,
/// otherwise jump to a uniformly drawn different symbol); each frame is the
/// matching mixing column plus N(0, noise_sigma^2) noise, per modality.
SyntheticPair gen_synthetic_pair(std::uint64_t seed, int m, const MixingMatrices& mixing, double noise_sigma,
                                 double self_transition = 0.7);

enum class EditKind { kDrop, kDuplicate };

struct EditAction {
  EditKind kind;
  int source_index;
  friend bool operator==(const EditAction&, const EditAction&) = default;
};

/// Drops and duplications of an original stream of source_length frames.
/// Actions are keyed by original index; a frame may be duplicated several
/// times but not both dropped and duplicated.
struct EditScript {
  std::vector<EditAction> actions;
  int source_length = 0;
  int max_displacement = 25;
  int max_occurrences = 4;

  /// Occurrence count of every original frame in the edited stream.
  std::vector<int> occurrences() const;
  /// Empty when valid, otherwise a description of the first violation.
  std::string violation() const;
};

/// Left-to-right sampling with rejection: each frame draws drop (p_drop),
/// duplicate (p_dup; repeated for further copies) or keep; candidates that
/// would break the displacement or occurrence bound are redrawn.
EditScript sample_edit_script(std::uint64_t seed, int m, double p_drop, double p_dup, int max_displacement = 25,
                              int max_occurrences = 4);

struct EditedStream {
  FeatureSequence frames;
  std::vector<int> provenance;  // original index of each edited frame
};

/// Applies the script and keeps at most max_length frames (-1 keeps all).
EditedStream apply_edit(const FeatureSequence& video, const EditScript& script, int max_length = -1);
/// Provenance of the edited stream without touching any features.
std::vector<int> edit_provenance(const EditScript& script);

struct LabelMap {
  static constexpr int kOutOfBounds = -1;
  std::vector<int> labels;

  int valid_count() const;
};

/// Audio frame k targets original frame k + global_shift + window_offset.
/// Survivors map to their last occurrence, dropped frames to the closest
/// survivor (ties toward the later frame). Targets outside
/// [0, source_length) or positions >= window_length become kOutOfBounds.
/// source_length and window_length default to the provenance extent.
LabelMap build_label_map(const std::vector<int>& provenance, int n_audio_frames, int global_shift,
                         int window_offset = kWindowOffset, int window_length = -1, int source_length = -1);

struct ExampleOptions {
  double p_drop = 0.05;
  double p_dup = 0.05;
  bool shift_only = false;  // no drops or duplications
  int max_shift = kMaxShift;
};

struct TrainingExample {
  FeatureSequence audio;  // kAudioWindow frames
  FeatureSequence video;  // kVideoWindow frames
  LabelMap labels;
  int global_shift = 0;
  EditScript script;
};

/// Needs pair length >= kVideoWindow + kMaxShift. The edit script acts on the
/// first kVideoWindow + kMaxShift original frames, the result is truncated to
/// kVideoWindow, and audio frame k is original frame k + 25 + shift.
TrainingExample make_training_example(const SyntheticPair& pair, std::uint64_t seed, const ExampleOptions& opts);
/// Same with a fixed shift and script.
TrainingExample make_training_example(const SyntheticPair& pair, int global_shift, const EditScript& script);

/// Full-length streams for sequence-level alignment: video of `length`
/// frames (edited), audio of `length` frames whose frame k is original k + shift.
struct SequenceExample {
  FeatureSequence audio;
  FeatureSequence video;
  LabelMap labels;
  int global_shift = 0;
};

/// Pair length must be >= length + 2 * kMaxShift.
SequenceExample make_sequence_example(const SyntheticPair& pair, int length, int global_shift,
                                      const EditScript& script);

struct DatasetConfig {
  std::uint64_t dataset_seed = 1;
  int train_count = 2000;
  int val_count = 200;
  int test_count = 200;
  int n_symbols = 24;
  int video_dim = 16;
  int audio_dim = 20;
  double noise_sigma = 0.1;
  double self_transition = 0.7;
  double p_drop = 0.05;
  double p_dup = 0.05;
  int pair_length = kVideoWindow + kMaxShift;

  void validate() const;
};

enum class Split { kTrain, kVal, kTest };

/// Materializes examples on demand from (dataset_seed, global index).
class SyntheticDataset {
 public:
  explicit SyntheticDataset(DatasetConfig cfg);

  const DatasetConfig& config() const { return cfg_; }
  const MixingMatrices& mixing() const { return mixing_; }
  int count(Split s) const;
  /// Global example index range [first, last) of a split.
  std::pair<int, int> range(Split s) const;

  SyntheticPair pair(int global_index, int length) const;
  TrainingExample example(Split s, int index, bool shift_only = false) const;
  /// Long-stream example of `length` frames for sequence-level alignment,
  /// drawn from the same pair seed as example(s, index).
  SequenceExample sequence(Split s, int index, int length, bool shift_only = false) const;

  nlohmann::json manifest() const;
  static DatasetConfig from_manifest(const nlohmann::json& j);

 private:
  DatasetConfig cfg_;
  MixingMatrices mixing_;
};

}  // namespace chronoalign
