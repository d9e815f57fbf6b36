#include "chronoalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "chronoalign/error.hpp"
#include "chronoalign/seed.hpp"

namespace chronoalign {

// ---------------------------------------------------------------------------
// Pair generation

MixingMatrices MixingMatrices::random(std::uint64_t seed, int n_symbols, int video_dim, int audio_dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MixingMatrices mx;
  mx.video.assign(video_dim, std::vector<double>(n_symbols));
  mx.audio.assign(audio_dim, std::vector<double>(n_symbols));
  for (auto& row : mx.video)
    for (double& v : row) v = normal(rng);
  for (auto& row : mx.audio)
    for (double& v : row) v = normal(rng);
  return mx;
}

MixingMatrices MixingMatrices::identity(int n_symbols) {
  MixingMatrices mx;
  mx.video.assign(n_symbols, std::vector<double>(n_symbols, 0.0));
  for (int i = 0; i < n_symbols; ++i) mx.video[i][i] = 1.0;
  mx.audio = mx.video;
  return mx;
}

SyntheticPair gen_synthetic_pair(std::uint64_t seed, int m, const MixingMatrices& mixing, double noise_sigma,
                                 double self_transition) {
  const int n_symbols = mixing.n_symbols();
  if (m < kVideoWindow) throw std::invalid_argument("gen_synthetic_pair: need at least 75 frames");
  if (mixing.video.size() < 4 || mixing.audio.size() < 4)
    throw std::invalid_argument("gen_synthetic_pair: feature dims must be >= 4");
  if (n_symbols < 2) throw std::invalid_argument("gen_synthetic_pair: need at least 2 symbols");
  if (noise_sigma < 0.0 || self_transition < 0.0 || self_transition > 1.0)
    throw std::invalid_argument("gen_synthetic_pair: invalid noise or transition probability");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> first(0, n_symbols - 1);
  std::uniform_int_distribution<int> other(0, n_symbols - 2);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticPair pair;
  pair.script.n_symbols = n_symbols;
  pair.script.states.resize(m);
  int state = first(rng);
  for (int j = 0; j < m; ++j) {
    if (j > 0 && unit(rng) >= self_transition) {
      const int next = other(rng);
      state = next >= state ? next + 1 : next;
    }
    pair.script.states[j] = state;
  }

  auto render = [&](const std::vector<std::vector<double>>& mix) {
    FeatureSequence seq;
    seq.frame_rate = 25.0;
    seq.frames.reserve(m);
    for (int j = 0; j < m; ++j) {
      std::vector<double> fr(mix.size());
      for (std::size_t r = 0; r < mix.size(); ++r) fr[r] = mix[r][pair.script.states[j]] + noise_sigma * noise(rng);
      seq.frames.push_back(std::move(fr));
    }
    return seq;
  };
  pair.video = render(mixing.video);
  pair.audio = render(mixing.audio);
  return pair;
}

// ---------------------------------------------------------------------------
// Edit scripts

std::vector<int> EditScript::occurrences() const {
  std::vector<int> occ(source_length, 1);
  for (const auto& a : actions) {
    if (a.source_index < 0 || a.source_index >= source_length)
      throw std::invalid_argument("edit action index " + std::to_string(a.source_index) + " out of range");
    if (a.kind == EditKind::kDrop) {
      if (occ[a.source_index] != 1) throw std::invalid_argument("frame dropped twice or dropped and duplicated");
      occ[a.source_index] = 0;
    } else {
      if (occ[a.source_index] == 0) throw std::invalid_argument("frame dropped and duplicated");
      ++occ[a.source_index];
    }
  }
  return occ;
}

std::string EditScript::violation() const {
  std::vector<int> occ;
  try {
    occ = occurrences();
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  int pos = 0;
  for (int i = 0; i < source_length; ++i) {
    if (occ[i] > max_occurrences)
      return "frame " + std::to_string(i) + " occurs " + std::to_string(occ[i]) + " times";
    for (int c = 0; c < occ[i]; ++c, ++pos)
      if (std::abs(pos - i) > max_displacement)
        return "frame " + std::to_string(i) + " displaced to " + std::to_string(pos);
  }
  return {};
}

EditScript sample_edit_script(std::uint64_t seed, int m, double p_drop, double p_dup, int max_displacement,
                              int max_occurrences) {
  if (p_drop < 0.0 || p_drop > 0.3 || p_dup < 0.0 || p_dup > 0.3)
    throw std::invalid_argument("sample_edit_script: probabilities must lie in [0, 0.3]");
  if (m < 0 || max_displacement < 0 || max_occurrences < 1)
    throw std::invalid_argument("sample_edit_script: invalid bounds");
  EditScript script;
  script.source_length = m;
  script.max_displacement = max_displacement;
  script.max_occurrences = max_occurrences;
  if (p_drop == 0.0 && p_dup == 0.0) return script;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // drift = edited position - original index of the next original frame.
  int drift = 0;
  for (int i = 0; i < m; ++i) {
    while (true) {
      const double u = unit(rng);
      if (u < p_drop) {
        if (std::abs(drift - 1) > max_displacement) continue;
        script.actions.push_back({EditKind::kDrop, i});
        --drift;
        break;
      }
      if (u < p_drop + p_dup) {
        if (max_occurrences < 2 || std::abs(drift + 1) > max_displacement) continue;
        int copies = 2;
        while (copies < max_occurrences && std::abs(drift + copies) <= max_displacement && unit(rng) < p_dup)
          ++copies;
        for (int c = 1; c < copies; ++c) script.actions.push_back({EditKind::kDuplicate, i});
        drift += copies - 1;
        break;
      }
      break;  // keep
    }
  }
  return script;
}

std::vector<int> edit_provenance(const EditScript& script) {
  const auto occ = script.occurrences();
  std::vector<int> prov;
  prov.reserve(script.source_length + script.actions.size());
  for (int i = 0; i < script.source_length; ++i)
    for (int c = 0; c < occ[i]; ++c) prov.push_back(i);
  return prov;
}

EditedStream apply_edit(const FeatureSequence& video, const EditScript& script, int max_length) {
  if (video.size() != script.source_length)
    throw std::invalid_argument("apply_edit: script is for " + std::to_string(script.source_length) +
                                " frames, stream has " + std::to_string(video.size()));
  EditedStream out;
  out.provenance = edit_provenance(script);
  if (max_length >= 0 && static_cast<int>(out.provenance.size()) > max_length) out.provenance.resize(max_length);
  out.frames.frame_rate = video.frame_rate;
  out.frames.frames.reserve(out.provenance.size());
  for (int o : out.provenance) out.frames.frames.push_back(video.frames[o]);
  return out;
}

// ---------------------------------------------------------------------------
// Labels

int LabelMap::valid_count() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != kOutOfBounds; }));
}

LabelMap build_label_map(const std::vector<int>& provenance, int n_audio_frames, int global_shift, int window_offset,
                         int window_length, int source_length) {
  int max_orig = -1;
  for (int o : provenance) max_orig = std::max(max_orig, o);
  if (source_length < 0) source_length = max_orig + 1;
  if (window_length < 0) window_length = static_cast<int>(provenance.size());

  // Last edited position of every surviving original frame.
  std::vector<int> last_pos(std::max(source_length, max_orig + 1), -1);
  for (int p = 0; p < static_cast<int>(provenance.size()); ++p) last_pos[provenance[p]] = p;

  LabelMap map;
  map.labels.assign(n_audio_frames, LabelMap::kOutOfBounds);
  for (int k = 0; k < n_audio_frames; ++k) {
    const int target = k + global_shift + window_offset;
    if (target < 0 || target >= source_length) continue;
    int pos = last_pos[target];
    if (pos < 0) {
      // Closest survivor; on equal distance the later frame wins.
      for (int d = 1; d < static_cast<int>(last_pos.size()); ++d) {
        const int later = target + d, earlier = target - d;
        if (later < static_cast<int>(last_pos.size()) && last_pos[later] >= 0) {
          pos = last_pos[later];
          break;
        }
        if (earlier >= 0 && last_pos[earlier] >= 0) {
          pos = last_pos[earlier];
          break;
        }
      }
    }
    if (pos >= 0 && pos < window_length) map.labels[k] = pos;
  }
  return map;
}

// ---------------------------------------------------------------------------
// Examples

TrainingExample make_training_example(const SyntheticPair& pair, int global_shift, const EditScript& script) {
  constexpr int kSegment = kVideoWindow + kMaxShift;
  if (pair.video.size() < kSegment || pair.audio.size() < kSegment)
    throw std::invalid_argument("make_training_example: pair shorter than " + std::to_string(kSegment) + " frames");
  if (std::abs(global_shift) > kMaxShift) throw std::invalid_argument("make_training_example: |shift| > 25");
  if (script.source_length != kSegment) throw std::invalid_argument("make_training_example: script length mismatch");

  TrainingExample ex;
  ex.global_shift = global_shift;
  ex.script = script;
  const FeatureSequence segment = pair.video.slice(0, kSegment);
  EditedStream edited = apply_edit(segment, script, kVideoWindow);
  if (edited.frames.size() < kVideoWindow) throw std::invalid_argument("make_training_example: edits left too few frames");
  ex.video = std::move(edited.frames);
  ex.audio = pair.audio.slice(kWindowOffset + global_shift, kAudioWindow);
  ex.labels = build_label_map(edit_provenance(script), kAudioWindow, global_shift, kWindowOffset, kVideoWindow, kSegment);
  return ex;
}

TrainingExample make_training_example(const SyntheticPair& pair, std::uint64_t seed, const ExampleOptions& opts) {
  constexpr int kSegment = kVideoWindow + kMaxShift;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift_dist(-opts.max_shift, opts.max_shift);
  const int shift = shift_dist(rng);
  EditScript script;
  // Drops at the very end of the segment can leave fewer than 75 frames;
  // such scripts are redrawn.
  do {
    const std::uint64_t script_seed = rng();
    script = opts.shift_only ? sample_edit_script(script_seed, kSegment, 0.0, 0.0)
                             : sample_edit_script(script_seed, kSegment, opts.p_drop, opts.p_dup);
  } while (static_cast<int>(edit_provenance(script).size()) < kVideoWindow);
  return make_training_example(pair, shift, script);
}

SequenceExample make_sequence_example(const SyntheticPair& pair, int length, int global_shift,
                                      const EditScript& script) {
  if (std::abs(global_shift) > kMaxShift) throw std::invalid_argument("make_sequence_example: |shift| > 25");
  const int segment = length + kMaxShift;
  if (pair.video.size() < length + 2 * kMaxShift || pair.audio.size() < length + 2 * kMaxShift)
    throw std::invalid_argument("make_sequence_example: pair too short");
  if (script.source_length != segment) throw std::invalid_argument("make_sequence_example: script length mismatch");

  SequenceExample ex;
  ex.global_shift = global_shift;
  EditedStream edited = apply_edit(pair.video.slice(kMaxShift, segment), script, length);
  if (edited.frames.size() < length) throw std::invalid_argument("make_sequence_example: edits left too few frames");
  ex.video = std::move(edited.frames);
  ex.audio = pair.audio.slice(kMaxShift + global_shift, length);
  ex.labels = build_label_map(edit_provenance(script), length, global_shift, 0, length, segment);
  return ex;
}

// ---------------------------------------------------------------------------
// Dataset

void DatasetConfig::validate() const {
  if (train_count <= 0 || val_count < 0 || test_count < 0)
    throw ConfigError("dataset: train_count must be positive and split counts non-negative");
  if (n_symbols < 2) throw ConfigError("dataset: n_symbols must be >= 2");
  if (video_dim < 4 || audio_dim < 4) throw ConfigError("dataset: feature dims must be >= 4");
  if (noise_sigma < 0.0) throw ConfigError("dataset: noise_sigma must be >= 0");
  if (self_transition < 0.0 || self_transition > 1.0) throw ConfigError("dataset: self_transition outside [0, 1]");
  if (p_drop < 0.0 || p_drop > 0.3 || p_dup < 0.0 || p_dup > 0.3)
    throw ConfigError("dataset: p_drop and p_dup must lie in [0, 0.3]");
  if (pair_length < kVideoWindow + kMaxShift) throw ConfigError("dataset: pair_length must be >= 100");
}

SyntheticDataset::SyntheticDataset(DatasetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  mixing_ = MixingMatrices::random(derive_seed(cfg_.dataset_seed, "mixing"), cfg_.n_symbols, cfg_.video_dim,
                                   cfg_.audio_dim);
}

int SyntheticDataset::count(Split s) const {
  switch (s) {
    case Split::kTrain: return cfg_.train_count;
    case Split::kVal: return cfg_.val_count;
    case Split::kTest: return cfg_.test_count;
  }
  return 0;
}

std::pair<int, int> SyntheticDataset::range(Split s) const {
  switch (s) {
    case Split::kTrain: return {0, cfg_.train_count};
    case Split::kVal: return {cfg_.train_count, cfg_.train_count + cfg_.val_count};
    case Split::kTest:
      return {cfg_.train_count + cfg_.val_count, cfg_.train_count + cfg_.val_count + cfg_.test_count};
  }
  return {0, 0};
}

SyntheticPair SyntheticDataset::pair(int global_index, int length) const {
  return gen_synthetic_pair(derive_seed(cfg_.dataset_seed, "pair", static_cast<std::uint64_t>(global_index)), length,
                            mixing_, cfg_.noise_sigma, cfg_.self_transition);
}

TrainingExample SyntheticDataset::example(Split s, int index, bool shift_only) const {
  if (index < 0 || index >= count(s)) throw std::out_of_range("dataset example index out of range");
  const int global = range(s).first + index;
  ExampleOptions opts;
  opts.p_drop = cfg_.p_drop;
  opts.p_dup = cfg_.p_dup;
  opts.shift_only = shift_only;
  return make_training_example(pair(global, cfg_.pair_length),
                               derive_seed(cfg_.dataset_seed, "example", static_cast<std::uint64_t>(global)), opts);
}

SequenceExample SyntheticDataset::sequence(Split s, int index, int length, bool shift_only) const {
  if (index < 0 || index >= count(s)) throw std::out_of_range("dataset sequence index out of range");
  const int global = range(s).first + index;
  std::mt19937_64 rng(derive_seed(cfg_.dataset_seed, "sequence", static_cast<std::uint64_t>(global)));
  std::uniform_int_distribution<int> shift_dist(-kMaxShift, kMaxShift);
  const int shift = shift_dist(rng);
  const int segment = length + kMaxShift;
  EditScript script;
  do {
    const std::uint64_t script_seed = rng();
    script = shift_only ? sample_edit_script(script_seed, segment, 0.0, 0.0)
                        : sample_edit_script(script_seed, segment, cfg_.p_drop, cfg_.p_dup);
  } while (static_cast<int>(edit_provenance(script).size()) < length);
  return make_sequence_example(pair(global, length + 2 * kMaxShift), length, shift, script);
}

nlohmann::json SyntheticDataset::manifest() const {
  nlohmann::json j;
  j["format"] = "chronoalign-dataset-v1";
  j["dataset_seed"] = cfg_.dataset_seed;
  j["counts"] = {{"train", cfg_.train_count}, {"val", cfg_.val_count}, {"test", cfg_.test_count}};
  j["dims"] = {{"video", cfg_.video_dim}, {"audio", cfg_.audio_dim}};
  j["n_symbols"] = cfg_.n_symbols;
  j["noise_sigma"] = cfg_.noise_sigma;
  j["self_transition"] = cfg_.self_transition;
  j["p_drop"] = cfg_.p_drop;
  j["p_dup"] = cfg_.p_dup;
  j["pair_length"] = cfg_.pair_length;
  j["window"] = {{"audio", kAudioWindow}, {"video", kVideoWindow}, {"offset", kWindowOffset}};
  auto split = [&](Split s) {
    auto [a, b] = range(s);
    return nlohmann::json{{"first", a}, {"last", b}};
  };
  j["splits"] = {{"train", split(Split::kTrain)}, {"val", split(Split::kVal)}, {"test", split(Split::kTest)}};
  return j;
}

DatasetConfig SyntheticDataset::from_manifest(const nlohmann::json& j) {
  try {
    DatasetConfig c;
    c.dataset_seed = j.at("dataset_seed").get<std::uint64_t>();
    c.train_count = j.at("counts").at("train").get<int>();
    c.val_count = j.at("counts").at("val").get<int>();
    c.test_count = j.at("counts").at("test").get<int>();
    c.video_dim = j.at("dims").at("video").get<int>();
    c.audio_dim = j.at("dims").at("audio").get<int>();
    c.n_symbols = j.at("n_symbols").get<int>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.self_transition = j.at("self_transition").get<double>();
    c.p_drop = j.at("p_drop").get<double>();
    c.p_dup = j.at("p_dup").get<double>();
    c.pair_length = j.at("pair_length").get<int>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset manifest: ") + e.what());
  }
}

}  // namespace chronoalign
