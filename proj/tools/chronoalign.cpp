// chronoalign: dataset generation, training, alignment, evaluation and plots.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chronoalign/ad/checkpoint.hpp"
#include "chronoalign/audio.hpp"
#include "chronoalign/error.hpp"
#include "chronoalign/evaluation.hpp"
#include "chronoalign/inference.hpp"
#include "chronoalign/metrics.hpp"
#include "chronoalign/seed.hpp"
#include "chronoalign/synth.hpp"
#include "chronoalign/training.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chronoalign;

namespace {

constexpr int kExitConfig = 2, kExitIo = 3, kExitNumeric = 4;

// ---------------------------------------------------------------------------
// Run configuration

json dataset_to_json(const DatasetConfig& d) {
  return {{"train_count", d.train_count}, {"val_count", d.val_count},     {"test_count", d.test_count},
          {"n_symbols", d.n_symbols},     {"video_dim", d.video_dim},     {"audio_dim", d.audio_dim},
          {"noise_sigma", d.noise_sigma}, {"self_transition", d.self_transition}, {"p_drop", d.p_drop},
          {"p_dup", d.p_dup},             {"pair_length", d.pair_length}};
}

DatasetConfig dataset_from_json(const json& j, DatasetConfig d) {
  d.train_count = j.value("train_count", d.train_count);
  d.val_count = j.value("val_count", d.val_count);
  d.test_count = j.value("test_count", d.test_count);
  d.n_symbols = j.value("n_symbols", d.n_symbols);
  d.video_dim = j.value("video_dim", d.video_dim);
  d.audio_dim = j.value("audio_dim", d.audio_dim);
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  d.self_transition = j.value("self_transition", d.self_transition);
  d.p_drop = j.value("p_drop", d.p_drop);
  d.p_dup = j.value("p_dup", d.p_dup);
  d.pair_length = j.value("pair_length", d.pair_length);
  return d;
}

struct RunConfig {
  std::uint64_t seed = 1;
  bool deterministic = false;
  int threads = 0;  // 0: hardware concurrency
  DatasetConfig dataset;
  AlignerConfig model;
  TrainConfig train;
  SmoothingConfig smoothing;
  int stride = 10;
  int max_jump = 5;
  int eval_sequences = 20;
  int eval_sequence_length = 200;
  int global_shift_sequences = 200;

  json to_json() const {
    return {{"seed", seed},
            {"deterministic", deterministic},
            {"threads", threads},
            {"dataset", dataset_to_json(dataset)},
            {"model", model.to_json()},
            {"train", train.to_json()},
            {"smoothing", smoothing.to_json()},
            {"stride", stride},
            {"max_jump", max_jump},
            {"eval_sequences", eval_sequences},
            {"eval_sequence_length", eval_sequence_length},
            {"global_shift_sequences", global_shift_sequences}};
  }

  void merge(const json& j) {
    seed = j.value("seed", seed);
    deterministic = j.value("deterministic", deterministic);
    threads = j.value("threads", threads);
    if (j.contains("dataset")) dataset = dataset_from_json(j.at("dataset"), dataset);
    if (j.contains("model")) {
      json m = model.to_json();
      m.update(j.at("model"));
      model = AlignerConfig::from_json(m);
    }
    if (j.contains("train")) train = TrainConfig::from_json(j.at("train"), train);
    if (j.contains("smoothing")) {
      json s = smoothing.to_json();
      s.update(j.at("smoothing"));
      smoothing = SmoothingConfig::from_json(s);
    }
    stride = j.value("stride", stride);
    max_jump = j.value("max_jump", max_jump);
    eval_sequences = j.value("eval_sequences", eval_sequences);
    eval_sequence_length = j.value("eval_sequence_length", eval_sequence_length);
    global_shift_sequences = j.value("global_shift_sequences", global_shift_sequences);
  }

  void validate() const {
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (max_jump < 0) throw ConfigError("max_jump must be >= 0");
    if (eval_sequences < 0 || global_shift_sequences < 0) throw ConfigError("sequence counts must be >= 0");
    if (eval_sequence_length < kVideoWindow) throw ConfigError("eval_sequence_length must be >= 75");
    model.validate();
    train.validate();
    smoothing.validate();
  }
};

struct CommonOptions {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out = "out";
};

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int resolve_threads(const RunConfig& rc) {
  if (rc.deterministic) return 1;
  int n = rc.threads > 0 ? rc.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* cap = std::getenv("CHRONOALIGN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end == cap || *end != '\0' || v < 1) throw ConfigError("CHRONOALIGN_THREADS must be a positive integer");
    n = std::min<long>(n, v);
  }
  return n;
}

// Loads the config file, applies the common flags, and returns the result
// with threads resolved. Command-specific overrides are applied by the caller
// through `tweak` before the config is validated and logged.
template <typename F>
RunConfig resolve_config(const CommonOptions& common, const std::string& command, F&& tweak) {
  RunConfig rc;
  if (!common.config_file.empty()) rc.merge(read_json(common.config_file));
  if (common.seed) rc.seed = *common.seed;
  if (common.deterministic) rc.deterministic = true;
  tweak(rc);
  rc.threads = resolve_threads(rc);
  rc.train.threads = rc.threads;
  rc.validate();
  ensure_dir(common.out);
  const std::string dumped = rc.to_json().dump(2);
  std::cerr << "[" << command << "] resolved config:\n" << dumped << '\n';
  write_text(fs::path(common.out) / (command + "_config.json"), dumped + "\n");
  return rc;
}

// ---------------------------------------------------------------------------
// Shared helpers

SyntheticDataset load_dataset(const fs::path& manifest) {
  if (!fs::exists(manifest)) throw IoError("manifest not found: " + manifest.string());
  return SyntheticDataset(SyntheticDataset::from_manifest(read_json(manifest)));
}

AlignerParams load_model(const fs::path& file) {
  if (!fs::exists(file)) throw IoError("checkpoint not found: " + file.string());
  return AlignerParams::from_checkpoint(ad::load_checkpoint(file));
}

bool is_wav(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::string(magic, 4) == "RIFF";
}

// WAV input becomes stacked MFCC frames at 25 fps.
FeatureSequence load_audio_input(const fs::path& file) {
  if (!is_wav(file)) return load_features(file);
  return stack_audio_frames(compute_mfcc(load_wav(file), MfccConfig()));
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::vector<double> as_curve(const std::vector<int>& path) {
  std::vector<double> y;
  y.reserve(path.size());
  for (int v : path) y.push_back(v < 0 ? std::nan("") : static_cast<double>(v));
  return y;
}

std::vector<int> signed_errors(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::vector<int> out;
  for (std::size_t k = 0; k < std::min(pred.size(), truth.size()); ++k)
    if (pred[k] >= 0 && truth[k] != LabelMap::kOutOfBounds) out.push_back(pred[k] - truth[k]);
  return out;
}

void write_path_plots(const fs::path& out, const std::string& title, const std::vector<int>& pred,
                      const std::vector<int>& truth) {
  svg::write(out / "alignment.svg",
             svg::line_chart(title, "query frame", "key frame",
                             {{"predicted", "#d62728", as_curve(pred)}, {"truth", "#1f77b4", as_curve(truth)}}));
  svg::write(out / "error_hist.svg",
             svg::histogram(title + ": signed error", "predicted - truth", signed_errors(pred, truth)));
}

// Edit statistics of the gap-free part of a path.
EditStats dense_edit_statistics(const std::vector<int>& path) {
  std::vector<int> dense;
  for (int v : path)
    if (v >= 0) dense.push_back(v);
  return edit_statistics(dense);
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOptions {
  std::optional<int> train_count, val_count, test_count;
  int export_pairs = 0;
  int export_length = 0;
};

int cmd_gen_data(const CommonOptions& common, const GenDataOptions& o) {
  const RunConfig rc = resolve_config(common, "gen-data", [&](RunConfig& rc) {
    if (o.train_count) rc.dataset.train_count = *o.train_count;
    if (o.val_count) rc.dataset.val_count = *o.val_count;
    if (o.test_count) rc.dataset.test_count = *o.test_count;
  });
  DatasetConfig dc = rc.dataset;
  dc.dataset_seed = derive_seed(rc.seed, "data");
  if (dc.train_count + dc.val_count + dc.test_count == 0) throw ConfigError("gen-data: no examples requested");
  const SyntheticDataset data(dc);
  const fs::path out(common.out);
  write_text(out / "manifest.json", data.manifest().dump(2) + "\n");
  std::cerr << "[gen-data] wrote " << (out / "manifest.json").string() << '\n';

  if (o.export_pairs > 0) {
    if (o.export_pairs > dc.test_count) throw ConfigError("gen-data: --export-pairs exceeds the test split");
    const int length = o.export_length > 0 ? o.export_length : rc.eval_sequence_length;
    const fs::path dir = out / "pairs";
    ensure_dir(dir);
    for (int i = 0; i < o.export_pairs; ++i) {
      const SequenceExample seq = data.sequence(Split::kTest, i, length);
      char stem[32];
      std::snprintf(stem, sizeof stem, "seq_%03d", i);
      save_features(dir / (std::string(stem) + "_audio.feat"), seq.audio);
      save_features(dir / (std::string(stem) + "_video.feat"), seq.video);
      save_path(dir / (std::string(stem) + "_truth.path"), seq.labels.labels);
      write_text(dir / (std::string(stem) + "_shift.txt"), std::to_string(seq.global_shift) + "\n");
    }
    std::cerr << "[gen-data] exported " << o.export_pairs << " test sequences to " << dir.string() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string manifest;
  std::optional<int> phase1_epochs, phase2_epochs, batch_size, embed_dim, hidden;
  std::optional<double> lr, scheduled_sampling;
  bool free_running = false;
  bool no_attention = false;
  bool resume = false;
};

std::optional<fs::path> latest_state(const fs::path& dir) {
  static const std::regex pattern(R"(state_epoch_(\d+)\.ckpt)");
  std::optional<fs::path> best;
  int best_epoch = -1;
  if (!fs::exists(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const int epoch = std::stoi(m[1]);
    if (epoch > best_epoch) best_epoch = epoch, best = entry.path();
  }
  return best;
}

void write_train_log(const fs::path& file, const std::vector<EpochLog>& history) {
  std::ostringstream os;
  os << "epoch,phase,train_loss,val_loss,val_top1\n";
  for (const auto& h : history)
    os << h.epoch << ',' << static_cast<int>(h.phase) << ',' << csv_number(h.train_loss) << ','
       << csv_number(h.val_loss) << ',' << csv_number(h.val_top1) << '\n';
  write_text(file, os.str());
}

int cmd_train(const CommonOptions& common, const TrainOptions& o) {
  const fs::path out(common.out);
  const fs::path manifest = o.manifest.empty() ? out / "manifest.json" : fs::path(o.manifest);
  const SyntheticDataset data = load_dataset(manifest);

  const RunConfig rc = resolve_config(common, "train", [&](RunConfig& rc) {
    if (o.phase1_epochs) rc.train.phase1_epochs = *o.phase1_epochs;
    if (o.phase2_epochs) rc.train.phase2_epochs = *o.phase2_epochs;
    if (o.batch_size) rc.train.batch_size = *o.batch_size;
    if (o.lr) rc.train.adam.lr = *o.lr;
    if (o.scheduled_sampling) rc.train.scheduled_sampling = *o.scheduled_sampling;
    if (o.free_running) rc.train.free_running = true;
    if (o.no_attention) rc.model.use_attention = false;
    if (o.embed_dim) rc.model.embed_dim = *o.embed_dim;
    if (o.hidden) rc.model.rnn_hidden = *o.hidden;
    rc.model.audio_dim = data.config().audio_dim;
    rc.model.video_dim = data.config().video_dim;
    rc.train.seed = rc.seed;
  });

  Trainer trainer(AlignerParams::create(rc.model, derive_seed(rc.seed, "init")), data, rc.train);
  const fs::path ckpt_dir = out / "checkpoints";
  ensure_dir(ckpt_dir);
  if (o.resume) {
    if (auto state = latest_state(ckpt_dir)) {
      trainer.restore(ad::load_checkpoint(*state));
      std::cerr << "[train] resumed from " << state->string() << " after epoch " << trainer.epochs_completed()
                << '\n';
    } else {
      std::cerr << "[train] no checkpoint to resume from, starting fresh\n";
    }
  }

  trainer.run([&](const EpochLog& log, const Trainer& t) {
    std::cerr << "[train] phase " << static_cast<int>(log.phase) << " epoch " << log.epoch
              << " train_loss=" << log.train_loss << " val_loss=" << log.val_loss << " val_top1=" << log.val_top1
              << '\n';
    char name[40];
    std::snprintf(name, sizeof name, "state_epoch_%03d.ckpt", t.epochs_completed());
    ad::save_checkpoint(ckpt_dir / name, t.state_checkpoint());
    write_train_log(out / "train_log.csv", t.history());
  });
  write_train_log(out / "train_log.csv", trainer.history());
  ad::save_checkpoint(out / "model.ckpt", trainer.params().to_checkpoint());
  std::cerr << "[train] wrote " << (out / "model.ckpt").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// align

struct AlignOptions {
  std::string checkpoint, audio, video;
  std::string direction = "video";
  bool global_only = false;
  bool emit_votes = false;
  std::optional<int> stride;
  std::string path_file, warped_file;
};

int cmd_align(const CommonOptions& common, const AlignOptions& o) {
  const RunConfig rc = resolve_config(common, "align", [&](RunConfig& rc) {
    if (o.stride) rc.stride = *o.stride;
  });
  const AlignerParams params = load_model(o.checkpoint);
  const FeatureSequence audio = load_audio_input(o.audio);
  const FeatureSequence video = load_features(o.video);
  WindowOptions wopts;
  wopts.stride = rc.stride;
  wopts.threads = rc.threads;
  const fs::path out(common.out);

  if (o.global_only) {
    std::cout << estimate_global_shift(audio, video, params, wopts) << std::endl;
    return 0;
  }

  const bool video_warp = o.direction == "video";
  const AlignmentResult res = video_warp ? align_video_to_audio(audio, video, params, wopts, rc.smoothing)
                                         : align_audio_to_video(audio, video, params, wopts, rc.smoothing);
  const fs::path path_file = o.path_file.empty() ? out / "path.txt" : fs::path(o.path_file);
  save_path(path_file, res.smoothed.path);
  std::cerr << "[align] " << res.smoothed.path.size() << " frames, sigma=" << res.smoothed.sigma
            << (res.smoothed.fallback ? " (fallback)" : "") << ", path -> " << path_file.string() << '\n';
  if (o.emit_votes) write_text(out / "votes.json", res.votes.to_json().dump(2) + "\n");
  if (!o.warped_file.empty()) {
    save_features(o.warped_file, render_video_warp(video_warp ? video : audio, res.smoothed.path));
    std::cerr << "[align] warped stream -> " << o.warped_file << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint, manifest;
  std::string pred, truth;
  std::string ref, test;
  std::string corr_ref, corr_test;
  std::optional<int> sequences;
};

int eval_paths(const fs::path& out, const EvalOptions& o) {
  const std::vector<int> pred = load_path(o.pred), truth = load_path(o.truth);
  if (pred.size() != truth.size()) throw ConfigError("eval: predicted and truth paths differ in length");
  SequenceMetrics row;
  row.id = fs::path(o.pred).stem().string();
  row.shift = shift_error_metrics(pred, truth);
  row.edits = dense_edit_statistics(pred);
  MetricReport report;
  report.mean_shift_error = row.shift.mean;
  report.max_shift_error = row.shift.max;
  report.top1_accuracy = row.shift.top1;
  report.dup = row.edits.dup;
  report.del = row.edits.del;
  report.conseq = row.edits.conseq;
  report.unique = row.edits.unique;
  write_metric_report(out / "metrics.json", report);
  std::ostringstream csv;
  write_metrics_csv(csv, {row});
  write_text(out / "metrics.csv", csv.str());
  write_path_plots(out, "alignment", pred, truth);
  std::cout << report.to_json().dump(2) << std::endl;
  return 0;
}

int eval_mcd(const fs::path& out, const EvalOptions& o) {
  const FeatureSequence ref = load_audio_input(o.ref), test = load_audio_input(o.test);
  MetricReport report;
  if (ref.size() == test.size())
    report.mcd = mcd(ref, test);
  else
    std::cerr << "[eval] lengths differ (" << ref.size() << " vs " << test.size() << "), plain mcd left at 0\n";
  report.mcd_dtw = mcd_dtw(ref, test);
  write_metric_report(out / "metrics.json", report);
  std::cout << report.to_json().dump(2) << std::endl;
  return 0;
}

int eval_correlation(const fs::path& out, const EvalOptions& o) {
  const FeatureSequence ref = load_features(o.corr_ref), test = load_features(o.corr_test);
  if (ref.size() != test.size()) throw ConfigError("eval: correlation inputs differ in length");
  if (ref.dim() < 2 || test.dim() < 2) throw ConfigError("eval: correlation inputs need two columns (x, y)");
  auto column = [](const FeatureSequence& s, int c) {
    std::vector<double> v;
    for (const auto& f : s.frames) v.push_back(f[c]);
    return v;
  };
  MetricReport report;
  report.corr_x = pearson(column(ref, 0), column(test, 0));
  report.corr_y = pearson(column(ref, 1), column(test, 1));
  write_metric_report(out / "metrics.json", report);
  std::cout << report.to_json().dump(2) << std::endl;
  return 0;
}

int eval_split(const fs::path& out, const RunConfig& rc, const EvalOptions& o) {
  const SyntheticDataset data = load_dataset(o.manifest.empty() ? out / "manifest.json" : fs::path(o.manifest));
  const AlignerParams params = load_model(o.checkpoint.empty() ? out / "model.ckpt" : fs::path(o.checkpoint));
  if (data.count(Split::kTest) == 0) throw ConfigError("eval: the test split is empty");

  const WindowComparison cmp = compare_on_windows(params, data, Split::kTest, rc.max_jump, -1, rc.threads);
  {
    std::ostringstream csv;
    csv << "method,frames,mean_shift_error,max_shift_error,top1_accuracy\n";
    for (const auto& [name, e] : {std::pair{"learned", cmp.model}, std::pair{"modified_dta", cmp.baseline}})
      csv << name << ',' << e.frames << ',' << csv_number(e.mean) << ',' << e.max << ',' << csv_number(e.top1)
          << '\n';
    write_text(out / "comparison.csv", csv.str());
  }

  WindowOptions wopts;
  wopts.stride = rc.stride;
  wopts.threads = rc.threads;
  MetricReport report;
  report.mean_shift_error = cmp.model.mean;
  report.max_shift_error = cmp.model.max;
  report.top1_accuracy = cmp.model.top1;
  const int n_global = std::min(rc.global_shift_sequences, data.count(Split::kTest));
  if (n_global > 0)
    report.per_video_accuracy =
        evaluate_global_shift(params, data, Split::kTest, n_global, rc.eval_sequence_length, wopts).exact_fraction;

  const int n_seq = std::min(o.sequences.value_or(rc.eval_sequences), data.count(Split::kTest));
  std::vector<SequenceMetrics> rows;
  std::vector<int> all_errors;
  for (int i = 0; i < n_seq; ++i) {
    const SequenceExample seq = data.sequence(Split::kTest, i, rc.eval_sequence_length);
    const AlignmentResult res = align_video_to_audio(seq.audio, seq.video, params, wopts, rc.smoothing);
    SequenceMetrics row;
    row.id = "test_" + std::to_string(i);
    row.shift = shift_error_metrics(res.smoothed.path, seq.labels.labels);
    row.shift_exact = estimate_global_shift(res.votes) == seq.global_shift;
    row.edits = dense_edit_statistics(res.smoothed.path);
    rows.push_back(row);
    report.dup += row.edits.dup;
    report.del += row.edits.del;
    report.conseq += row.edits.conseq;
    report.unique += row.edits.unique;
    const auto errs = signed_errors(res.smoothed.path, seq.labels.labels);
    all_errors.insert(all_errors.end(), errs.begin(), errs.end());
    if (i == 0)
      svg::write(out / "alignment.svg",
                 svg::line_chart("test sequence 0", "audio frame", "video frame",
                                 {{"predicted", "#d62728", as_curve(res.smoothed.path)},
                                  {"truth", "#1f77b4", as_curve(seq.labels.labels)}}));
  }
  if (n_seq > 0) {
    for (double* v : {&report.dup, &report.del, &report.conseq, &report.unique}) *v /= n_seq;
    svg::write(out / "error_hist.svg",
               svg::histogram("sequence alignment error", "predicted - truth (frames)", all_errors));
  }
  std::ostringstream csv;
  write_metrics_csv(csv, rows);
  write_text(out / "sequences.csv", csv.str());
  write_metric_report(out / "metrics.json", report);

  std::cout << "learned      top1=" << cmp.model.top1 << " mean_shift_error=" << cmp.model.mean << '\n'
            << "modified_dta top1=" << cmp.baseline.top1 << " mean_shift_error=" << cmp.baseline.mean << '\n'
            << "per_video_accuracy=" << report.per_video_accuracy << std::endl;
  return 0;
}

int cmd_eval(const CommonOptions& common, const EvalOptions& o) {
  const RunConfig rc = resolve_config(common, "eval", [](RunConfig&) {});
  const fs::path out(common.out);
  const int modes = !o.pred.empty() + !o.ref.empty() + !o.corr_ref.empty();
  if (modes > 1) throw ConfigError("eval: choose one of --pred, --ref or --corr-ref");
  if (!o.pred.empty()) {
    if (o.truth.empty()) throw ConfigError("eval: --pred needs --truth");
    return eval_paths(out, o);
  }
  if (!o.ref.empty()) {
    if (o.test.empty()) throw ConfigError("eval: --ref needs --test");
    return eval_mcd(out, o);
  }
  if (!o.corr_ref.empty()) {
    if (o.corr_test.empty()) throw ConfigError("eval: --corr-ref needs --corr-test");
    return eval_correlation(out, o);
  }
  return eval_split(out, rc, o);
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::string train_log, pred, truth, metrics;
};

std::vector<std::vector<double>> read_train_log(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "epoch,phase,train_loss,val_loss,val_top1") throw UnsupportedFormatError(file.string() + ": bad header");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 5) throw UnsupportedFormatError(file.string() + ": malformed row");
    rows.push_back(row);
  }
  return rows;
}

int cmd_report(const CommonOptions& common, const ReportOptions& o) {
  resolve_config(common, "report", [](RunConfig&) {});
  const fs::path out(common.out);
  if (o.train_log.empty() && o.pred.empty() && o.metrics.empty())
    throw ConfigError("report: nothing to do (give --train-log, --pred/--truth or --metrics)");
  if (!o.train_log.empty()) {
    const auto rows = read_train_log(o.train_log);
    std::vector<double> train, val, top1;
    for (const auto& r : rows) {
      train.push_back(r[2]);
      val.push_back(r[3]);
      top1.push_back(r[4]);
    }
    svg::write(out / "loss_curve.svg", svg::line_chart("training loss", "epoch (global, 0-based)", "loss",
                                                       {{"train", "#1f77b4", train}, {"val", "#ff7f0e", val}}));
    svg::write(out / "top1_curve.svg",
               svg::line_chart("validation top-1", "epoch (global, 0-based)", "top-1", {{"val", "#2ca02c", top1}}));
  }
  if (!o.pred.empty()) {
    if (o.truth.empty()) throw ConfigError("report: --pred needs --truth");
    write_path_plots(out, "alignment", load_path(o.pred), load_path(o.truth));
  }
  if (!o.metrics.empty()) {
    const json metrics = MetricReport::from_json(read_json(o.metrics)).to_json();
    std::ostringstream md;
    md << "| metric | value |\n|---|---|\n";
    for (const auto& [k, v] : metrics.items()) md << "| " << k << " | " << v.dump() << " |\n";
    write_text(out / "report.md", md.str());
    std::cout << md.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chronoalign: learned audio-video alignment"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_file, "JSON run config; flags override its values")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "root seed");
    sub->add_flag("--deterministic", common.deterministic, "single-threaded, byte-identical outputs");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
  };

  GenDataOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset manifest");
  add_common(gen_cmd);
  gen_cmd->add_option("--train-count", gen.train_count);
  gen_cmd->add_option("--val-count", gen.val_count);
  gen_cmd->add_option("--test-count", gen.test_count);
  gen_cmd->add_option("--export-pairs", gen.export_pairs, "also write this many test sequences as feature files");
  gen_cmd->add_option("--export-length", gen.export_length, "frames per exported sequence");

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "two-phase training");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", train.manifest, "default: <out>/manifest.json");
  train_cmd->add_option("--phase1-epochs", train.phase1_epochs);
  train_cmd->add_option("--phase2-epochs", train.phase2_epochs);
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--lr", train.lr);
  train_cmd->add_option("--embed-dim", train.embed_dim);
  train_cmd->add_option("--hidden", train.hidden, "LSTM hidden size");
  train_cmd->add_option("--scheduled-sampling", train.scheduled_sampling, "final feed-back probability");
  train_cmd->add_flag("--free-running", train.free_running);
  train_cmd->add_flag("--no-attention", train.no_attention);
  train_cmd->add_flag("--resume", train.resume, "continue from the latest state in <out>/checkpoints");

  AlignOptions align;
  CLI::App* align_cmd = app.add_subcommand("align", "align one audio/video pair");
  add_common(align_cmd);
  align_cmd->add_option("--checkpoint", align.checkpoint)->required();
  align_cmd->add_option("--audio", align.audio, "feature file or 16-bit WAV")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--video", align.video)->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--direction", align.direction, "stream to warp")
      ->check(CLI::IsMember({"video", "audio"}))
      ->capture_default_str();
  align_cmd->add_flag("--global-only", align.global_only, "print the estimated global shift and exit");
  align_cmd->add_flag("--emit-votes", align.emit_votes, "write <out>/votes.json");
  align_cmd->add_option("--stride", align.stride);
  align_cmd->add_option("--path", align.path_file, "default: <out>/path.txt");
  align_cmd->add_option("--warped", align.warped_file, "write the warped stream here");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "metrics on a test split, path pair, or reference pair");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "default: <out>/model.ckpt");
  eval_cmd->add_option("--manifest", eval.manifest, "default: <out>/manifest.json");
  eval_cmd->add_option("--sequences", eval.sequences, "test sequences aligned end to end");
  eval_cmd->add_option("--pred", eval.pred, "predicted path file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", eval.truth, "ground-truth path file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref", eval.ref, "reference features or WAV (MCD)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", eval.test, "test features or WAV (MCD)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--corr-ref", eval.corr_ref, "reference x/y tracks")->check(CLI::ExistingFile);
  eval_cmd->add_option("--corr-test", eval.corr_test, "test x/y tracks")->check(CLI::ExistingFile);

  ReportOptions report;
  CLI::App* report_cmd = app.add_subcommand("report", "SVG plots and a metric table");
  add_common(report_cmd);
  report_cmd->add_option("--train-log", report.train_log)->check(CLI::ExistingFile);
  report_cmd->add_option("--pred", report.pred)->check(CLI::ExistingFile);
  report_cmd->add_option("--truth", report.truth)->check(CLI::ExistingFile);
  report_cmd->add_option("--metrics", report.metrics)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(common, gen);
    if (train_cmd->parsed()) return cmd_train(common, train);
    if (align_cmd->parsed()) return cmd_align(common, align);
    if (eval_cmd->parsed()) return cmd_eval(common, eval);
    if (report_cmd->parsed()) return cmd_report(common, report);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}
