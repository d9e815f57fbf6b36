#include "chronoalign/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "chronoalign/error.hpp"
#include "chronoalign/seed.hpp"

namespace chronoalign {

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (phase1_epochs < 0 || phase2_epochs < 0) throw ConfigError("train: epoch counts must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0)
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (jitter_sigma < 0.0) throw ConfigError("train: jitter_sigma must be >= 0");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
  if (!(contrastive_margin > 0.0)) throw ConfigError("train: contrastive_margin must be positive");
  if (!(scheduled_sampling >= 0.0 && scheduled_sampling <= 1.0))
    throw ConfigError("train: scheduled_sampling must lie in [0, 1]");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"phase1_epochs", phase1_epochs},
          {"phase2_epochs", phase2_epochs},
          {"batch_size", batch_size},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"clip_norm", clip_norm},
          {"jitter_sigma", jitter_sigma},
          {"retain_head_after_phase1", retain_head_after_phase1},
          {"pretrain_loss", pretrain_loss == PretrainLoss::kContrastive ? "contrastive" : "pipeline"},
          {"contrastive_margin", contrastive_margin},
          {"free_running", free_running},
          {"scheduled_sampling", scheduled_sampling},
          {"max_train_examples", max_train_examples},
          {"max_val_examples", max_val_examples},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  c.phase1_epochs = j.value("phase1_epochs", c.phase1_epochs);
  c.phase2_epochs = j.value("phase2_epochs", c.phase2_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
  c.retain_head_after_phase1 = j.value("retain_head_after_phase1", c.retain_head_after_phase1);
  if (j.contains("pretrain_loss")) {
    const std::string v = j.at("pretrain_loss").get<std::string>();
    if (v == "contrastive")
      c.pretrain_loss = PretrainLoss::kContrastive;
    else if (v == "pipeline")
      c.pretrain_loss = PretrainLoss::kPipeline;
    else
      throw ConfigError("train: pretrain_loss must be \"contrastive\" or \"pipeline\"");
  }
  c.contrastive_margin = j.value("contrastive_margin", c.contrastive_margin);
  c.free_running = j.value("free_running", c.free_running);
  c.scheduled_sampling = j.value("scheduled_sampling", c.scheduled_sampling);
  c.max_train_examples = j.value("max_train_examples", c.max_train_examples);
  c.max_val_examples = j.value("max_val_examples", c.max_val_examples);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

// Runs body(i) for i in [0, count) on up to `threads` workers.
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

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
}

}  // namespace

double accumulate_batch_gradients(AlignerParams& params, const std::vector<TrainingExample>& batch, bool training,
                                  std::uint64_t dropout_seed, double feed_prediction_prob, int threads,
                                  std::optional<double> contrastive_margin) {
  const auto plist = params.parameters();
  const int b = static_cast<int>(batch.size());
  std::vector<std::vector<ad::Tensor>> grads(b);
  std::vector<double> losses(b, 0.0);
  std::vector<int> terms(b, 0);

  parallel_for(b, threads, [&](int j) {
    ad::Graph g;
    std::mt19937_64 rng(derive_seed(dropout_seed, "dropout", static_cast<std::uint64_t>(j)));
    ForwardOptions opts;
    opts.mode = feed_prediction_prob >= 1.0 ? DecodeMode::kFreeRunning : DecodeMode::kTeacherForced;
    opts.feed_prediction_prob = feed_prediction_prob;
    opts.training = training;
    opts.rng = &rng;
    ForwardResult res = contrastive_margin ? forward_distance_matching(g, params, batch[j].audio, batch[j].video,
                                                                       batch[j].labels, *contrastive_margin)
                                           : forward_full(g, params, batch[j].audio, batch[j].video, &batch[j].labels, opts);
    terms[j] = res.loss_terms;
    if (res.loss_terms == 0) return;
    losses[j] = res.loss_sum.value()[0];
    g.backward(res.loss_sum, 1.0, ad::BackwardOrder::kReverseCreation, /*accumulate_params=*/false);
    grads[j].reserve(plist.size());
    for (const ad::Parameter* q : plist) {
      const ad::Tensor* t = g.param_grad(*q);
      grads[j].push_back(t ? *t : ad::Tensor());
    }
  });

  const int total = std::accumulate(terms.begin(), terms.end(), 0);
  if (total == 0) return 0.0;
  const double inv = 1.0 / total;
  for (int j = 0; j < b; ++j) {
    if (grads[j].empty()) continue;
    for (std::size_t k = 0; k < plist.size(); ++k) {
      const ad::Tensor& gj = grads[j][k];
      if (gj.empty()) continue;
      ad::Tensor& acc = plist[k]->grad;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += inv * gj[i];
    }
  }
  const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) * inv;
  check_finite(loss, "training loss");
  return loss;
}

EvalSummary evaluate(const AlignerParams& params, const SyntheticDataset& data, Split split, bool shift_only,
                     int max_examples, int threads,
                                  std::optional<double> contrastive_margin) {
  int count = data.count(split);
  if (max_examples >= 0) count = std::min(count, max_examples);
  std::vector<double> loss(count, 0.0);
  std::vector<int> frames(count, 0), exact(count, 0), err_sum(count, 0), err_max(count, 0);
  parallel_for(count, threads, [&](int i) {
    const TrainingExample ex = data.example(split, i, shift_only);
    ad::Graph g(/*record=*/false);
    ForwardOptions opts;
    auto& p = const_cast<AlignerParams&>(params);
    ForwardResult res = contrastive_margin
                            ? forward_distance_matching(g, p, ex.audio, ex.video, ex.labels, *contrastive_margin)
                            : forward_full(g, p, ex.audio, ex.video, &ex.labels, opts);
    if (res.loss_terms > 0) loss[i] = res.loss_sum.value()[0];
    for (std::size_t k = 0; k < ex.labels.labels.size(); ++k) {
      const int t = ex.labels.labels[k];
      if (t == LabelMap::kOutOfBounds) continue;
      const int e = std::abs(res.predictions[k] - t);
      ++frames[i];
      exact[i] += e == 0;
      err_sum[i] += e;
      err_max[i] = std::max(err_max[i], e);
    }
  });
  EvalSummary s;
  s.frames = std::accumulate(frames.begin(), frames.end(), 0);
  if (s.frames == 0) return s;
  s.loss = std::accumulate(loss.begin(), loss.end(), 0.0) / s.frames;
  s.top1 = static_cast<double>(std::accumulate(exact.begin(), exact.end(), 0)) / s.frames;
  s.mean_shift_error = static_cast<double>(std::accumulate(err_sum.begin(), err_sum.end(), 0)) / s.frames;
  s.max_shift_error = *std::max_element(err_max.begin(), err_max.end());
  return s;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(AlignerParams params, const SyntheticDataset& data, TrainConfig cfg)
    : params_(std::move(params)), data_(data), cfg_(cfg), adam_(cfg.adam) {
  cfg_.validate();
  if (params_.config.audio_dim != data.config().audio_dim || params_.config.video_dim != data.config().video_dim)
    throw ConfigError("trainer: model feature dims do not match the dataset");
}

Phase Trainer::current_phase() const {
  return epochs_completed_ < cfg_.phase1_epochs ? Phase::kPretrain : Phase::kFull;
}

double Trainer::feed_prediction_prob(int epoch_index) const {
  if (epoch_index < cfg_.phase1_epochs) return 0.0;
  if (cfg_.free_running) return 1.0;
  if (cfg_.phase2_epochs <= 1) return cfg_.scheduled_sampling;
  return cfg_.scheduled_sampling * (epoch_index - cfg_.phase1_epochs) / (cfg_.phase2_epochs - 1);
}

bool Trainer::done() const { return epochs_completed_ >= cfg_.phase1_epochs + cfg_.phase2_epochs; }

EpochLog Trainer::run_epoch() {
  if (done()) throw std::logic_error("trainer: all epochs completed");
  const Phase phase = current_phase();
  const int epoch_index = epochs_completed_;
  const bool shift_only = phase == Phase::kPretrain;
  std::optional<double> contrastive;
  if (shift_only && cfg_.pretrain_loss == PretrainLoss::kContrastive) contrastive = cfg_.contrastive_margin;

  if (phase == Phase::kFull && epoch_index == cfg_.phase1_epochs) {
    adam_ = ad::AdamState(cfg_.adam);
    if (epoch_index > 0 && !cfg_.retain_head_after_phase1) {
      AlignerParams fresh = AlignerParams::create(params_.config, derive_seed(cfg_.seed, "init", 1));
      auto dst = params_.parameters();
      auto src = fresh.parameters();
      const auto enc = params_.encoder_parameters();
      for (std::size_t k = 0; k < dst.size(); ++k)
        if (std::find(enc.begin(), enc.end(), dst[k]) == enc.end()) dst[k]->value = src[k]->value;
    }
  }

  int n_train = data_.count(Split::kTrain);
  if (cfg_.max_train_examples >= 0) n_train = std::min(n_train, cfg_.max_train_examples);
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed(cfg_.seed, "shuffle", static_cast<std::uint64_t>(epoch_index)));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto plist = params_.parameters();
  double loss_sum = 0.0;
  int batches = 0;
  for (int start = 0; start < n_train; start += cfg_.batch_size) {
    const int end = std::min(n_train, start + cfg_.batch_size);
    const std::uint64_t step_seed = derive_seed(cfg_.seed, "step", static_cast<std::uint64_t>(adam_.step) +
                                                                       (static_cast<std::uint64_t>(epoch_index) << 32));
    std::vector<TrainingExample> batch;
    batch.reserve(end - start);
    for (int i = start; i < end; ++i) batch.push_back(data_.example(Split::kTrain, order[i], shift_only));
    if (cfg_.jitter_sigma > 0.0) {
      std::mt19937_64 jitter_rng(derive_seed(step_seed, "jitter"));
      std::normal_distribution<double> noise(0.0, cfg_.jitter_sigma);
      for (auto& ex : batch)
        for (auto& fr : ex.video.frames)
          for (double& v : fr) v += noise(jitter_rng);
    }
    ad::zero_grads(plist);
    loss_sum += accumulate_batch_gradients(params_, batch, /*training=*/true, derive_seed(step_seed, "dropout"),
                                           feed_prediction_prob(epoch_index), cfg_.threads, contrastive);
    ad::clip_grad_norm(plist, cfg_.clip_norm);
    ad::adam_step(plist, adam_);
    ++batches;
  }

  EpochLog log;
  log.phase = phase;
  log.epoch = phase == Phase::kPretrain ? epoch_index + 1 : epoch_index - cfg_.phase1_epochs + 1;
  log.train_loss = batches ? loss_sum / batches : 0.0;
  if (data_.count(Split::kVal) > 0) {
    const EvalSummary val = evaluate(params_, data_, Split::kVal, shift_only, cfg_.max_val_examples, cfg_.threads,
                                    contrastive);
    log.val_loss = val.loss;
    log.val_top1 = val.top1;
  }
  ++epochs_completed_;
  history_.push_back(log);
  return log;
}

void Trainer::run(const std::function<void(const EpochLog&, const Trainer&)>& on_epoch) {
  while (!done()) {
    const EpochLog log = run_epoch();
    if (on_epoch) on_epoch(log, *this);
  }
}

ad::Checkpoint Trainer::state_checkpoint() const {
  ad::Checkpoint ckpt = params_.to_checkpoint();
  const auto plist = const_cast<AlignerParams&>(params_).parameters();
  for (std::size_t k = 0; k < adam_.m.size(); ++k) {
    ckpt.arrays.emplace_back("adam.m/" + plist[k]->name, adam_.m[k]);
    ckpt.arrays.emplace_back("adam.v/" + plist[k]->name, adam_.v[k]);
  }
  ckpt.step = adam_.step;
  ckpt.rng_seed = cfg_.seed;
  ckpt.meta["train"] = cfg_.to_json();
  ckpt.meta["epochs_completed"] = epochs_completed_;
  auto& hist = ckpt.meta["history"] = nlohmann::json::array();
  for (const auto& h : history_)
    hist.push_back({{"epoch", h.epoch},
                    {"phase", static_cast<int>(h.phase)},
                    {"train_loss", h.train_loss},
                    {"val_loss", h.val_loss},
                    {"val_top1", h.val_top1}});
  return ckpt;
}

void Trainer::restore(const ad::Checkpoint& ckpt) {
  params_ = AlignerParams::from_checkpoint(ckpt);
  epochs_completed_ = ckpt.meta.value("epochs_completed", 0);
  adam_ = ad::AdamState(cfg_.adam);
  adam_.step = ckpt.step;
  const auto plist = params_.parameters();
  for (const ad::Parameter* q : plist) {
    const ad::Tensor* m = ckpt.find("adam.m/" + q->name);
    const ad::Tensor* v = ckpt.find("adam.v/" + q->name);
    if (m == nullptr || v == nullptr) {
      adam_.m.clear();
      adam_.v.clear();
      break;
    }
    adam_.m.push_back(*m);
    adam_.v.push_back(*v);
  }
  history_.clear();
  for (const auto& h : ckpt.meta.value("history", nlohmann::json::array())) {
    EpochLog e;
    e.epoch = h.at("epoch").get<int>();
    e.phase = static_cast<Phase>(h.at("phase").get<int>());
    e.train_loss = h.at("train_loss").get<double>();
    e.val_loss = h.at("val_loss").get<double>();
    e.val_top1 = h.at("val_top1").get<double>();
    history_.push_back(e);
  }
}

AlignerParams train_phase1(AlignerParams params, const SyntheticDataset& data, int epochs, TrainConfig cfg) {
  if (data.count(Split::kTrain) == 0) throw ConfigError("train_phase1: empty dataset");
  cfg.phase1_epochs = epochs;
  cfg.phase2_epochs = 0;
  Trainer t(std::move(params), data, cfg);
  t.run();
  AlignerParams out = t.params();
  if (epochs > 0 && !cfg.retain_head_after_phase1) {
    AlignerParams fresh = AlignerParams::create(out.config, derive_seed(cfg.seed, "init", 1));
    auto dst = out.parameters();
    auto src = fresh.parameters();
    const auto enc = out.encoder_parameters();
    for (std::size_t k = 0; k < dst.size(); ++k)
      if (std::find(enc.begin(), enc.end(), dst[k]) == enc.end()) dst[k]->value = src[k]->value;
  }
  return out;
}

AlignerParams train_phase2(AlignerParams params, const SyntheticDataset& data, int epochs, TrainConfig cfg,
                           std::vector<EpochLog>* log) {
  if (data.count(Split::kTrain) == 0) throw ConfigError("train_phase2: empty dataset");
  cfg.phase1_epochs = 0;
  cfg.phase2_epochs = epochs;
  Trainer t(std::move(params), data, cfg);
  t.run();
  if (log) *log = t.history();
  return t.params();
}

}  // namespace chronoalign
