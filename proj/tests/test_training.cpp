#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "chronoalign/ad/checkpoint.hpp"
#include "chronoalign/error.hpp"
#include "chronoalign/training.hpp"

using namespace chronoalign;

namespace {

DatasetConfig tiny_data() {
  DatasetConfig d;
  d.train_count = 8;
  d.val_count = 4;
  d.test_count = 0;
  return d;
}

AlignerConfig tiny_model(const DatasetConfig& d) {
  AlignerConfig c;
  c.audio_dim = d.audio_dim;
  c.video_dim = d.video_dim;
  c.encoder_hidden = 8;
  c.embed_dim = 6;
  c.rnn_hidden = 8;
  c.mlp_hidden = {8};
  c.label_embed_dim = 6;
  c.attention_dim = 6;
  return c;
}

std::vector<std::vector<double>> snapshot(AlignerParams& p) {
  std::vector<std::vector<double>> out;
  for (auto* q : p.parameters()) out.emplace_back(q->value.values().begin(), q->value.values().end());
  return out;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.phase1_epochs = 2;
  c.batch_size = 3;
  c.adam.lr = 5e-4;
  c.pretrain_loss = PretrainLoss::kPipeline;
  c.free_running = false;
  c.contrastive_margin = 1.5;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(TrainConfig::from_json(nlohmann::json::object()).to_json(), TrainConfig().to_json());
  EXPECT_THROW(TrainConfig::from_json({{"pretrain_loss", "other"}}), ConfigError);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig();
  bad.adam.lr = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Training, ZeroEpochsLeaveParametersUnchanged) {
  const SyntheticDataset data(tiny_data());
  AlignerParams p = AlignerParams::create(tiny_model(data.config()), 1);
  AlignerParams out = train_phase1(p, data, 0, TrainConfig());
  EXPECT_EQ(snapshot(out), snapshot(p));
  AlignerParams out2 = train_phase2(p, data, 0, TrainConfig());
  EXPECT_EQ(snapshot(out2), snapshot(p));
}

TEST(Training, TeacherForcedLossHalves) {
  const SyntheticDataset data(tiny_data());
  TrainConfig cfg;
  cfg.adam.lr = 1e-2;
  cfg.batch_size = 4;
  cfg.free_running = false;
  std::vector<EpochLog> log;
  train_phase2(AlignerParams::create(tiny_model(data.config()), 2), data, 30, cfg, &log);
  ASSERT_EQ(log.size(), 30u);
  EXPECT_LT(log.back().train_loss, 0.5 * log.front().train_loss);
  for (const auto& l : log) EXPECT_EQ(l.phase, Phase::kFull);
}

TEST(Training, PretrainingImprovesHeldOutMatching) {
  DatasetConfig d = tiny_data();
  d.train_count = 24;
  const SyntheticDataset data(d);
  const AlignerParams p = AlignerParams::create(tiny_model(d), 3);
  TrainConfig cfg;
  cfg.adam.lr = 5e-3;
  const double before = evaluate(p, data, Split::kVal, true, -1, 1, cfg.contrastive_margin).loss;
  const AlignerParams trained = train_phase1(p, data, 4, cfg);
  const double after = evaluate(trained, data, Split::kVal, true, -1, 1, cfg.contrastive_margin).loss;
  EXPECT_LT(after, before);
}

TEST(Training, PretrainingWithoutRetainingHeadTouchesOnlyEncoders) {
  const SyntheticDataset data(tiny_data());
  AlignerParams p = AlignerParams::create(tiny_model(data.config()), 4);
  TrainConfig cfg;
  cfg.retain_head_after_phase1 = false;
  cfg.seed = 9;
  AlignerParams out = train_phase1(p, data, 1, cfg);
  const auto before = snapshot(p), after = snapshot(out);
  const auto enc = out.encoder_parameters();
  const auto all = out.parameters();
  int changed_encoders = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const bool is_encoder = std::find(enc.begin(), enc.end(), all[k]) != enc.end();
    if (is_encoder) changed_encoders += before[k] != after[k];
  }
  EXPECT_GT(changed_encoders, 0);
  // Both runs re-initialize the head from the same derived seed.
  AlignerParams again = train_phase1(p, data, 1, cfg);
  EXPECT_EQ(snapshot(again), after);
}

TEST(Training, DeterministicOnOneThread) {
  const SyntheticDataset data(tiny_data());
  TrainConfig cfg;
  cfg.phase1_epochs = 1;
  cfg.phase2_epochs = 2;
  Trainer a(AlignerParams::create(tiny_model(data.config()), 5), data, cfg);
  Trainer b(AlignerParams::create(tiny_model(data.config()), 5), data, cfg);
  a.run();
  b.run();
  EXPECT_EQ(snapshot(a.params()), snapshot(b.params()));
  const auto dir = std::filesystem::temp_directory_path();
  ad::save_checkpoint(dir / "chronoalign_det_a.ckpt", a.state_checkpoint());
  ad::save_checkpoint(dir / "chronoalign_det_b.ckpt", b.state_checkpoint());
  auto bytes = [](const std::filesystem::path& f) {
    std::ifstream in(f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(bytes(dir / "chronoalign_det_a.ckpt"), bytes(dir / "chronoalign_det_b.ckpt"));
  std::filesystem::remove(dir / "chronoalign_det_a.ckpt");
  std::filesystem::remove(dir / "chronoalign_det_b.ckpt");
}

TEST(Training, ThreadedGradientsMatchSequential) {
  const SyntheticDataset data(tiny_data());
  AlignerParams p = AlignerParams::create(tiny_model(data.config()), 6);
  std::vector<TrainingExample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(data.example(Split::kTrain, i, false));
  ad::zero_grads(p.parameters());
  const double l1 = accumulate_batch_gradients(p, batch, true, 11, false, 1);
  std::vector<std::vector<double>> g1;
  for (auto* q : p.parameters()) g1.emplace_back(q->grad.values().begin(), q->grad.values().end());
  ad::zero_grads(p.parameters());
  const double l2 = accumulate_batch_gradients(p, batch, true, 11, false, 3);
  std::vector<std::vector<double>> g2;
  for (auto* q : p.parameters()) g2.emplace_back(q->grad.values().begin(), q->grad.values().end());
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  const SyntheticDataset data(tiny_data());
  TrainConfig cfg;
  cfg.phase1_epochs = 1;
  cfg.phase2_epochs = 2;
  const AlignerParams init = AlignerParams::create(tiny_model(data.config()), 7);

  Trainer full(init, data, cfg);
  full.run();

  Trainer first(init, data, cfg);
  first.run_epoch();
  first.run_epoch();
  const auto file = std::filesystem::temp_directory_path() / "chronoalign_resume.ckpt";
  ad::save_checkpoint(file, first.state_checkpoint());
  Trainer second(AlignerParams::create(tiny_model(data.config()), 99), data, cfg);
  second.restore(ad::load_checkpoint(file));
  std::filesystem::remove(file);
  EXPECT_EQ(second.epochs_completed(), 2);
  EXPECT_EQ(second.current_phase(), Phase::kFull);
  second.run();

  EXPECT_EQ(snapshot(second.params()), snapshot(full.params()));
  ASSERT_EQ(second.history().size(), full.history().size());
  EXPECT_EQ(second.history().back().train_loss, full.history().back().train_loss);
}

TEST(Training, RejectsMismatchedModel) {
  const SyntheticDataset data(tiny_data());
  AlignerConfig c = tiny_model(data.config());
  c.audio_dim += 1;
  EXPECT_THROW(Trainer(AlignerParams::create(c, 1), data, TrainConfig()), ConfigError);
}

TEST(Training, FeedProbabilitySchedule) {
  const SyntheticDataset data(tiny_data());
  TrainConfig c;
  c.phase1_epochs = 2;
  c.phase2_epochs = 5;
  c.free_running = false;
  c.scheduled_sampling = 0.8;
  const Trainer t(AlignerParams::create(tiny_model(data.config()), 1), data, c);
  EXPECT_EQ(t.feed_prediction_prob(0), 0.0);
  EXPECT_EQ(t.feed_prediction_prob(1), 0.0);
  EXPECT_EQ(t.feed_prediction_prob(2), 0.0);
  EXPECT_NEAR(t.feed_prediction_prob(4), 0.4, 1e-12);
  EXPECT_NEAR(t.feed_prediction_prob(6), 0.8, 1e-12);
  for (int e = 3; e < 7; ++e) EXPECT_GT(t.feed_prediction_prob(e), t.feed_prediction_prob(e - 1));

  c.free_running = true;
  const Trainer f(AlignerParams::create(tiny_model(data.config()), 1), data, c);
  EXPECT_EQ(f.feed_prediction_prob(1), 0.0);
  EXPECT_EQ(f.feed_prediction_prob(2), 1.0);

  c.free_running = false;
  c.scheduled_sampling = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}
