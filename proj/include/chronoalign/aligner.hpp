#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "chronoalign/ad/checkpoint.hpp"
#include "chronoalign/ad/graph.hpp"
#include "chronoalign/ad/layers.hpp"
#include "chronoalign/feature_sequence.hpp"
#include "chronoalign/synth.hpp"

namespace chronoalign {

struct AlignerConfig {
  int n = kAudioWindow;   // query frames per window
  int m = kVideoWindow;   // key frames per window
  int audio_dim = 20;
  int video_dim = 16;
  int encoder_hidden = 64;
  int embed_dim = 32;
  int rnn_hidden = 64;
  int rnn_layers = 1;
  std::vector<int> mlp_hidden{64};
  int label_embed_dim = 32;
  int attention_dim = 64;
  double dropout_p = 0.1;
  bool use_attention = true;  // false: every context is the final encoder state

  /// Index of the start-of-sequence symbol in the label embedding table.
  int sos_index() const { return m; }
  void validate() const;

  nlohmann::json to_json() const;
  static AlignerConfig from_json(const nlohmann::json& j);
};

/// Two dense layers with a ReLU in between, applied to every frame independently.
struct FrameEncoder {
  FrameEncoder() = default;
  FrameEncoder(const std::string& name, int in, int hidden, int out)
      : hidden_layer(name + ".l1", in, hidden), output_layer(name + ".l2", hidden, out) {}

  ad::Dense hidden_layer;
  ad::Dense output_layer;

  ad::Var operator()(ad::Graph& g, ad::Var frames);
  void collect(std::vector<ad::Parameter*>& out);
};

struct AlignerParams {
  AlignerConfig config;
  FrameEncoder enc_a;
  FrameEncoder enc_v;
  std::vector<ad::LstmLayer> rnn_e;
  std::vector<ad::LstmLayer> rnn_d;
  ad::Parameter attn_w;  // decoder state -> attention space
  ad::Parameter attn_v;  // encoder output -> attention space
  ad::Parameter attn_b;
  ad::Parameter attn_u;  // attention space -> scalar score
  std::vector<ad::Dense> mlp;
  ad::Parameter label_embed;  // (m + 1) x label_embed_dim, last row is SOS

  /// Shapes from the config, LSTMs semi-orthogonal, dense layers Xavier normal.
  static AlignerParams create(const AlignerConfig& cfg, std::uint64_t seed);

  /// Stable order; used by the optimizer and checkpoints.
  std::vector<ad::Parameter*> parameters();
  /// Parameters of the two frame encoders only.
  std::vector<ad::Parameter*> encoder_parameters();

  ad::Checkpoint to_checkpoint() const;
  static AlignerParams from_checkpoint(const ad::Checkpoint& ckpt);
};

struct EncodedPair {
  ad::Var psi_a;  // n x embed_dim
  ad::Var psi_v;  // m x embed_dim
};

ad::Tensor to_tensor(const FeatureSequence& seq);

/// With swap_roles the query frames go through the video encoder and the key
/// frames through the audio encoder (audio-warp direction).
EncodedPair encode_inputs(ad::Graph& g, AlignerParams& p, const FeatureSequence& queries, const FeatureSequence& keys,
                          bool swap_roles = false);

/// d(i, j) = || psi_a(i) - psi_v(j) ||; row i is the distance vector of query i.
ad::Var distance_features(const EncodedPair& pair);

struct SequenceEncoding {
  ad::Var outputs;                     // n x rnn_hidden, top layer
  std::vector<ad::LstmState> final;    // per layer, after the last row
};

SequenceEncoding encode_sequence(ad::Graph& g, AlignerParams& p, ad::Var rho);

struct AttentionResult {
  ad::Var context;  // 1 x rnn_hidden
  ad::Var alpha;    // 1 x n
};

/// Projection V o_i + b of every encoder output; reusable across decoder steps.
ad::Var attention_keys(ad::Graph& g, AlignerParams& p, ad::Var encoder_outputs);
/// e_i = U^T tanh(W h + V o_i + b), alpha = softmax(e), c = sum_i alpha_i o_i.
AttentionResult attention(ad::Graph& g, AlignerParams& p, ad::Var decoder_h, ad::Var encoder_outputs,
                          ad::Var keys);
AttentionResult attention(ad::Graph& g, AlignerParams& p, ad::Var decoder_h, ad::Var encoder_outputs);

enum class DecodeMode { kTeacherForced, kFreeRunning };

struct DecoderState {
  std::vector<ad::LstmState> layers;
  ad::Var context;
  int prev_label = 0;
};

/// c_0 = 0, y_0 = SOS, decoder layers start from the encoder's final states.
DecoderState initial_decoder_state(ad::Graph& g, const AlignerParams& p, const SequenceEncoding& enc);

struct DecodeStep {
  ad::Var logits;  // 1 x m
  int prediction = 0;
  DecoderState next;
};

/// Argmax ties go to the lowest index.
int argmax(std::span<const double> values);
std::vector<double> softmax(std::span<const double> logits);

/// One decoder step. In teacher-forced mode the next state carries `target`
/// (when it is a valid index) as the fed-back label, otherwise the prediction.
DecodeStep decode_step(ad::Graph& g, AlignerParams& p, const DecoderState& prev, const SequenceEncoding& enc,
                       ad::Var keys, DecodeMode mode, int target, bool training, std::mt19937_64* rng);

struct ForwardOptions {
  DecodeMode mode = DecodeMode::kFreeRunning;
  bool training = false;
  bool swap_roles = false;
  std::mt19937_64* rng = nullptr;  // dropout; required when training
  // Teacher-forced mode only: probability that a step feeds back its own
  // prediction instead of the target (scheduled sampling). Drawn from rng.
  double feed_prediction_prob = 0.0;
};

struct ForwardResult {
  std::vector<std::vector<double>> probs;  // n rows of m probabilities
  std::vector<int> predictions;
  ad::Var loss_sum;  // sum of per-frame cross entropies over labelled frames
  int loss_terms = 0;
};

/// End-to-end pass over one window. labels may be null (no loss). Teacher
/// forcing needs labels.
ForwardResult forward_full(ad::Graph& g, AlignerParams& p, const FeatureSequence& queries,
                           const FeatureSequence& keys, const LabelMap* labels, const ForwardOptions& opts);

/// Encoder-only contrastive objective: for every labelled frame k the
/// squared distance to its target plus the mean squared hinge
/// max(0, margin - d_{k,j})^2 over all other key frames. Predictions are the
/// nearest key frames.
ForwardResult forward_distance_matching(ad::Graph& g, AlignerParams& p, const FeatureSequence& queries,
                                        const FeatureSequence& keys, const LabelMap& labels, double margin = 1.0,
                                        bool swap_roles = false);

/// Inference convenience: builds a non-recording graph, free-running.
ForwardResult predict_window(const AlignerParams& p, const FeatureSequence& queries, const FeatureSequence& keys,
                             bool swap_roles = false);

}  // namespace chronoalign
