#include "chronoalign/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "chronoalign/ad/ops.hpp"
#include "chronoalign/error.hpp"

namespace chronoalign {

using ad::Graph;
using ad::LstmState;
using ad::Parameter;
using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// Config

void AlignerConfig::validate() const {
  if (n < 1 || m < n) throw ConfigError("aligner: need 1 <= n <= m");
  if (audio_dim < 1 || video_dim < 1 || encoder_hidden < 1 || embed_dim < 1 || rnn_hidden < 1 || rnn_layers < 1 ||
      label_embed_dim < 1 || attention_dim < 1)
    throw ConfigError("aligner: all sizes must be positive");
  for (int h : mlp_hidden)
    if (h < 1) throw ConfigError("aligner: mlp hidden sizes must be positive");
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("aligner: dropout_p must lie in [0, 1)");
}

nlohmann::json AlignerConfig::to_json() const {
  return {{"n", n},
          {"m", m},
          {"audio_dim", audio_dim},
          {"video_dim", video_dim},
          {"encoder_hidden", encoder_hidden},
          {"embed_dim", embed_dim},
          {"rnn_hidden", rnn_hidden},
          {"rnn_layers", rnn_layers},
          {"mlp_hidden", mlp_hidden},
          {"label_embed_dim", label_embed_dim},
          {"attention_dim", attention_dim},
          {"dropout_p", dropout_p},
          {"use_attention", use_attention}};
}

AlignerConfig AlignerConfig::from_json(const nlohmann::json& j) {
  AlignerConfig c;
  c.n = j.value("n", c.n);
  c.m = j.value("m", c.m);
  c.audio_dim = j.value("audio_dim", c.audio_dim);
  c.video_dim = j.value("video_dim", c.video_dim);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.rnn_hidden = j.value("rnn_hidden", c.rnn_hidden);
  c.rnn_layers = j.value("rnn_layers", c.rnn_layers);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.label_embed_dim = j.value("label_embed_dim", c.label_embed_dim);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.use_attention = j.value("use_attention", c.use_attention);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

Var FrameEncoder::operator()(Graph& g, Var frames) {
  return output_layer(g, ad::relu(hidden_layer(g, frames)));
}

void FrameEncoder::collect(std::vector<Parameter*>& out) {
  hidden_layer.collect(out);
  output_layer.collect(out);
}

AlignerParams AlignerParams::create(const AlignerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  AlignerParams p;
  p.config = cfg;
  p.enc_a = FrameEncoder("enc_a", cfg.audio_dim, cfg.encoder_hidden, cfg.embed_dim);
  p.enc_v = FrameEncoder("enc_v", cfg.video_dim, cfg.encoder_hidden, cfg.embed_dim);
  for (int l = 0; l < cfg.rnn_layers; ++l) {
    p.rnn_e.emplace_back("rnn_e." + std::to_string(l), l == 0 ? cfg.m : cfg.rnn_hidden, cfg.rnn_hidden);
    p.rnn_d.emplace_back("rnn_d." + std::to_string(l), l == 0 ? cfg.label_embed_dim + cfg.rnn_hidden : cfg.rnn_hidden,
                         cfg.rnn_hidden);
  }
  p.attn_w = Parameter("attn.w", cfg.rnn_hidden, cfg.attention_dim);
  p.attn_v = Parameter("attn.v", cfg.rnn_hidden, cfg.attention_dim);
  p.attn_b = Parameter("attn.b", 1, cfg.attention_dim);
  p.attn_u = Parameter("attn.u", cfg.attention_dim, 1);
  int width = 2 * cfg.rnn_hidden;
  for (std::size_t k = 0; k < cfg.mlp_hidden.size(); ++k) {
    p.mlp.emplace_back("mlp." + std::to_string(k), width, cfg.mlp_hidden[k]);
    width = cfg.mlp_hidden[k];
  }
  p.mlp.emplace_back("mlp." + std::to_string(cfg.mlp_hidden.size()), width, cfg.m);
  p.label_embed = Parameter("label_embed", cfg.m + 1, cfg.label_embed_dim);

  std::mt19937_64 rng(seed);
  for (auto* d : {&p.enc_a.hidden_layer, &p.enc_a.output_layer, &p.enc_v.hidden_layer, &p.enc_v.output_layer})
    ad::init_dense(*d, rng);
  for (auto& l : p.rnn_e) ad::init_lstm(l, rng);
  for (auto& l : p.rnn_d) ad::init_lstm(l, rng);
  ad::init_xavier_normal(p.attn_w.value, rng);
  ad::init_xavier_normal(p.attn_v.value, rng);
  ad::init_xavier_normal(p.attn_u.value, rng);
  for (auto& d : p.mlp) ad::init_dense(d, rng);
  ad::init_normal(p.label_embed.value, 0.0, 1.0, rng);
  for (Parameter* q : p.parameters()) q->zero_grad();
  return p;
}

std::vector<Parameter*> AlignerParams::parameters() {
  std::vector<Parameter*> out;
  enc_a.collect(out);
  enc_v.collect(out);
  for (auto& l : rnn_e) l.collect(out);
  for (auto& l : rnn_d) l.collect(out);
  for (Parameter* q : {&attn_w, &attn_v, &attn_b, &attn_u}) out.push_back(q);
  for (auto& d : mlp) d.collect(out);
  out.push_back(&label_embed);
  return out;
}

std::vector<Parameter*> AlignerParams::encoder_parameters() {
  std::vector<Parameter*> out;
  enc_a.collect(out);
  enc_v.collect(out);
  return out;
}

ad::Checkpoint AlignerParams::to_checkpoint() const {
  ad::Checkpoint ckpt;
  auto& self = const_cast<AlignerParams&>(*this);
  for (const Parameter* q : self.parameters()) ckpt.arrays.emplace_back(q->name, q->value);
  ckpt.meta["aligner"] = config.to_json();
  return ckpt;
}

AlignerParams AlignerParams::from_checkpoint(const ad::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("aligner")) throw ConfigError("checkpoint has no aligner config");
  AlignerParams p = create(AlignerConfig::from_json(ckpt.meta.at("aligner")), 0);
  for (Parameter* q : p.parameters()) {
    const Tensor* t = ckpt.find(q->name);
    if (t == nullptr) throw ConfigError("checkpoint is missing parameter " + q->name);
    if (!t->same_shape(q->value))
      throw ConfigError("checkpoint parameter " + q->name + " has shape " + t->shape_str() + ", expected " +
                        q->value.shape_str());
    q->value = *t;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward pieces

Tensor to_tensor(const FeatureSequence& seq) {
  Tensor t(seq.size(), seq.dim());
  for (int r = 0; r < seq.size(); ++r)
    for (int c = 0; c < seq.dim(); ++c) t(r, c) = seq.frames[r][c];
  return t;
}

EncodedPair encode_inputs(Graph& g, AlignerParams& p, const FeatureSequence& queries, const FeatureSequence& keys,
                          bool swap_roles) {
  const auto& cfg = p.config;
  FrameEncoder& q_enc = swap_roles ? p.enc_v : p.enc_a;
  FrameEncoder& k_enc = swap_roles ? p.enc_a : p.enc_v;
  if (queries.empty() || queries.dim() != q_enc.hidden_layer.in_dim())
    throw std::invalid_argument("encode_inputs: query frames have dim " + std::to_string(queries.dim()) +
                                ", encoder expects " + std::to_string(q_enc.hidden_layer.in_dim()));
  if (keys.dim() != k_enc.hidden_layer.in_dim())
    throw std::invalid_argument("encode_inputs: key frames have dim " + std::to_string(keys.dim()) +
                                ", encoder expects " + std::to_string(k_enc.hidden_layer.in_dim()));
  if (keys.size() != cfg.m)
    throw std::invalid_argument("encode_inputs: expected " + std::to_string(cfg.m) + " key frames, got " +
                                std::to_string(keys.size()));
  return {q_enc(g, g.constant(to_tensor(queries))), k_enc(g, g.constant(to_tensor(keys)))};
}

Var distance_features(const EncodedPair& pair) { return ad::pairwise_distances(pair.psi_a, pair.psi_v); }

SequenceEncoding encode_sequence(Graph& g, AlignerParams& p, Var rho) {
  const int n = rho.rows();
  Var layer_input = rho;
  SequenceEncoding enc;
  for (auto& layer : p.rnn_e) {
    if (layer_input.cols() != layer.in_dim()) throw std::invalid_argument("encode_sequence: width mismatch");
    // The input projection of all rows at once, then one recurrence per row.
    Var proj = ad::add_row(ad::matmul(layer_input, g.param(layer.wx)), g.param(layer.bias));
    LstmState state{g.constant(Tensor(1, layer.hidden())), g.constant(Tensor(1, layer.hidden()))};
    std::vector<Var> outputs;
    outputs.reserve(n);
    for (int t = 0; t < n; ++t) {
      state = ad::lstm_from_projection(g, ad::slice_rows(proj, t, 1), state, layer);
      outputs.push_back(state.h);
    }
    enc.final.push_back(state);
    layer_input = ad::concat_rows(outputs);
  }
  enc.outputs = layer_input;
  return enc;
}

Var attention_keys(Graph& g, AlignerParams& p, Var encoder_outputs) {
  return ad::add_row(ad::matmul(encoder_outputs, g.param(p.attn_v)), g.param(p.attn_b));
}

AttentionResult attention(Graph& g, AlignerParams& p, Var decoder_h, Var encoder_outputs, Var keys) {
  Var query = ad::matmul(decoder_h, g.param(p.attn_w));
  Var scores = ad::matmul(ad::tanh(ad::add_row(keys, query)), g.param(p.attn_u));  // n x 1
  Var alpha = ad::softmax_rows(ad::transpose(scores));                             // 1 x n
  return {ad::matmul(alpha, encoder_outputs), alpha};
}

AttentionResult attention(Graph& g, AlignerParams& p, Var decoder_h, Var encoder_outputs) {
  return attention(g, p, decoder_h, encoder_outputs, attention_keys(g, p, encoder_outputs));
}

DecoderState initial_decoder_state(Graph& g, const AlignerParams& p, const SequenceEncoding& enc) {
  DecoderState s;
  s.layers = enc.final;
  s.context = g.constant(Tensor(1, p.config.rnn_hidden));
  s.prev_label = p.config.sos_index();
  return s;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::vector<double> softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (out[i] = std::exp(logits[i] - mx));
  for (double& v : out) v /= z;
  return out;
}

DecodeStep decode_step(Graph& g, AlignerParams& p, const DecoderState& prev, const SequenceEncoding& enc, Var keys,
                       DecodeMode mode, int target, bool training, std::mt19937_64* rng) {
  const auto& cfg = p.config;
  if (prev.prev_label < 0 || prev.prev_label > cfg.m)
    throw std::invalid_argument("decode_step: previous label " + std::to_string(prev.prev_label) + " out of range");

  Var embed = ad::gather_rows(g.param(p.label_embed), {prev.prev_label});
  if (training) {
    if (rng == nullptr) throw std::invalid_argument("decode_step: training needs a dropout generator");
    embed = ad::dropout(embed, cfg.dropout_p, true, *rng);
  }
  Var x = ad::concat_cols({embed, prev.context});

  DecodeStep step;
  step.next.layers.reserve(prev.layers.size());
  for (std::size_t l = 0; l < p.rnn_d.size(); ++l) {
    LstmState s = ad::lstm_cell(g, x, prev.layers[l], p.rnn_d[l]);
    step.next.layers.push_back(s);
    x = s.h;
  }
  Var out = x;

  Var context = cfg.use_attention ? attention(g, p, out, enc.outputs, keys).context : enc.final.back().h;
  Var hidden = ad::concat_cols({out, context});
  for (std::size_t k = 0; k + 1 < p.mlp.size(); ++k) hidden = ad::relu(p.mlp[k](g, hidden));
  step.logits = p.mlp.back()(g, hidden);
  step.prediction = argmax(step.logits.value().values());

  step.next.context = context;
  const bool use_target = mode == DecodeMode::kTeacherForced && target >= 0 && target < cfg.m;
  step.next.prev_label = use_target ? target : step.prediction;
  return step;
}

ForwardResult forward_full(Graph& g, AlignerParams& p, const FeatureSequence& queries, const FeatureSequence& keys,
                           const LabelMap* labels, const ForwardOptions& opts) {
  if (opts.mode == DecodeMode::kTeacherForced && labels == nullptr)
    throw std::invalid_argument("forward_full: teacher forcing needs labels");
  if (labels != nullptr && static_cast<int>(labels->labels.size()) != queries.size())
    throw std::invalid_argument("forward_full: label count does not match query frames");

  EncodedPair encoded = encode_inputs(g, p, queries, keys, opts.swap_roles);
  Var rho = distance_features(encoded);
  SequenceEncoding enc = encode_sequence(g, p, rho);
  Var keys_proj = p.config.use_attention ? attention_keys(g, p, enc.outputs) : Var();
  DecoderState state = initial_decoder_state(g, p, enc);

  const bool sampling = opts.mode == DecodeMode::kTeacherForced && opts.feed_prediction_prob > 0.0;
  if (sampling && opts.rng == nullptr) throw std::invalid_argument("forward_full: scheduled sampling needs a generator");
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  ForwardResult res;
  std::vector<Var> losses;
  const int n = queries.size();
  for (int k = 0; k < n; ++k) {
    const int target = labels ? labels->labels[k] : LabelMap::kOutOfBounds;
    DecodeMode mode = opts.mode;
    if (sampling && coin(*opts.rng) < opts.feed_prediction_prob) mode = DecodeMode::kFreeRunning;
    DecodeStep step = decode_step(g, p, state, enc, keys_proj, mode, target, opts.training, opts.rng);
    res.probs.push_back(softmax(step.logits.value().values()));
    res.predictions.push_back(step.prediction);
    if (target != LabelMap::kOutOfBounds) losses.push_back(ad::cross_entropy(step.logits, target));
    state = std::move(step.next);
  }
  res.loss_terms = static_cast<int>(losses.size());
  if (!losses.empty()) res.loss_sum = ad::sum_all(ad::concat_cols(losses));
  return res;
}

ForwardResult forward_distance_matching(Graph& g, AlignerParams& p, const FeatureSequence& queries,
                                        const FeatureSequence& keys, const LabelMap& labels, double margin,
                                        bool swap_roles) {
  if (static_cast<int>(labels.labels.size()) != queries.size())
    throw std::invalid_argument("forward_distance_matching: label count does not match query frames");
  if (!(margin > 0.0)) throw std::invalid_argument("forward_distance_matching: margin must be positive");
  Var rho = distance_features(encode_inputs(g, p, queries, keys, swap_roles));
  const int n = rho.rows(), m = rho.cols();
  const Tensor& d = rho.value();

  // Matching pairs are pulled to distance 0, all others pushed beyond the
  // margin; the two terms are averaged separately per labelled frame.
  Tensor pos(n, m), neg(n, m), margins(n, m, margin);
  ForwardResult res;
  for (int k = 0; k < n; ++k) {
    std::vector<double> scores(m);
    for (int j = 0; j < m; ++j) scores[j] = -d(k, j);
    res.probs.push_back(softmax(scores));
    res.predictions.push_back(argmax(scores));
    const int target = labels.labels[k];
    if (target == LabelMap::kOutOfBounds) continue;
    ++res.loss_terms;
    for (int j = 0; j < m; ++j) {
      if (j == target)
        pos(k, j) = 1.0;
      else
        neg(k, j) = 1.0 / (m - 1);
    }
  }
  if (res.loss_terms == 0) return res;
  Var hinge = ad::relu(ad::sub(g.constant(margins), rho));
  Var pulled = ad::mul(ad::mul(rho, rho), g.constant(pos));
  Var pushed = ad::mul(ad::mul(hinge, hinge), g.constant(neg));
  res.loss_sum = ad::sum_all(ad::add(pulled, pushed));
  return res;
}

ForwardResult predict_window(const AlignerParams& p, const FeatureSequence& queries, const FeatureSequence& keys,
                             bool swap_roles) {
  Graph g(/*record=*/false);
  ForwardOptions opts;
  opts.swap_roles = swap_roles;
  // A non-recording graph only copies parameter values.
  return forward_full(g, const_cast<AlignerParams&>(p), queries, keys, nullptr, opts);
}

}  // namespace chronoalign
