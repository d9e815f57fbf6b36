#pragma once

#include <random>
#include <string>
#include <vector>

#include "chronoalign/ad/graph.hpp"

namespace chronoalign::ad {

/// y = x W + b, with W (in x out) and b (1 x out).
struct Dense {
  Dense() = default;
  Dense(const std::string& name, int in, int out)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

  Parameter weight;
  Parameter bias;

  int in_dim() const { return weight.value.rows(); }
  int out_dim() const { return weight.value.cols(); }
  Var operator()(Graph& g, Var x);
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight); out.push_back(&bias); }
};

/// One LSTM layer. Gate columns are laid out [input | forget | candidate | output].
struct LstmLayer {
  LstmLayer() = default;
  LstmLayer(const std::string& name, int in, int hidden)
      : wx(name + ".wx", in, 4 * hidden), wh(name + ".wh", hidden, 4 * hidden), bias(name + ".bias", 1, 4 * hidden) {}

  Parameter wx;
  Parameter wh;
  Parameter bias;

  int in_dim() const { return wx.value.rows(); }
  int hidden() const { return wh.value.rows(); }
  void collect(std::vector<Parameter*>& out) { out.push_back(&wx); out.push_back(&wh); out.push_back(&bias); }
};

struct LstmState {
  Var h;
  Var c;
};

/// Gate activations from precomputed input projection (x Wx + b) plus h_prev Wh.
LstmState lstm_from_projection(Graph& g, Var x_proj, const LstmState& prev, LstmLayer& layer);

/// Standard LSTM step: i, f, o = sigmoid; g = tanh; c = f*c_prev + i*g; h = o*tanh(c).
LstmState lstm_cell(Graph& g, Var x, const LstmState& prev, LstmLayer& layer);

// Initializers. All draw from the supplied generator only.

/// Rows (or columns, whichever are fewer) orthonormal.
void init_semi_orthogonal(Tensor& t, std::mt19937_64& rng);
/// N(0, sqrt(2 / (fan_in + fan_out))) with fan_in = rows, fan_out = cols.
void init_xavier_normal(Tensor& t, std::mt19937_64& rng);
void init_normal(Tensor& t, double mean, double stddev, std::mt19937_64& rng);

/// Semi-orthogonal Wx and Wh, zero bias except the forget gate bias which is 1.
void init_lstm(LstmLayer& layer, std::mt19937_64& rng);
/// Xavier-normal weight, zero bias.
void init_dense(Dense& layer, std::mt19937_64& rng);

}  // namespace chronoalign::ad
