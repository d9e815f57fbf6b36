#include "chronoalign/ad/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "chronoalign/ad/ops.hpp"

namespace chronoalign::ad {

Var Dense::operator()(Graph& g, Var x) {
  return add_row(matmul(x, g.param(weight)), g.param(bias));
}

LstmState lstm_from_projection(Graph& g, Var x_proj, const LstmState& prev, LstmLayer& layer) {
  const int hsz = layer.hidden();
  if (x_proj.cols() != 4 * hsz || prev.h.cols() != hsz || prev.c.cols() != hsz)
    throw std::invalid_argument("lstm: state/projection shape does not match layer");
  Var gates = add(x_proj, matmul(prev.h, g.param(layer.wh)));
  Var i = sigmoid(slice_cols(gates, 0, hsz));
  Var f = sigmoid(slice_cols(gates, hsz, hsz));
  Var cand = tanh(slice_cols(gates, 2 * hsz, hsz));
  Var o = sigmoid(slice_cols(gates, 3 * hsz, hsz));
  Var c = add(mul(f, prev.c), mul(i, cand));
  Var h = mul(o, tanh(c));
  return {h, c};
}

LstmState lstm_cell(Graph& g, Var x, const LstmState& prev, LstmLayer& layer) {
  if (x.cols() != layer.in_dim()) throw std::invalid_argument("lstm_cell: input width mismatch");
  Var proj = add_row(matmul(x, g.param(layer.wx)), g.param(layer.bias));
  return lstm_from_projection(g, proj, prev, layer);
}

void init_semi_orthogonal(Tensor& t, std::mt19937_64& rng) {
  const int rows = t.rows(), cols = t.cols();
  if (rows == 0 || cols == 0) return;
  // Gram-Schmidt over the shorter dimension of a Gaussian matrix.
  const bool by_rows = rows <= cols;
  const int count = by_rows ? rows : cols;
  const int len = by_rows ? cols : rows;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  basis.reserve(count);
  while (static_cast<int>(basis.size()) < count) {
    std::vector<double> v(len);
    for (double& x : v) x = normal(rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) {
        double dot = 0.0;
        for (int k = 0; k < len; ++k) dot += v[k] * q[k];
        for (int k = 0; k < len; ++k) v[k] -= dot * q[k];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  for (int a = 0; a < count; ++a)
    for (int k = 0; k < len; ++k) {
      if (by_rows) t(a, k) = basis[a][k];
      else t(k, a) = basis[a][k];
    }
}

void init_xavier_normal(Tensor& t, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / (t.rows() + t.cols()));
  init_normal(t, 0.0, stddev, rng);
}

void init_normal(Tensor& t, double mean, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(mean, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
}

void init_lstm(LstmLayer& layer, std::mt19937_64& rng) {
  init_semi_orthogonal(layer.wx.value, rng);
  init_semi_orthogonal(layer.wh.value, rng);
  layer.bias.value.fill(0.0);
  const int hsz = layer.hidden();
  for (int j = hsz; j < 2 * hsz; ++j) layer.bias.value[j] = 1.0;
}

void init_dense(Dense& layer, std::mt19937_64& rng) {
  init_xavier_normal(layer.weight.value, rng);
  layer.bias.value.fill(0.0);
}

}  // namespace chronoalign::ad
