#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "chronoalign/ad/checkpoint.hpp"
#include "chronoalign/ad/graph.hpp"
#include "chronoalign/ad/layers.hpp"
#include "chronoalign/ad/ops.hpp"
#include "chronoalign/ad/optim.hpp"
#include "chronoalign/error.hpp"
#include "oracles.hpp"

using namespace chronoalign;
using namespace chronoalign::ad;

namespace {

Parameter random_param(const std::string& name, int r, int c, std::mt19937_64& rng, double sd = 1.0) {
  Parameter p(name, r, c);
  std::normal_distribution<double> n(0.0, sd);
  for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = n(rng);
  return p;
}

// Contracts the op output with fixed random weights so every output entry
// contributes to the scalar, then compares against central differences.
void expect_op_gradients(std::vector<Parameter>& inputs, const std::function<Var(Graph&, std::vector<Var>&)>& op,
                         std::uint64_t seed = 11) {
  std::vector<Parameter*> ptrs;
  for (auto& p : inputs) ptrs.push_back(&p);
  Tensor weights;
  auto loss_graph = [&](Graph& g) {
    std::vector<Var> vars;
    for (auto* p : ptrs) vars.push_back(g.param(*p));
    Var out = op(g, vars);
    if (weights.empty()) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> n(0.0, 1.0);
      weights = Tensor(out.rows(), out.cols());
      for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = n(rng);
    }
    return sum_all(mul(out, g.constant(weights)));
  };
  {
    Graph g;
    Var l = loss_graph(g);
    zero_grads(ptrs);
    g.backward(l);
  }
  auto loss = [&] {
    Graph g(false);
    return loss_graph(g).value()[0];
  };
  const auto rep = oracle::gradient_check(ptrs, loss, 1e-6, 1e-5, 1e-8);
  EXPECT_LE(rep.worst_ratio, 1.0) << rep.worst_name << "[" << rep.worst_index << "]";
}

}  // namespace

TEST(Ops, ForwardValues) {
  Graph g;
  Var u = g.constant(Tensor::row({0.0, 0.0}));
  Var v = g.constant(Tensor::row({3.0, 4.0}));
  EXPECT_DOUBLE_EQ(euclidean_distance(u, v).value()[0], 5.0);

  Var a = g.constant(Tensor(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6}));
  Var b = g.constant(Tensor(3, 2, std::vector<double>{7, 8, 9, 10, 11, 12}));
  const Tensor& ab = matmul(a, b).value();
  EXPECT_EQ(ab, Tensor(2, 2, std::vector<double>{58, 64, 139, 154}));

  const Tensor& sm = softmax_rows(g.constant(Tensor::row({1.0, 1.0, 1.0, 1.0}))).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(sm[i], 0.25);

  EXPECT_EQ(relu(g.constant(Tensor::row({-1.0, 0.0, 2.0}))).value(), Tensor::row({0.0, 0.0, 2.0}));
  EXPECT_EQ(transpose(a).value(), Tensor(3, 2, std::vector<double>{1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(slice_cols(a, 1, 2).value(), Tensor(2, 2, std::vector<double>{2, 3, 5, 6}));
  EXPECT_EQ(gather_rows(b, {2, 0}).value(), Tensor(2, 2, std::vector<double>{11, 12, 7, 8}));
}

TEST(Ops, PairwiseDistancesMatchRowwiseEuclidean) {
  std::mt19937_64 rng(3);
  Parameter a = random_param("a", 4, 5, rng), b = random_param("b", 6, 5, rng);
  Graph g;
  const Tensor& d = pairwise_distances(g.param(a), g.param(b)).value();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int k = 0; k < 5; ++k) s += std::pow(a.value(i, k) - b.value(j, k), 2);
      EXPECT_NEAR(d(i, j), std::sqrt(s), 1e-12);
    }
}

TEST(Ops, CrossEntropyValues) {
  Graph g;
  Var uniform = g.constant(Tensor(1, 75));
  EXPECT_NEAR(cross_entropy(uniform, 10).value()[0], std::log(75.0), 1e-12);
  EXPECT_NEAR(std::log(75.0), 4.3175, 1e-4);

  Tensor peaked(1, 75);
  peaked[3] = 100.0;
  EXPECT_LT(cross_entropy(g.constant(peaked), 3).value()[0], 1e-9);
  EXPECT_THROW(cross_entropy(g.constant(peaked), 75), std::invalid_argument);
}

TEST(Ops, DropoutIsIdentityOutsideTraining) {
  std::mt19937_64 rng(1);
  Graph g;
  Var x = g.constant(Tensor::row({1.0, 2.0, 3.0}));
  EXPECT_EQ(dropout(x, 0.5, false, rng).value(), x.value());
  // Inverted dropout keeps the expectation.
  Tensor big(1, 20000, 1.0);
  const Tensor& y = dropout(g.constant(big), 0.1, true, rng).value();
  double mean = 0.0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-12);
    mean += v;
  }
  EXPECT_NEAR(mean / 20000.0, 1.0, 0.02);
}

TEST(OpsGradient, Elementwise) {
  std::mt19937_64 rng(5);
  std::vector<Parameter> in{random_param("a", 3, 4, rng), random_param("b", 3, 4, rng)};
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return add(v[0], v[1]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return sub(v[0], v[1]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return mul(v[0], v[1]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return scale(v[0], -2.5); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return tanh(v[0]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return sigmoid(v[1]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return relu(v[0]); });
}

TEST(OpsGradient, MatmulAndBroadcast) {
  std::mt19937_64 rng(6);
  std::vector<Parameter> in{random_param("a", 3, 4, rng), random_param("b", 4, 2, rng),
                            random_param("r", 1, 2, rng)};
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return add_row(matmul(v[0], v[1]), v[2]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return matmul(transpose(v[1]), transpose(v[0])); });
}

TEST(OpsGradient, ShapeOps) {
  std::mt19937_64 rng(7);
  std::vector<Parameter> in{random_param("a", 3, 4, rng), random_param("b", 3, 2, rng),
                            random_param("c", 2, 4, rng)};
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return concat_cols({v[0], v[1]}); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return concat_rows({v[0], v[2]}); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return slice_cols(v[0], 1, 2); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return slice_rows(v[0], 1, 2); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return gather_rows(v[0], {2, 0, 2}); });
}

TEST(OpsGradient, SoftmaxDistanceCrossEntropy) {
  std::mt19937_64 rng(8);
  std::vector<Parameter> in{random_param("a", 3, 5, rng), random_param("b", 4, 5, rng),
                            random_param("l", 1, 6, rng)};
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return softmax_rows(v[0]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return pairwise_distances(v[0], v[1]); });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) {
    return euclidean_distance(slice_rows(v[0], 0, 1), slice_rows(v[1], 2, 1));
  });
  expect_op_gradients(in, [](Graph&, std::vector<Var>& v) { return cross_entropy(v[2], 4); });
}

TEST(Graph, BackwardVisitsEachNodeOnceInBothOrders) {
  std::mt19937_64 rng(9);
  Parameter a = random_param("a", 2, 3, rng), w = random_param("w", 3, 3, rng);
  auto build = [&](Graph& g) {
    Var x = g.param(a);
    Var h = tanh(matmul(x, g.param(w)));
    Var y = add(h, mul(h, h));  // h consumed twice
    return sum_all(add(y, matmul(x, g.param(w))));
  };
  Graph g1, g2;
  Var l1 = build(g1), l2 = build(g2);
  a.zero_grad();
  w.zero_grad();
  g1.backward(l1, 1.0, BackwardOrder::kReverseCreation);
  const Tensor ga = a.grad, gw = w.grad;
  a.zero_grad();
  w.zero_grad();
  g2.backward(l2, 1.0, BackwardOrder::kTopological);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(a.grad[i], ga[i], 1e-14);
  for (std::size_t i = 0; i < gw.size(); ++i) EXPECT_NEAR(w.grad[i], gw[i], 1e-14);
  for (int c : g1.visit_counts()) EXPECT_LE(c, 1);
  for (int c : g2.visit_counts()) EXPECT_LE(c, 1);
}

TEST(Graph, ParameterSharesOneNode) {
  Parameter p("p", 1, 2);
  Graph g;
  EXPECT_EQ(g.param(p).id(), g.param(p).id());
}

TEST(Graph, GradientsStayOnGraphWhenNotAccumulating) {
  std::mt19937_64 rng(10);
  Parameter a = random_param("a", 1, 3, rng);
  a.zero_grad();
  Graph g;
  Var l = sum_all(mul(g.param(a), g.param(a)));
  g.backward(l, 1.0, BackwardOrder::kReverseCreation, false);
  for (double v : a.grad.values()) EXPECT_EQ(v, 0.0);
  const Tensor* pg = g.param_grad(a);
  ASSERT_NE(pg, nullptr);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR((*pg)[i], 2.0 * a.value[i], 1e-14);
}

TEST(Lstm, ForgetBiasOnlyCell) {
  std::mt19937_64 rng(1);
  LstmLayer layer("l", 3, 4);
  init_lstm(layer, rng);
  layer.wx.value.fill(0.0);
  layer.wh.value.fill(0.0);
  for (int j = 0; j < 16; ++j) EXPECT_EQ(layer.bias.value[j], (j >= 4 && j < 8) ? 1.0 : 0.0);

  Graph g;
  const Tensor c_prev = Tensor::row({0.5, -1.0, 2.0, 0.0});
  LstmState s = lstm_cell(g, g.constant(Tensor::row({1.0, 2.0, 3.0})),
                          {g.constant(Tensor(1, 4)), g.constant(c_prev)}, layer);
  const double f = 1.0 / (1.0 + std::exp(-1.0));
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(s.c.value()[j], f * c_prev[j], 1e-15);
    EXPECT_NEAR(s.h.value()[j], 0.5 * std::tanh(f * c_prev[j]), 1e-15);
  }
}

TEST(Lstm, CellGradients) {
  std::mt19937_64 rng(2);
  LstmLayer layer("l", 3, 4);
  init_lstm(layer, rng);
  std::vector<Parameter*> params;
  layer.collect(params);
  Parameter x = random_param("x", 2, 3, rng);
  params.push_back(&x);
  auto build = [&](Graph& g) {
    LstmState s{g.constant(Tensor(1, 4)), g.constant(Tensor(1, 4))};
    for (int t = 0; t < 2; ++t) s = lstm_cell(g, slice_rows(g.param(x), t, 1), s, layer);
    return sum_all(mul(s.h, s.c));
  };
  zero_grads(params);
  {
    Graph g;
    g.backward(build(g));
  }
  auto loss = [&] {
    Graph g(false);
    return build(g).value()[0];
  };
  const auto rep = oracle::gradient_check(params, loss, 1e-6, 1e-5, 1e-9);
  EXPECT_LE(rep.worst_ratio, 1.0) << rep.worst_name;
}

TEST(Init, SemiOrthogonalRowsOrColumns) {
  std::mt19937_64 rng(4);
  for (auto [r, c] : {std::pair{5, 12}, std::pair{12, 5}, std::pair{6, 6}}) {
    Tensor t(r, c);
    init_semi_orthogonal(t, rng);
    const bool by_rows = r <= c;
    const int k = by_rows ? r : c, len = by_rows ? c : r;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        double dot = 0.0;
        for (int i = 0; i < len; ++i) dot += by_rows ? t(a, i) * t(b, i) : t(i, a) * t(i, b);
        EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-10);
      }
  }
}

TEST(Init, XavierAndNormalStatistics) {
  std::mt19937_64 rng(5);
  Tensor t(300, 500);
  init_xavier_normal(t, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : t.values()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(t.size());
  EXPECT_NEAR(s / n, 0.0, 3e-3);
  EXPECT_NEAR(std::sqrt(s2 / n), std::sqrt(2.0 / 800.0), 1e-3);

  Tensor u(200, 200);
  init_normal(u, 1.0, 0.02, rng);
  s = s2 = 0.0;
  for (double v : u.values()) {
    s += v;
    s2 += (v - 1.0) * (v - 1.0);
  }
  EXPECT_NEAR(s / u.size(), 1.0, 1e-3);
  EXPECT_NEAR(std::sqrt(s2 / u.size()), 0.02, 1e-3);
}

TEST(Adam, FirstStepsMatchHandComputation) {
  Parameter p("p", 1, 2);
  p.value = Tensor::row({1.0, -2.0});
  std::vector<Parameter*> ps{&p};
  AdamState st(AdamConfig{0.1, 0.5, 0.999, 1e-8});
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  const double grads[3][2] = {{0.5, -1.0}, {0.25, 2.0}, {-1.0, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    p.grad = Tensor::row({grads[t - 1][0], grads[t - 1][1]});
    adam_step(ps, st);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.5 * m[i] + 0.5 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.5, t)), vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value[i], x[i], 1e-12);
    }
  }
  EXPECT_EQ(st.step, 3);
}

TEST(Adam, RejectsInvalidBetas) {
  EXPECT_THROW(AdamState(AdamConfig{1e-3, 1.0, 0.999, 1e-8}), ConfigError);
}

TEST(Clip, JointNormCapped) {
  Parameter a("a", 1, 2), b("b", 1, 1);
  a.grad = Tensor::row({3.0, 0.0});
  b.grad = Tensor::row({4.0});
  std::vector<Parameter*> ps{&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 5.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(6);
  Checkpoint c;
  c.arrays.emplace_back("w", random_param("w", 3, 4, rng).value);
  c.arrays.emplace_back("b", Tensor::row({0.1, 1e-300, -0.0}));
  c.step = 42;
  c.rng_seed = 0xfeedfacecafebeefULL;
  c.meta["note"] = "x";
  const auto path = std::filesystem::temp_directory_path() / "chronoalign_ckpt_test.ckpt";
  save_checkpoint(path, c);
  const Checkpoint d = load_checkpoint(path);
  ASSERT_EQ(d.arrays.size(), 2u);
  EXPECT_EQ(d.arrays[0].first, "w");
  EXPECT_EQ(d.arrays[0].second, c.arrays[0].second);
  EXPECT_EQ(std::memcmp(d.arrays[1].second.data(), c.arrays[1].second.data(), 3 * sizeof(double)), 0);
  EXPECT_EQ(d.step, 42);
  EXPECT_EQ(d.rng_seed, c.rng_seed);
  EXPECT_EQ(d.meta, c.meta);
  ASSERT_NE(d.find("b"), nullptr);
  EXPECT_EQ(d.find("zzz"), nullptr);

  std::ifstream f(path, std::ios::binary);
  char magic[5];
  f.read(magic, 5);
  EXPECT_EQ(std::string(magic, 5), "CKPT1");
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFiles) {
  const auto path = std::filesystem::temp_directory_path() / "chronoalign_not_ckpt.bin";
  std::ofstream(path) << "hello";
  EXPECT_THROW(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
