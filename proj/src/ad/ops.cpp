#include "chronoalign/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace chronoalign::ad {
namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("op on an empty Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::invalid_argument("operands live on different graphs");
  return graph_of(a);
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

// out (r x c) += a (r x k) * b (k x c)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const int r = a.rows(), k = a.cols(), c = b.cols();
  for (int i = 0; i < r; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * c;
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + static_cast<std::size_t>(p) * c;
      for (int j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

// out (r x k) += g (r x c) * b^T, b is (k x c)
void gemm_nt(const Tensor& g, const Tensor& b, Tensor& out) {
  const int r = g.rows(), c = g.cols(), k = b.rows();
  for (int i = 0; i < r; ++i) {
    const double* grow = g.data() + static_cast<std::size_t>(i) * c;
    double* orow = out.data() + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b.data() + static_cast<std::size_t>(p) * c;
      double s = 0.0;
      for (int j = 0; j < c; ++j) s += grow[j] * brow[j];
      orow[p] += s;
    }
  }
}

// out (k x c) += a^T * g, a is (r x k), g is (r x c)
void gemm_tn(const Tensor& a, const Tensor& g, Tensor& out) {
  const int r = a.rows(), k = a.cols(), c = g.cols();
  for (int i = 0; i < r; ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * k;
    const double* grow = g.data() + static_cast<std::size_t>(i) * c;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* orow = out.data() + static_cast<std::size_t>(p) * c;
      for (int j = 0; j < c; ++j) orow[j] += av * grow[j];
    }
  }
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdy) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const int ia = a.id();
  return g.emit(std::move(out), {ia}, [ia, dfdy](Graph& gr, int self) {
    const Tensor& y = gr.value(self);
    const Tensor& x = gr.value(ia);
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdy(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    if (gr.needs_grad(ia)) gemm_nt(gout, gr.value(ib), gr.grad(ia));
    if (gr.needs_grad(ib)) gemm_tn(gr.value(ia), gout, gr.grad(ib));
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    for (int in : {ia, ib}) {
      if (!gr.needs_grad(in)) continue;
      Tensor& gi = gr.grad(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    if (gr.needs_grad(ia)) {
      Tensor& ga = gr.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
    }
    if (gr.needs_grad(ib)) {
      Tensor& gb = gr.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gout[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    if (gr.needs_grad(ia)) {
      Tensor& ga = gr.grad(ia);
      const Tensor& bv = gr.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * bv[i];
    }
    if (gr.needs_grad(ib)) {
      Tensor& gb = gr.grad(ib);
      const Tensor& av = gr.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  const int ia = a.id();
  return g.emit(std::move(out), {ia}, [ia, s](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    Tensor& ga = gr.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * gout[i];
  });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
  Tensor out = av;
  const int c = av.cols();
  for (int r = 0; r < av.rows(); ++r)
    for (int j = 0; j < c; ++j) out(r, j) += rv[j];
  const int ia = a.id(), ir = row.id();
  return g.emit(std::move(out), {ia, ir}, [ia, ir](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    if (gr.needs_grad(ia)) {
      Tensor& ga = gr.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
    }
    if (gr.needs_grad(ir)) {
      Tensor& grow = gr.grad(ir);
      const int c = gout.cols();
      for (int r = 0; r < gout.rows(); ++r)
        for (int j = 0; j < c; ++j) grow[j] += gout(r, j);
    }
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  const int c = av.cols();
  for (int r = 0; r < av.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, av(r, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += (out(r, j) = std::exp(av(r, j) - mx));
    for (int j = 0; j < c; ++j) out(r, j) /= z;
  }
  const int ia = a.id();
  return g.emit(std::move(out), {ia}, [ia](Graph& gr, int self) {
    const Tensor& y = gr.value(self);
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(ia);
    const int c = y.cols();
    for (int r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += gy(r, j) * y(r, j);
      for (int j = 0; j < c; ++j) gx(r, j) += y(r, j) * (gy(r, j) - dot);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Graph& g = graph_of(parts.front());
  const int rows = parts.front().rows();
  int cols = 0;
  std::vector<int> ids;
  std::vector<int> offsets;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw std::invalid_argument("concat_cols: operands on different graphs");
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (int r = 0; r < rows; ++r)
      std::copy_n(pv.data() + static_cast<std::size_t>(r) * pv.cols(), pv.cols(),
                  out.data() + static_cast<std::size_t>(r) * cols + offsets[k]);
  }
  return g.emit(std::move(out), ids, [ids, offsets](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.needs_grad(ids[k])) continue;
      Tensor& gi = gr.grad(ids[k]);
      for (int r = 0; r < gi.rows(); ++r)
        for (int j = 0; j < gi.cols(); ++j) gi(r, j) += gout(r, offsets[k] + j);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Graph& g = graph_of(parts.front());
  const int cols = parts.front().cols();
  int rows = 0;
  std::vector<int> ids;
  std::vector<int> offsets;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw std::invalid_argument("concat_rows: operands on different graphs");
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    std::copy_n(pv.data(), pv.size(), out.data() + static_cast<std::size_t>(offsets[k]) * cols);
  }
  return g.emit(std::move(out), ids, [ids, offsets](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    const int cols = gout.cols();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.needs_grad(ids[k])) continue;
      Tensor& gi = gr.grad(ids[k]);
      const double* src = gout.data() + static_cast<std::size_t>(offsets[k]) * cols;
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += src[i];
    }
  });
}

Var slice_cols(Var a, int start, int count) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols())
    throw std::invalid_argument("slice_cols: range out of bounds for " + av.shape_str());
  Tensor out(av.rows(), count);
  for (int r = 0; r < av.rows(); ++r)
    for (int j = 0; j < count; ++j) out(r, j) = av(r, start + j);
  const int ia = a.id();
  return g.emit(std::move(out), {ia}, [ia, start](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    Tensor& ga = gr.grad(ia);
    for (int r = 0; r < gout.rows(); ++r)
      for (int j = 0; j < gout.cols(); ++j) ga(r, start + j) += gout(r, j);
  });
}

Var slice_rows(Var a, int start, int count) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows())
    throw std::invalid_argument("slice_rows: range out of bounds for " + av.shape_str());
  const std::size_t off = static_cast<std::size_t>(start) * av.cols();
  std::vector<double> buf(av.data() + off, av.data() + off + static_cast<std::size_t>(count) * av.cols());
  Tensor out(count, av.cols(), std::move(buf));
  const int ia = a.id();
  return g.emit(std::move(out), {ia}, [ia, off](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    Tensor& ga = gr.grad(ia);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[off + i] += gout[i];
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  for (int r = 0; r < av.rows(); ++r)
    for (int c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  const int ia = a.id();
  return g.emit(std::move(out), {ia}, [ia](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    Tensor& ga = gr.grad(ia);
    for (int r = 0; r < ga.rows(); ++r)
      for (int c = 0; c < ga.cols(); ++c) ga(r, c) += gout(c, r);
  });
}

Var gather_rows(Var table, const std::vector<int>& indices) {
  Graph& g = graph_of(table);
  const Tensor& tv = table.value();
  Tensor out(static_cast<int>(indices.size()), tv.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int idx = indices[k];
    if (idx < 0 || idx >= tv.rows())
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) + " out of range");
    std::copy_n(tv.data() + static_cast<std::size_t>(idx) * tv.cols(), tv.cols(),
                out.data() + k * tv.cols());
  }
  const int it = table.id();
  return g.emit(std::move(out), {it}, [it, indices](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    Tensor& gt = gr.grad(it);
    const int c = gt.cols();
    for (std::size_t k = 0; k < indices.size(); ++k)
      for (int j = 0; j < c; ++j) gt(indices[k], j) += gout(static_cast<int>(k), j);
  });
}

Var sum_all(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const int ia = a.id();
  return g.emit(Tensor(1, 1, s), {ia}, [ia](Graph& gr, int self) {
    const double gs = gr.grad(self)[0];
    Tensor& ga = gr.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
  });
}

Var euclidean_distance(Var u, Var v) {
  const Tensor& uv = u.value();
  const Tensor& vv = v.value();
  if (uv.rows() != 1 || !uv.same_shape(vv)) shape_error("euclidean_distance", uv, vv);
  return pairwise_distances(u, v);
}

Var pairwise_distances(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("pairwise_distances", av, bv);
  const int n = av.rows(), m = bv.rows(), d = av.cols();
  Tensor out(n, m);
  for (int i = 0; i < n; ++i) {
    const double* ar = av.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const double* br = bv.data() + static_cast<std::size_t>(j) * d;
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = ar[k] - br[k];
        s += diff * diff;
      }
      out(i, j) = std::sqrt(s);
    }
  }
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& dist = gr.value(self);
    const Tensor& gout = gr.grad(self);
    const Tensor& av = gr.value(ia);
    const Tensor& bv = gr.value(ib);
    const bool need_a = gr.needs_grad(ia), need_b = gr.needs_grad(ib);
    Tensor* ga = need_a ? &gr.grad(ia) : nullptr;
    Tensor* gb = need_b ? &gr.grad(ib) : nullptr;
    const int n = av.rows(), m = bv.rows(), d = av.cols();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        const double dij = dist(i, j);
        // The gradient of |x| at 0 is taken as 0 (subgradient).
        if (dij <= 1e-300) continue;
        const double w = gout(i, j) / dij;
        if (w == 0.0) continue;
        for (int k = 0; k < d; ++k) {
          const double diff = av(i, k) - bv(j, k);
          if (ga) (*ga)(i, k) += w * diff;
          if (gb) (*gb)(j, k) -= w * diff;
        }
      }
    }
  });
}

Var dropout(Var x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor mask(xv.rows(), xv.cols());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int ix = x.id();
  return g.emit(std::move(out), {ix}, [ix, mask = std::move(mask)](Graph& gr, int self) {
    const Tensor& gout = gr.grad(self);
    Tensor& gx = gr.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * mask[i];
  });
}

Var cross_entropy(Var logits, int target) {
  Graph& g = graph_of(logits);
  const Tensor& lv = logits.value();
  if (lv.rows() != 1) throw std::invalid_argument("cross_entropy: logits must be a single row");
  if (target < 0 || target >= lv.cols())
    throw std::invalid_argument("cross_entropy: target " + std::to_string(target) + " out of range");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : lv.values()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : lv.values()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  const int il = logits.id();
  return g.emit(Tensor(1, 1, lse - lv[target]), {il}, [il, target, lse](Graph& gr, int self) {
    const double gs = gr.grad(self)[0];
    const Tensor& lv = gr.value(il);
    Tensor& gl = gr.grad(il);
    for (std::size_t j = 0; j < gl.size(); ++j) gl[j] += gs * std::exp(lv[j] - lse);
    gl[target] -= gs;
  });
}

}  // namespace chronoalign::ad
