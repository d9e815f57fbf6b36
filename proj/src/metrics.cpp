#include "chronoalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <set>
#include <stdexcept>
#include <tuple>

#include "chronoalign/error.hpp"

namespace chronoalign {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kMcdScale = 10.0 / std::numbers::ln10;
}  // namespace

CostMatrix CostMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  CostMatrix c(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int i = 0; i < c.rows; ++i) {
    if (static_cast<int>(rows[i].size()) != c.cols) throw std::invalid_argument("CostMatrix: ragged rows");
    for (int j = 0; j < c.cols; ++j) c(i, j) = rows[i][j];
  }
  return c;
}

CostMatrix CostMatrix::transposed() const {
  CostMatrix t(cols, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

void CostMatrix::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("CostMatrix: empty matrix");
  if (data.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("CostMatrix: size mismatch");
  for (double v : data)
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("CostMatrix: entries must be finite and >= 0");
}

CostMatrix pairwise_cost(const FeatureSequence& a, const FeatureSequence& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("pairwise_cost: dimension mismatch");
  CostMatrix c(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (int d = 0; d < a.dim(); ++d) {
        const double e = a.frames[i][d] - b.frames[j][d];
        s += e * e;
      }
      c(i, j) = std::sqrt(s);
    }
  return c;
}

// ---------------------------------------------------------------------------
// DTW

DtwResult dtw(const CostMatrix& cost) {
  cost.validate();
  const int n = cost.rows, m = cost.cols;
  CostMatrix acc(n, m, kInf);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double best = 0.0;
      if (i > 0 || j > 0) {
        best = kInf;
        if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
        if (i > 0) best = std::min(best, acc(i - 1, j));
        if (j > 0) best = std::min(best, acc(i, j - 1));
      }
      acc(i, j) = cost(i, j) + best;
    }

  DtwResult res;
  res.total_cost = acc(n - 1, m - 1);
  int i = n - 1, j = m - 1;
  res.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    res.path.emplace_back(i, j);
  }
  std::reverse(res.path.begin(), res.path.end());
  return res;
}

// ---------------------------------------------------------------------------
// Modified DTA

DtaResult modified_dta(const CostMatrix& cost, int max_jump) {
  cost.validate();
  if (max_jump < 0) throw std::invalid_argument("modified_dta: max_jump must be >= 0");
  if (cost.cols < cost.rows) throw std::invalid_argument("modified_dta: needs at least as many video as audio frames");
  const int n = cost.rows, m = cost.cols;
  std::vector<double> dist(static_cast<std::size_t>(n) * m, kInf);
  std::vector<int> prev(dist.size(), -1);
  std::vector<char> done(dist.size(), 0);
  auto idx = [m](int i, int j) { return static_cast<std::size_t>(i) * m + j; };

  using Item = std::tuple<double, int, int>;  // (distance, column, row)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (int j = 0; j < m; ++j) {
    dist[idx(0, j)] = cost(0, j);
    pq.emplace(cost(0, j), j, 0);
  }
  int sink = -1;
  while (!pq.empty()) {
    auto [d, j, i] = pq.top();
    pq.pop();
    const std::size_t u = idx(i, j);
    if (done[u]) continue;
    done[u] = 1;
    if (i == n - 1) {
      sink = j;
      break;
    }
    for (int jj = j; jj <= std::min(m - 1, j + max_jump); ++jj) {
      const std::size_t v = idx(i + 1, jj);
      const double nd = d + cost(i + 1, jj);
      if (!done[v] && nd < dist[v]) {
        dist[v] = nd;
        prev[v] = j;
        pq.emplace(nd, jj, i + 1);
      }
    }
  }

  DtaResult res;
  res.path.assign(n, 0);
  res.total_cost = dist[idx(n - 1, sink)];
  int j = sink;
  for (int i = n - 1; i >= 0; --i) {
    res.path[i] = j;
    if (i > 0) j = prev[idx(i, j)];
  }
  return res;
}

// ---------------------------------------------------------------------------
// Metrics

ShiftErrors shift_error_metrics(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("shift_error_metrics: length mismatch");
  ShiftErrors s;
  long long sum = 0;
  int exact = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] == LabelMap::kOutOfBounds) continue;
    const int e = std::abs(predicted[k] - truth[k]);
    sum += e;
    exact += e == 0;
    s.max = std::max(s.max, e);
    ++s.frames;
  }
  if (s.frames > 0) {
    s.mean = static_cast<double>(sum) / s.frames;
    s.top1 = static_cast<double>(exact) / s.frames;
  }
  return s;
}

EditStats edit_statistics(const std::vector<int>& path) {
  EditStats st;
  if (path.empty()) return st;
  for (int v : path)
    if (v < 0) throw std::invalid_argument("edit_statistics: path must be dense");
  std::set<int> used(path.begin(), path.end());
  st.unique = static_cast<int>(used.size());
  st.dup = static_cast<int>(path.size()) - st.unique;
  st.del = (*used.rbegin() - *used.begin() + 1) - st.unique;
  for (std::size_t k = 1; k < path.size(); ++k) st.conseq += path[k] == path[k - 1] + 1;
  return st;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double cepstral_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cepstral_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(2.0 * s);
}

double mcd(const FeatureSequence& ref, const FeatureSequence& test) {
  if (ref.size() != test.size()) throw std::invalid_argument("mcd: frame count mismatch");
  if (ref.empty()) throw std::invalid_argument("mcd: empty sequences");
  if (ref.dim() != test.dim()) throw std::invalid_argument("mcd: dimension mismatch");
  double s = 0.0;
  for (int k = 0; k < ref.size(); ++k) s += cepstral_distance(ref.frames[k], test.frames[k]);
  return kMcdScale * s / ref.size();
}

double mcd_dtw(const FeatureSequence& ref, const FeatureSequence& test) {
  if (ref.empty() || test.empty()) throw std::invalid_argument("mcd_dtw: empty sequences");
  if (ref.dim() != test.dim()) throw std::invalid_argument("mcd_dtw: dimension mismatch");
  CostMatrix c(ref.size(), test.size());
  for (int i = 0; i < ref.size(); ++i)
    for (int j = 0; j < test.size(); ++j) c(i, j) = cepstral_distance(ref.frames[i], test.frames[j]);
  const DtwResult r = dtw(c);
  return kMcdScale * r.total_cost / static_cast<double>(r.path.size());
}

// ---------------------------------------------------------------------------
// Report

nlohmann::json MetricReport::to_json() const {
  return {{"mean_shift_error", mean_shift_error},
          {"max_shift_error", max_shift_error},
          {"top1_accuracy", top1_accuracy},
          {"per_video_accuracy", per_video_accuracy},
          {"dup", dup},
          {"del", del},
          {"conseq", conseq},
          {"unique", unique},
          {"corr_x", corr_x},
          {"corr_y", corr_y},
          {"mcd", mcd},
          {"mcd_dtw", mcd_dtw}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.mean_shift_error = j.value("mean_shift_error", 0.0);
  r.max_shift_error = j.value("max_shift_error", 0.0);
  r.top1_accuracy = j.value("top1_accuracy", 0.0);
  r.per_video_accuracy = j.value("per_video_accuracy", 0.0);
  r.dup = j.value("dup", 0.0);
  r.del = j.value("del", 0.0);
  r.conseq = j.value("conseq", 0.0);
  r.unique = j.value("unique", 0.0);
  r.corr_x = j.value("corr_x", 0.0);
  r.corr_y = j.value("corr_y", 0.0);
  r.mcd = j.value("mcd", 0.0);
  r.mcd_dtw = j.value("mcd_dtw", 0.0);
  r.validate();
  return r;
}

void MetricReport::validate() const {
  for (double f : {top1_accuracy, per_video_accuracy})
    if (f < 0.0 || f > 1.0) throw ConfigError("MetricReport: fractions must lie in [0, 1]");
  for (double c : {dup, del, conseq, unique})
    if (c < 0.0) throw ConfigError("MetricReport: counts must be >= 0");
}

void write_metrics_csv(std::ostream& out, const std::vector<SequenceMetrics>& rows) {
  out << "id,frames,mean_shift_error,max_shift_error,top1_accuracy,shift_exact,dup,del,conseq,unique\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.id << ',' << r.shift.frames << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.shift.mean);
    out << buf << ',' << r.shift.max << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.shift.top1);
    out << buf << ',' << (r.shift_exact ? 1 : 0) << ',' << r.edits.dup << ',' << r.edits.del << ','
        << r.edits.conseq << ',' << r.edits.unique << '\n';
  }
}

void write_metric_report(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << report.to_json().dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace chronoalign
