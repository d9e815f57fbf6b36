#include "chronoalign/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "chronoalign/error.hpp"

namespace chronoalign {

// ---------------------------------------------------------------------------
// Votes

int VoteTable::total_votes(int frame) const {
  int s = 0;
  for (const auto& [idx, count] : votes.at(frame)) s += count;
  return s;
}

nlohmann::json VoteTable::to_json() const {
  nlohmann::json frames_json = nlohmann::json::array();
  for (int k = 0; k < frames(); ++k) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& [idx, count] : votes[k]) v.push_back({idx, count});
    frames_json.push_back({{"frame", k}, {"votes", v}, {"windows", windows[k]}});
  }
  return {{"frames", frames_json}};
}

int key_window_start(int s, int n, int m, int key_length) {
  const int centered = s - (m - n) / 2;
  return std::clamp(centered, 0, key_length - m);
}

VoteTable windowed_predict(const FeatureSequence& queries, const FeatureSequence& keys, const AlignerParams& params,
                           const WindowOptions& opts) {
  const int n = params.config.n, m = params.config.m;
  if (opts.stride < 1) throw ConfigError("windowed_predict: stride must be >= 1");
  if (queries.size() < n) throw std::invalid_argument("windowed_predict: need at least " + std::to_string(n) +
                                                      " query frames, got " + std::to_string(queries.size()));
  if (keys.size() < m) throw std::invalid_argument("windowed_predict: need at least " + std::to_string(m) +
                                                   " key frames, got " + std::to_string(keys.size()));

  std::vector<int> starts;
  for (int s = 0; s + n <= queries.size(); s += opts.stride) starts.push_back(s);
  std::vector<std::vector<int>> preds(starts.size());

  auto run = [&](std::size_t w) {
    const int s = starts[w];
    const int ks = key_window_start(s, n, m, keys.size());
    preds[w] = predict_window(params, queries.slice(s, n), keys.slice(ks, m), opts.swap_roles).predictions;
  };
  const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(starts.size())));
  if (threads == 1) {
    for (std::size_t w = 0; w < starts.size(); ++w) run(w);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t w = t; w < starts.size(); w += threads) run(w);
      });
    for (auto& th : pool) th.join();
  }

  VoteTable table;
  table.votes.resize(queries.size());
  table.windows.resize(queries.size());
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const int s = starts[w];
    const int ks = key_window_start(s, n, m, keys.size());
    for (int k = 0; k < n; ++k) {
      const int idx = ks + preds[w][k];
      if (idx < 0 || idx >= keys.size()) continue;
      ++table.votes[s + k][idx];
      table.windows[s + k].push_back(s);
    }
  }
  return table;
}

std::vector<std::vector<int>> candidate_sets(const VoteTable& votes) {
  std::vector<std::vector<int>> out(votes.frames());
  for (int k = 0; k < votes.frames(); ++k) {
    int best = 0;
    for (const auto& [idx, count] : votes.votes[k]) best = std::max(best, count);
    for (const auto& [idx, count] : votes.votes[k])
      if (count == best) out[k].push_back(idx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monotone matching

std::vector<int> longest_monotone_match(const std::vector<std::vector<int>>& candidates) {
  const int K = static_cast<int>(candidates.size());
  std::vector<int> values;
  for (const auto& c : candidates) values.insert(values.end(), c.begin(), c.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const int V = static_cast<int>(values.size());
  auto rank = [&](int v) { return static_cast<int>(std::lower_bound(values.begin(), values.end(), v) - values.begin()); };

  // best[k][r]: most assignments in frames k.. with every index >= values[r]
  // (r == 0 also stands for "no lower bound" since values[0] is the minimum).
  std::vector<std::vector<int>> best(K + 1, std::vector<int>(std::max(V, 1), 0));
  for (int k = K - 1; k >= 0; --k) {
    for (int r = 0; r < V; ++r) {
      int b = best[k + 1][r];
      for (int c : candidates[k]) {
        const int rc = rank(c);
        if (rc >= r) b = std::max(b, 1 + best[k + 1][rc]);
      }
      best[k][r] = b;
    }
  }

  std::vector<int> path(K, kGap);
  int r = 0;
  for (int k = 0; k < K && V > 0; ++k) {
    const int target = best[k][r];
    std::vector<int> sorted = candidates[k];
    std::sort(sorted.begin(), sorted.end());
    for (int c : sorted) {
      const int rc = rank(c);
      if (rc >= r && 1 + best[k + 1][rc] == target) {
        path[k] = c;
        r = rc;
        break;
      }
    }
  }
  return path;
}

std::vector<int> resume_after_break(const std::vector<int>& path, const std::vector<std::vector<int>>& candidates) {
  if (!candidates.empty() && candidates.size() != path.size())
    throw std::invalid_argument("resume_after_break: candidate count does not match the path");
  std::vector<int> out(path.size(), kGap);
  int last = std::numeric_limits<int>::min();
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path[k] != kGap && path[k] >= last) {
      out[k] = path[k];
      last = path[k];
    }
  }
  if (candidates.empty()) return out;

  // Fill remaining gaps from the candidates where an index fits between the
  // accepted neighbours.
  int prev = std::numeric_limits<int>::min();
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k] != kGap) {
      prev = out[k];
      continue;
    }
    int next = std::numeric_limits<int>::max();
    for (std::size_t j = k + 1; j < out.size(); ++j)
      if (out[j] != kGap) {
        next = out[j];
        break;
      }
    std::vector<int> sorted = candidates[k];
    std::sort(sorted.begin(), sorted.end());
    for (int c : sorted)
      if (c >= prev && c <= next) {
        out[k] = prev = c;
        break;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Smoothing

void SmoothingConfig::validate() const {
  if (sigma_grid.empty()) throw ConfigError("smoothing: sigma grid is empty");
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > 0.0)) throw ConfigError("smoothing: sigma values must be positive");
    if (i > 0 && sigma_grid[i] <= sigma_grid[i - 1]) throw ConfigError("smoothing: sigma grid must be increasing");
  }
  if (criterion_threshold < 0.0) throw ConfigError("smoothing: criterion threshold must be >= 0");
  if (!(truncation > 0.0)) throw ConfigError("smoothing: truncation must be positive");
}

nlohmann::json SmoothingConfig::to_json() const {
  return {{"sigma_grid", sigma_grid}, {"criterion_threshold", criterion_threshold}, {"truncation", truncation}};
}

SmoothingConfig SmoothingConfig::from_json(const nlohmann::json& j) {
  SmoothingConfig c;
  c.sigma_grid = j.value("sigma_grid", c.sigma_grid);
  c.criterion_threshold = j.value("criterion_threshold", c.criterion_threshold);
  c.truncation = j.value("truncation", c.truncation);
  c.validate();
  return c;
}

std::vector<double> gaussian_smooth(const std::vector<double>& curve, double sigma, double truncation) {
  const int L = static_cast<int>(curve.size());
  if (L < 2 || sigma <= 0.0) return curve;
  const int half = static_cast<int>(std::ceil(truncation * sigma));
  std::vector<double> kernel(2 * half + 1);
  double z = 0.0;
  for (int i = -half; i <= half; ++i) z += kernel[i + half] = std::exp(-0.5 * (i / sigma) * (i / sigma));
  for (double& w : kernel) w /= z;

  // Point reflection about the end samples, repeated for kernels wider than
  // the curve.
  std::vector<double> ext(L + 2 * half);
  auto value = [&](auto&& self, int i) -> double {
    if (i < 0) return 2.0 * curve[0] - self(self, -i);
    if (i >= L) return 2.0 * curve[L - 1] - self(self, 2 * (L - 1) - i);
    return curve[i];
  };
  for (int i = 0; i < L + 2 * half; ++i) ext[i] = value(value, i - half);

  std::vector<double> out(L, 0.0);
  for (int i = 0; i < L; ++i) {
    double s = 0.0;
    for (int t = 0; t <= 2 * half; ++t) s += kernel[t] * ext[i + t];
    out[i] = s;
  }
  return out;
}

double max_abs_second_difference(const std::vector<double>& curve) {
  double mx = 0.0;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i)
    mx = std::max(mx, std::abs(curve[i + 1] - 2.0 * curve[i] + curve[i - 1]));
  return mx;
}

SmoothResult adaptive_smooth(const std::vector<int>& path, const SmoothingConfig& cfg) {
  cfg.validate();
  const int K = static_cast<int>(path.size());
  SmoothResult res;
  std::vector<int> matches;
  for (int k = 0; k < K; ++k)
    if (path[k] != kGap) matches.push_back(k);

  if (matches.size() < 2) {
    res.fallback = true;
    const int offset = matches.empty() ? 0 : path[matches[0]] - matches[0];
    res.path.resize(K);
    for (int k = 0; k < K; ++k) res.path[k] = std::max(0, k + offset);
    return res;
  }

  const int first = matches.front(), last = matches.back();
  std::vector<double> curve(last - first + 1);
  for (std::size_t a = 0; a + 1 < matches.size(); ++a) {
    const int k0 = matches[a], k1 = matches[a + 1];
    const double v0 = path[k0], v1 = path[k1];
    for (int k = k0; k <= k1; ++k) curve[k - first] = v0 + (v1 - v0) * (k - k0) / (k1 - k0);
  }

  std::vector<double> smoothed;
  for (double sigma : cfg.sigma_grid) {
    smoothed = gaussian_smooth(curve, sigma, cfg.truncation);
    res.sigma = sigma;
    if (max_abs_second_difference(smoothed) <= cfg.criterion_threshold) break;
  }

  res.path.assign(K, 0);
  int running = std::numeric_limits<int>::min();
  for (int k = first; k <= last; ++k) {
    running = std::max(running, static_cast<int>(std::lround(smoothed[k - first])));
    res.path[k] = running;
  }
  for (int k = 0; k < first; ++k) res.path[k] = res.path[first];
  for (int k = last + 1; k < K; ++k) res.path[k] = res.path[last];
  return res;
}

FeatureSequence render_video_warp(const FeatureSequence& video, const std::vector<int>& path) {
  FeatureSequence out;
  out.frame_rate = video.frame_rate;
  out.frames.reserve(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path[k] < 0 || path[k] >= video.size())
      throw std::out_of_range("render_video_warp: index " + std::to_string(path[k]) + " at frame " +
                              std::to_string(k) + " outside [0, " + std::to_string(video.size()) + ")");
    out.frames.push_back(video.frames[path[k]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Global shift

int estimate_global_shift(const VoteTable& votes, int max_shift) {
  std::map<int, int> hist;
  const auto cands = candidate_sets(votes);
  for (int k = 0; k < static_cast<int>(cands.size()); ++k)
    for (int c : cands[k]) ++hist[c - k];
  if (hist.empty()) return 0;
  int best = 0, best_count = -1;
  for (const auto& [s, count] : hist) {
    const bool better = count > best_count ||
                        (count == best_count && (std::abs(s) < std::abs(best) ||
                                                 (std::abs(s) == std::abs(best) && s < best)));
    if (better) {
      best = s;
      best_count = count;
    }
  }
  return std::clamp(best, -max_shift, max_shift);
}

int estimate_global_shift(const FeatureSequence& audio, const FeatureSequence& video, const AlignerParams& params,
                          const WindowOptions& opts) {
  return estimate_global_shift(windowed_predict(audio, video, params, opts));
}

// ---------------------------------------------------------------------------
// Pipelines

AlignmentResult align_sequences(const FeatureSequence& queries, const FeatureSequence& keys,
                                const AlignerParams& params, const WindowOptions& opts,
                                const SmoothingConfig& smoothing) {
  AlignmentResult r;
  r.votes = windowed_predict(queries, keys, params, opts);
  r.candidates = candidate_sets(r.votes);
  r.raw_path = resume_after_break(longest_monotone_match(r.candidates), r.candidates);
  r.smoothed = adaptive_smooth(r.raw_path, smoothing);
  for (int& v : r.smoothed.path) v = std::clamp(v, 0, keys.size() - 1);
  return r;
}

AlignmentResult align_video_to_audio(const FeatureSequence& audio, const FeatureSequence& video,
                                     const AlignerParams& params, WindowOptions opts,
                                     const SmoothingConfig& smoothing) {
  opts.swap_roles = false;
  return align_sequences(audio, video, params, opts, smoothing);
}

AlignmentResult align_audio_to_video(const FeatureSequence& audio, const FeatureSequence& video,
                                     const AlignerParams& params, WindowOptions opts,
                                     const SmoothingConfig& smoothing) {
  opts.swap_roles = true;
  return align_sequences(video, audio, params, opts, smoothing);
}

// ---------------------------------------------------------------------------
// Path files

void write_path(std::ostream& os, const std::vector<int>& path) {
  os << "CHRONOPATH v1 count=" << path.size() << '\n';
  for (int v : path) os << v << '\n';
}

std::vector<int> read_path(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw IoError("path file: missing header");
  std::size_t count = 0;
  if (std::sscanf(header.c_str(), "CHRONOPATH v1 count=%zu", &count) != 1)
    throw UnsupportedFormatError("path file: bad header '" + header + "'");
  std::vector<int> path;
  path.reserve(count);
  std::string line;
  while (path.size() < count && std::getline(is, line)) {
    std::istringstream ls(line);
    int v = 0;
    if (!(ls >> v) || v < kGap) throw IoError("path file: bad entry '" + line + "'");
    path.push_back(v);
  }
  if (path.size() != count) throw IoError("path file: expected " + std::to_string(count) + " entries");
  return path;
}

void save_path(const std::filesystem::path& file, const std::vector<int>& path) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot write " + file.string());
  write_path(f, path);
  if (!f) throw IoError("write failed: " + file.string());
}

std::vector<int> load_path(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot open " + file.string());
  return read_path(f);
}

}  // namespace chronoalign
