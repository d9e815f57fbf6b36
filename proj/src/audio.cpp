#include "chronoalign/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "chronoalign/binary_io.hpp"
#include "chronoalign/error.hpp"

namespace chronoalign {

void PcmAudio::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("PcmAudio: sample_rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument("PcmAudio: non-finite sample");
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t read_u32(std::istream& is) { return binary::read_le<std::uint32_t>(is); }
std::uint16_t read_u16(std::istream& is) { return binary::read_le<std::uint16_t>(is); }

std::string read_tag(std::istream& is) {
  char tag[4];
  if (!is.read(tag, 4)) throw IoError("WAV: unexpected end of file");
  return std::string(tag, 4);
}

}  // namespace

PcmAudio load_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open WAV file: " + path.string());
  if (read_tag(is) != "RIFF") throw IoError("WAV: missing RIFF header");
  read_u32(is);
  if (read_tag(is) != "WAVE") throw IoError("WAV: missing WAVE tag");

  int channels = 0, sample_rate = 0, bits = 0;
  bool have_fmt = false;
  while (true) {
    const std::string id = read_tag(is);
    const std::uint32_t size = read_u32(is);
    if (id == "fmt ") {
      if (size < 16) throw IoError("WAV: fmt chunk too short");
      const std::uint16_t format = read_u16(is);
      channels = read_u16(is);
      sample_rate = static_cast<int>(read_u32(is));
      read_u32(is);  // byte rate
      read_u16(is);  // block align
      bits = read_u16(is);
      is.ignore(size - 16 + (size & 1));
      if (format != 1) throw UnsupportedFormatError("WAV: only PCM encoding is supported");
      if (bits != 16) throw UnsupportedFormatError("WAV: only 16-bit samples are supported");
      if (channels != 1 && channels != 2) throw UnsupportedFormatError("WAV: only mono or stereo is supported");
      if (sample_rate <= 0) throw IoError("WAV: invalid sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw IoError("WAV: data chunk before fmt chunk");
      const std::size_t frames = size / (2u * channels);
      PcmAudio audio;
      audio.sample_rate = sample_rate;
      audio.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c)
          acc += static_cast<std::int16_t>(read_u16(is)) / 32768.0;
        audio.samples[i] = acc / channels;
      }
      return audio;
    } else {
      is.ignore(size + (size & 1));
      if (!is) throw IoError("WAV: no data chunk");
    }
  }
}

void save_wav(const std::filesystem::path& path, const PcmAudio& audio) {
  audio.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write WAV file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  os.write("RIFF", 4);
  binary::write_le<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  binary::write_le<std::uint32_t>(os, 16);
  binary::write_le<std::uint16_t>(os, 1);
  binary::write_le<std::uint16_t>(os, 1);
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(audio.sample_rate));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  binary::write_le<std::uint16_t>(os, 2);
  binary::write_le<std::uint16_t>(os, 16);
  os.write("data", 4);
  binary::write_le<std::uint32_t>(os, data_bytes);
  for (double s : audio.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    binary::write_le(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw IoError("failed writing WAV file: " + path.string());
}

// ---------------------------------------------------------------------------
// Level

double rms(const PcmAudio& audio) {
  if (audio.samples.empty()) return 0.0;
  double sq = 0.0;
  for (double s : audio.samples) sq += s * s;
  return std::sqrt(sq / static_cast<double>(audio.samples.size()));
}

PcmAudio normalize_dbfs(const PcmAudio& audio, double target_dbfs) {
  audio.validate();
  const double current = rms(audio);
  if (!(current > 0.0)) throw NumericError("normalize_dbfs: cannot normalize silent audio");
  const double gain = std::pow(10.0, target_dbfs / 20.0) / current;
  PcmAudio out = audio;
  for (double& s : out.samples) s *= gain;
  return out;
}

// ---------------------------------------------------------------------------
// Spectral features

MfccConfig MfccConfig::mcd() {
  MfccConfig cfg;
  cfg.n_mel_bands = 60;
  cfg.window_ms = 64.0;
  cfg.hop_ms = 5.0;
  return cfg;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank MelFilterbank::create(int n_bands, int n_fft, int sample_rate, double low_hz, double high_hz) {
  if (n_bands < 1) throw ConfigError("mel filterbank needs at least one band");
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz <= sample_rate / 2.0))
    throw ConfigError("mel filterbank: need 0 <= low < high <= sample_rate/2");
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(low_hz), mel_hi = hz_to_mel(high_hz);
  std::vector<double> edges(n_bands + 2);
  for (int b = 0; b < n_bands + 2; ++b) edges[b] = mel_lo + (mel_hi - mel_lo) * b / (n_bands + 1);

  MelFilterbank fb;
  fb.weights.assign(n_bands, std::vector<double>(n_bins, 0.0));
  for (int b = 0; b < n_bands; ++b) {
    fb.center_hz.push_back(mel_to_hz(edges[b + 1]));
    double sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / n_fft);
      double w = 0.0;
      if (mel > edges[b] && mel <= edges[b + 1]) w = (mel - edges[b]) / (edges[b + 1] - edges[b]);
      else if (mel > edges[b + 1] && mel < edges[b + 2]) w = (edges[b + 2] - mel) / (edges[b + 2] - edges[b + 1]);
      fb.weights[b][k] = w;
      sum += w;
    }
    if (!(sum > 0.0))
      throw ConfigError("mel band " + std::to_string(b) + " covers no FFT bin; increase n_fft or reduce bands");
  }
  return fb;
}

std::vector<double> MelFilterbank::apply(const std::vector<double>& spectrum) const {
  std::vector<double> out(weights.size(), 0.0);
  for (std::size_t b = 0; b < weights.size(); ++b)
    for (std::size_t k = 0; k < spectrum.size(); ++k) out[b] += weights[b][k] * spectrum[k];
  return out;
}

std::vector<std::vector<double>> dct_ii_matrix(int size) {
  std::vector<std::vector<double>> m(size, std::vector<double>(size));
  for (int k = 0; k < size; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / size) : std::sqrt(2.0 / size);
    for (int n = 0; n < size; ++n) m[k][n] = s * std::cos(std::numbers::pi * k * (n + 0.5) / size);
  }
  return m;
}

int window_samples(const MfccConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.window_ms * sample_rate / 1000.0));
}

int hop_samples(const MfccConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.hop_ms * sample_rate / 1000.0));
}

int resolved_fft_size(const MfccConfig& cfg, int sample_rate) {
  const int w = window_samples(cfg, sample_rate);
  if (cfg.n_fft > 0) {
    if ((cfg.n_fft & (cfg.n_fft - 1)) != 0 || cfg.n_fft < w)
      throw ConfigError("n_fft must be a power of two >= the window length");
    return cfg.n_fft;
  }
  int n = 1;
  while (n < w) n <<= 1;
  return n;
}

namespace {

// The FFTW planner is not reentrant; execution on distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void validate_config(const MfccConfig& cfg, int sample_rate) {
  if (cfg.n_mel_bands < 1) throw ConfigError("n_mel_bands must be >= 1");
  if (!(cfg.hop_ms > 0.0) || cfg.hop_ms > cfg.window_ms) throw ConfigError("need 0 < hop_ms <= window_ms");
  const double high = cfg.mel_high_hz > 0.0 ? cfg.mel_high_hz : sample_rate / 2.0;
  if (!(cfg.mel_low_hz < high) || high > sample_rate / 2.0)
    throw ConfigError("need mel_low_hz < mel_high_hz <= sample_rate/2");
  if (hop_samples(cfg, sample_rate) < 1) throw ConfigError("hop shorter than one sample");
}

}  // namespace

FeatureSequence log_mel_spectrogram(const PcmAudio& audio, const MfccConfig& cfg) {
  audio.validate();
  validate_config(cfg, audio.sample_rate);
  const int sr = audio.sample_rate;
  const int w = window_samples(cfg, sr);
  const int h = hop_samples(cfg, sr);
  const int n_fft = resolved_fft_size(cfg, sr);
  const int n = static_cast<int>(audio.samples.size());
  if (n < w) throw std::invalid_argument("audio shorter than one analysis window");

  const double high = cfg.mel_high_hz > 0.0 ? cfg.mel_high_hz : sr / 2.0;
  const MelFilterbank fb = MelFilterbank::create(cfg.n_mel_bands, n_fft, sr, cfg.mel_low_hz, high);

  std::vector<double> window(w);
  for (int i = 0; i < w; ++i)
    window[i] = w > 1 ? 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (w - 1)) : 1.0;

  double* in = fftw_alloc_real(n_fft);
  fftw_complex* out = fftw_alloc_complex(n_fft / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n_fft, in, out, FFTW_ESTIMATE);
  }

  const int n_frames = (n - w) / h + 1;
  FeatureSequence seq;
  seq.frame_rate = 1000.0 / cfg.hop_ms;
  seq.frames.reserve(n_frames);
  std::vector<double> mag(n_fft / 2 + 1);
  for (int f = 0; f < n_frames; ++f) {
    const int start = f * h;
    for (int i = 0; i < n_fft; ++i) in[i] = i < w ? audio.samples[start + i] * window[i] : 0.0;
    fftw_execute(plan);
    for (int k = 0; k <= n_fft / 2; ++k) mag[k] = std::hypot(out[k][0], out[k][1]);
    std::vector<double> bands = fb.apply(mag);
    for (double& e : bands) e = std::log(std::max(e, 1e-10));
    seq.frames.push_back(std::move(bands));
  }

  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return seq;
}

FeatureSequence compute_mfcc(const PcmAudio& audio, const MfccConfig& cfg) {
  FeatureSequence logmel = log_mel_spectrogram(audio, cfg);
  const auto dct = dct_ii_matrix(cfg.n_mel_bands);
  const int first = cfg.include_c0 ? 0 : 1;
  for (auto& fr : logmel.frames) {
    std::vector<double> c;
    c.reserve(cfg.n_mel_bands - first);
    for (int k = first; k < cfg.n_mel_bands; ++k) {
      double s = 0.0;
      for (int j = 0; j < cfg.n_mel_bands; ++j) s += dct[k][j] * fr[j];
      c.push_back(s);
    }
    fr = std::move(c);
  }
  return logmel;
}

FeatureSequence stack_audio_frames(const FeatureSequence& mfcc, int steps, double stride_ms) {
  mfcc.validate();
  if (steps < 1) throw std::invalid_argument("stack_audio_frames: steps must be >= 1");
  const double hop_ms = 1000.0 / mfcc.frame_rate;
  const double ratio = stride_ms / hop_ms;
  const int stride = static_cast<int>(std::lround(ratio));
  if (stride < 1 || std::abs(ratio - stride) > 1e-9)
    throw std::invalid_argument("stack_audio_frames: stride_ms must be a multiple of the hop");
  if (mfcc.size() < steps) throw std::invalid_argument("stack_audio_frames: fewer frames than steps");

  const int d = mfcc.dim();
  const int count = (mfcc.size() - steps) / stride + 1;
  FeatureSequence out;
  out.frame_rate = 1000.0 / stride_ms;
  out.frames.reserve(count);
  for (int o = 0; o < count; ++o) {
    std::vector<double> block(static_cast<std::size_t>(d) * steps);
    for (int c = 0; c < d; ++c)
      for (int t = 0; t < steps; ++t) block[static_cast<std::size_t>(c) * steps + t] = mfcc.frames[o * stride + t][c];
    out.frames.push_back(std::move(block));
  }
  return out;
}

}  // namespace chronoalign
