#pragma once

#include <filesystem>
#include <vector>

#include "chronoalign/feature_sequence.hpp"

namespace chronoalign {

/// Mono samples in [-1, 1].
struct PcmAudio {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  void validate() const;
};

/// RIFF/WAVE, 16-bit PCM, mono or stereo. Stereo is averaged to mono and
/// samples are scaled by 1/32768.
PcmAudio load_wav(const std::filesystem::path& path);
/// 16-bit mono PCM; samples are clamped to the representable range.
void save_wav(const std::filesystem::path& path, const PcmAudio& audio);

double rms(const PcmAudio& audio);
/// Scales the signal so its RMS equals 10^(target_dbfs / 20). Throws on silence.
PcmAudio normalize_dbfs(const PcmAudio& audio, double target_dbfs);

struct MfccConfig {
  int n_mel_bands = 13;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 0;  // 0 selects the next power of two >= window length
  double mel_low_hz = 0.0;
  double mel_high_hz = 0.0;  // 0 selects sample_rate / 2
  bool include_c0 = true;

  /// 60 coefficients, 64 ms window, 5 ms hop: the mel-cepstra used for MCD.
  static MfccConfig mcd();
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-mel filterbank over the bins 0..n_fft/2.
struct MelFilterbank {
  std::vector<std::vector<double>> weights;  // n_bands x (n_fft/2 + 1)
  std::vector<double> center_hz;

  static MelFilterbank create(int n_bands, int n_fft, int sample_rate, double low_hz, double high_hz);
  std::vector<double> apply(const std::vector<double>& spectrum) const;
};

/// Orthonormal DCT-II matrix (size x size); rows are basis vectors.
std::vector<std::vector<double>> dct_ii_matrix(int size);

int window_samples(const MfccConfig& cfg, int sample_rate);
int hop_samples(const MfccConfig& cfg, int sample_rate);
int resolved_fft_size(const MfccConfig& cfg, int sample_rate);

/// Hamming window -> magnitude spectrum -> mel filterbank -> log(max(e, 1e-10)).
/// One frame per hop, floor((N - W) / H) + 1 frames.
FeatureSequence log_mel_spectrogram(const PcmAudio& audio, const MfccConfig& cfg);

/// log_mel_spectrogram followed by an orthonormal DCT-II; keeps n_mel_bands
/// coefficients (c0 dropped when include_c0 is false).
FeatureSequence compute_mfcc(const PcmAudio& audio, const MfccConfig& cfg);

/// Flattens `steps` consecutive MFCC frames into one input frame, coefficient
/// major (d x steps), advancing by stride_ms. Output rate is 1000 / stride_ms.
FeatureSequence stack_audio_frames(const FeatureSequence& mfcc, int steps = 20, double stride_ms = 40.0);

}  // namespace chronoalign
