#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace chronoalign {

/// Time-ordered feature vectors of a common dimension at a fixed frame rate.
/// Both modalities (audio inputs and video inputs) use this representation.
struct FeatureSequence {
  std::vector<std::vector<double>> frames;
  double frame_rate = 25.0;

  FeatureSequence() = default;
  FeatureSequence(std::vector<std::vector<double>> f, double rate);

  int size() const { return static_cast<int>(frames.size()); }
  bool empty() const { return frames.empty(); }
  /// Dimension of the frames; 0 for an empty sequence.
  int dim() const { return frames.empty() ? 0 : static_cast<int>(frames.front().size()); }

  /// Throws std::invalid_argument on ragged frames, non-positive rate, or
  /// non-finite values.
  void validate() const;

  /// Frames [start, start + count).
  FeatureSequence slice(int start, int count) const;

  friend bool operator==(const FeatureSequence&, const FeatureSequence&) = default;
};

// Text format:   "CHRONOFEAT v1 dim=<d> rate=<fps> count=<n>" then n lines of d
//                decimals at 9 significant digits.
// Binary format: "CFT1", u32 d, u32 round(fps * 1000), u32 n, then n*d float32,
//                all little-endian.

void write_features_text(std::ostream& os, const FeatureSequence& seq);
FeatureSequence read_features_text(std::istream& is);
void write_features_binary(std::ostream& os, const FeatureSequence& seq);
FeatureSequence read_features_binary(std::istream& is);

/// Picks the format from the file's leading bytes.
FeatureSequence load_features(const std::filesystem::path& path);
/// Binary when the extension is ".cft", text otherwise.
void save_features(const std::filesystem::path& path, const FeatureSequence& seq);

}  // namespace chronoalign
