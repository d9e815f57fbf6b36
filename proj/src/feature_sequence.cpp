#include "chronoalign/feature_sequence.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "chronoalign/binary_io.hpp"
#include "chronoalign/error.hpp"

namespace chronoalign {

FeatureSequence::FeatureSequence(std::vector<std::vector<double>> f, double rate)
    : frames(std::move(f)), frame_rate(rate) {}

void FeatureSequence::validate() const {
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate))
    throw std::invalid_argument("FeatureSequence: frame_rate must be positive");
  const std::size_t d = frames.empty() ? 0 : frames.front().size();
  for (const auto& fr : frames) {
    if (fr.size() != d) throw std::invalid_argument("FeatureSequence: ragged frames");
    for (double v : fr)
      if (!std::isfinite(v)) throw std::invalid_argument("FeatureSequence: non-finite value");
  }
}

FeatureSequence FeatureSequence::slice(int start, int count) const {
  if (start < 0 || count < 0 || start + count > size())
    throw std::invalid_argument("FeatureSequence::slice out of range");
  return FeatureSequence({frames.begin() + start, frames.begin() + start + count}, frame_rate);
}

namespace {

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_features_text(std::ostream& os, const FeatureSequence& seq) {
  seq.validate();
  os << "CHRONOFEAT v1 dim=" << seq.dim() << " rate=" << fmt9(seq.frame_rate)
     << " count=" << seq.size() << '\n';
  for (const auto& fr : seq.frames) {
    for (std::size_t k = 0; k < fr.size(); ++k) {
      if (k) os << ' ';
      os << fmt9(fr[k]);
    }
    os << '\n';
  }
}

FeatureSequence read_features_text(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty feature file");
  int dim = -1, count = -1;
  double rate = 0.0;
  char tag[16] = {};
  if (std::sscanf(line.c_str(), "CHRONOFEAT %15s dim=%d rate=%lf count=%d", tag, &dim, &rate, &count) != 4 ||
      std::string(tag) != "v1" || dim < 0 || count < 0)
    throw IoError("malformed CHRONOFEAT header: " + line);
  FeatureSequence seq;
  seq.frame_rate = rate;
  seq.frames.reserve(count);
  for (int i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw IoError("feature file truncated at frame " + std::to_string(i));
    std::istringstream ls(line);
    std::vector<double> fr(dim);
    for (int k = 0; k < dim; ++k)
      if (!(ls >> fr[k])) throw IoError("feature frame " + std::to_string(i) + " has too few values");
    double extra;
    if (ls >> extra) throw IoError("feature frame " + std::to_string(i) + " has too many values");
    seq.frames.push_back(std::move(fr));
  }
  try {
    seq.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(e.what());
  }
  return seq;
}

void write_features_binary(std::ostream& os, const FeatureSequence& seq) {
  seq.validate();
  os.write("CFT1", 4);
  binary::write_le(os, static_cast<std::uint32_t>(seq.dim()));
  binary::write_le(os, static_cast<std::uint32_t>(std::lround(seq.frame_rate * 1000.0)));
  binary::write_le(os, static_cast<std::uint32_t>(seq.size()));
  for (const auto& fr : seq.frames)
    for (double v : fr) binary::write_f32(os, static_cast<float>(v));
}

FeatureSequence read_features_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "CFT1") throw IoError("bad CFT1 magic");
  const auto dim = binary::read_le<std::uint32_t>(is);
  const auto rate_milli = binary::read_le<std::uint32_t>(is);
  const auto count = binary::read_le<std::uint32_t>(is);
  if (rate_milli == 0) throw IoError("CFT1: zero frame rate");
  FeatureSequence seq;
  seq.frame_rate = rate_milli / 1000.0;
  seq.frames.assign(count, std::vector<double>(dim));
  for (auto& fr : seq.frames)
    for (auto& v : fr) v = binary::read_f32(is);
  return seq;
}

FeatureSequence load_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file: " + path.string());
  char head[4] = {};
  is.read(head, 4);
  is.clear();
  is.seekg(0);
  if (std::string(head, 4) == "CFT1") return read_features_binary(is);
  return read_features_text(is);
}

void save_features(const std::filesystem::path& path, const FeatureSequence& seq) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write feature file: " + path.string());
  if (path.extension() == ".cft") write_features_binary(os, seq);
  else write_features_text(os, seq);
  if (!os) throw IoError("failed writing feature file: " + path.string());
}

}  // namespace chronoalign
