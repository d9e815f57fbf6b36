#include "chronoalign/ad/checkpoint.hpp"

#include <fstream>
#include <string_view>

#include "chronoalign/binary_io.hpp"
#include "chronoalign/error.hpp"

namespace chronoalign::ad {
namespace {
constexpr std::string_view kMagic = "CKPT1";
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["dtype"] = "float64";
  header["step"] = ckpt.step;
  header["rng_seed"] = ckpt.rng_seed;
  header["meta"] = ckpt.meta;
  auto& list = header["arrays"] = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.arrays)
    list.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  os << header.dump() << '\n';
  for (const auto& [name, t] : ckpt.arrays)
    for (double v : t.values()) binary::write_f64(os, v);
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[5];
  if (!is.read(magic, 5) || std::string_view(magic, 5) != kMagic)
    throw IoError("not a checkpoint (bad magic): " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }
  if (header.value("dtype", "") != "float64") throw UnsupportedFormatError("checkpoint dtype must be float64");

  Checkpoint ckpt;
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.rng_seed = header.at("rng_seed").get<std::uint64_t>();
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("arrays")) {
    const int rows = entry.at("shape").at(0).get<int>();
    const int cols = entry.at("shape").at(1).get<int>();
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = binary::read_f64(is);
    ckpt.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace chronoalign::ad
