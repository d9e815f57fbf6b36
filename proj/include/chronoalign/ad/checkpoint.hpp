#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chronoalign/ad/tensor.hpp"

namespace chronoalign::ad {

/// On disk: the bytes "CKPT1", one line of compact JSON header (array names,
/// shapes, dtype, step count, rng seed, free-form metadata), then every array as
/// little-endian float64 in header order.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> arrays;
  std::int64_t step = 0;
  std::uint64_t rng_seed = 0;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace chronoalign::ad
