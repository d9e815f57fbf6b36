#pragma once

#include <cstdint>
#include <string_view>

namespace chronoalign {

/// Splits a root seed per purpose: splitmix64(root ^ fnv1a(purpose) ^ mix(index)).
/// Purposes in use: "data", "mixing", "pair", "example", "sequence", "init",
/// "shuffle", "step", "dropout", "jitter".
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace chronoalign
