#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mvpt {

// 64-bit FNV-1a. Stable across runs and platforms; used for config and
// dataset fingerprints, not for security.
class Fnv1a {
 public:
  void Update(std::string_view bytes);
  void Update(const void* data, size_t size);
  uint64_t digest() const { return state_; }
  std::string HexDigest() const;

 private:
  uint64_t state_ = 0xcbf29ce484222325ull;
};

// SplitMix64 finalizer; derives well-spread seeds from small integers.
uint64_t SplitMix64(uint64_t x);
// Seed for a sub-stream identified by `key` under `seed`.
inline uint64_t MixSeed(uint64_t seed, uint64_t key) {
  return SplitMix64(SplitMix64(seed) ^ (key * 0xd1342543de82ef95ULL + 1));
}

std::string HashString(std::string_view bytes);

// Hash of every regular file under `root` (relative path + contents), visited
// in sorted path order.
std::string HashDirectory(const std::filesystem::path& root);

}  // namespace mvpt
