#pragma once

// Versioned binary checkpoint:
//
//   "MMVRCKPT"                      8-byte magic
//   u32 format version
//   u32 length, bytes               model kind tag
//   u32 length, bytes               header JSON (hyperparameters, seed)
//   u32 block count
//   per block: u32 length, name bytes, u32 rank, u64 dims[rank]
//   per block, in index order: little-endian f64 values
//
// All integers are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmvr/tensor.hpp"

namespace mmvr {

struct ModelCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string kind;
  std::uint32_t version = kFormatVersion;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor>> blocks;

  const Tensor& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

std::string encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& file);
ModelCheckpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace mmvr
