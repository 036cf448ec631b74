#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/config.hpp"

namespace sseg {

/// Single-file container of named arrays plus a JSON metadata block.
///
/// Byte layout (all integers little-endian):
///   magic      8 bytes  "SSEGARC\0"
///   version    u32      kArchiveVersion
///   meta_len   u64      then meta_len bytes of UTF-8 JSON
///   count      u64      then `count` records:
///     name_len u32, name bytes
///     dtype    u8       0 f32, 1 f64, 2 i64, 3 u8, 4 f16, 5 i32, 6 bool
///     ndim     u32, dims i64[ndim]
///     nbytes   u64, raw contiguous element bytes
///   checksum   u64      FNV-1a over every preceding byte
struct Archive {
  static constexpr std::uint32_t kArchiveVersion = 1;

  ConfigNode metadata = ConfigNode::object();
  std::vector<std::pair<std::string, torch::Tensor>> arrays;

  void add(std::string name, const torch::Tensor& tensor);
  /// Null tensor when absent.
  torch::Tensor find(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_archive(const Archive& archive);
Archive deserialize_archive(const std::vector<std::uint8_t>& bytes);

/// Atomic write (write-then-rename). Throws IOError.
void save_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws IOError, CorruptFile (bad magic, truncation, checksum), VersionMismatch.
Archive load_archive(const std::filesystem::path& path);

}  // namespace sseg
