#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace sseg {

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so readers never see
/// a partially written artifact. Parent directories are created. Throws IOError.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// Reads a whole file. Throws IOError.
std::string read_file(const std::filesystem::path& path);

}  // namespace sseg
