#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sseg {

/// 8-bit interleaved raster, row-major HWC.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Decodes a PNG. Gray and palette images are returned as one channel holding the raw sample
/// or palette index (never color-mapped); RGB(A) is returned as 3-channel RGB. 16-bit samples
/// are reduced to 8 bits. Throws IOError/CorruptSample.
Raster read_png(const std::filesystem::path& path);

/// Encodes a 1-channel (gray) or 3-channel (RGB) raster with fixed settings and no timestamp
/// chunk, so equal rasters always produce equal bytes.
std::vector<std::uint8_t> encode_png(const Raster& raster);

/// encode_png + atomic write.
void write_png(const std::filesystem::path& path, const Raster& raster);

}  // namespace sseg
