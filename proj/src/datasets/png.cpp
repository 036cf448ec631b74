#include "sseg/datasets/png.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "sseg/core/errors.hpp"
#include "sseg/core/fs.hpp"

namespace sseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void on_png_error(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void no_flush(png_structp) {}

}  // namespace

Raster read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorCode::IOError, "cannot open " + path.string());

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::IOError, "libpng initialization failed");
  }

  Raster raster;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::CorruptSample, path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (depth < 8) png_set_packing(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  raster.height = static_cast<int>(png_get_image_height(png, info));
  raster.width = static_cast<int>(png_get_image_width(png, info));
  raster.channels = static_cast<int>(png_get_channels(png, info));
  raster.data.resize(static_cast<std::size_t>(raster.height) * raster.width * raster.channels);
  rows.resize(raster.height);
  for (int y = 0; y < raster.height; ++y) {
    rows[y] = raster.data.data() + static_cast<std::size_t>(y) * raster.width * raster.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (raster.channels != 1 && raster.channels != 3) {
    fail(ErrorCode::CorruptSample, path.string() + ": unsupported channel layout");
  }
  return raster;
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  check(raster.channels == 1 || raster.channels == 3, ErrorCode::IOError,
        "PNG export supports 1 or 3 channels");
  check(raster.height > 0 && raster.width > 0, ErrorCode::IOError, "PNG export of empty raster");

  std::vector<std::uint8_t> out;
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IOError, "libpng initialization failed");
  }
  std::vector<png_bytep> rows(raster.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IOError, "PNG encode failed: " + error);
  }
  png_set_write_fn(png, &out, append_bytes, no_flush);
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_set_IHDR(png, info, raster.width, raster.height, 8,
               raster.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_BASE, PNG_FILTER_TYPE_BASE);
  png_write_info(png, info);
  for (int y = 0; y < raster.height; ++y) {
    rows[y] = const_cast<png_bytep>(raster.data.data() +
                                    static_cast<std::size_t>(y) * raster.width * raster.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  write_file_atomic(path, encode_png(raster));
}

}  // namespace sseg
