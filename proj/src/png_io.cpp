#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "dentalx/errors.hpp"
#include "dentalx/image.hpp"

namespace dentalx {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void write_png(const std::filesystem::path& path, const Raster<std::uint8_t>& raster, int color_type,
               std::span<const Rgb> palette) {
  if (raster.width <= 0 || raster.height <= 0) throw DataError("write_png: empty raster");
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, raster.width, raster.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> colors;
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    for (const Rgb& c : palette) colors.push_back({c.r, c.g, c.b});
    png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
  }
  png_write_info(png, info);
  for (int y = 0; y < raster.height; ++y) {
    auto* row = const_cast<png_bytep>(&raster.data[static_cast<std::size_t>(y) * raster.width]);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_gray_png(const std::filesystem::path& path, const GrayImage& image) {
  write_png(path, image, PNG_COLOR_TYPE_GRAY, {});
}

void write_indexed_png(const std::filesystem::path& path, const LabelMask& mask,
                       std::span<const Rgb> palette) {
  if (palette.empty() || palette.size() > 256) throw DataError("palette must hold 1..256 colors");
  for (std::uint8_t v : mask.data)
    if (v >= palette.size()) throw DataError("mask value outside palette");
  write_png(path, mask, PNG_COLOR_TYPE_PALETTE, palette);
}

Raster<std::uint8_t> read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failed");
  }
  Raster<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng read failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE && depth < 8) png_set_packing(png);
  if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG layout: " + path.string());
  }
  out = Raster<std::uint8_t>(width, height);
  for (int y = 0; y < height; ++y) png_read_row(png, &out.data[static_cast<std::size_t>(y) * width], nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace dentalx
