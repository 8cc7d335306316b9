#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dentalx {

// Row-major single-channel raster.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

using GrayImage = Raster<std::uint8_t>;
// Per-pixel anatomy label: 0 = background, 1..C_s = named anatomy classes.
using LabelMask = Raster<std::uint8_t>;

struct Rgb {
  std::uint8_t r, g, b;
};

void write_gray_png(const std::filesystem::path& path, const GrayImage& image);

// 8-bit indexed PNG; pixel values are palette indices.
void write_indexed_png(const std::filesystem::path& path, const LabelMask& mask,
                       std::span<const Rgb> palette);

// Reads an 8-bit gray or palette PNG and returns the raw sample values
// (palette indices are not expanded).
Raster<std::uint8_t> read_png(const std::filesystem::path& path);

}  // namespace dentalx
