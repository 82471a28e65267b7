#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace isd4l {

// Row-major 8-bit raster, 1 (mask/heatmap) or 3 (RGB) channels, interleaved.
// Coordinates are x = column, y = row; (0,0) is the top-left pixel.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;

  Raster(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 1 || h < 1 || (c != 1 && c != 3))
      throw std::invalid_argument("raster: bad shape");
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }

  std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }

  bool same_shape(const Raster& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  bool operator==(const Raster& o) const = default;
};

}  // namespace isd4l
