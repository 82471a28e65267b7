#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "isd4l/raster.hpp"

namespace isd4l {

// Minimal lossless PNG codec for the pipeline's own files: 8-bit depth,
// grayscale (masks, heatmaps) or RGB (images, patches), no interlacing.
// Encoding is deterministic: fixed zlib level, filter 0 on every scanline,
// so identical rasters produce identical bytes.

std::vector<std::uint8_t> encode_png(const Raster& img);
Raster decode_png(const std::uint8_t* bytes, std::size_t len);

void write_png(const std::filesystem::path& path, const Raster& img);
Raster read_png(const std::filesystem::path& path);

}  // namespace isd4l
