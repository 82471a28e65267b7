#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "isd4l/raster.hpp"

namespace isd4l {

enum class ImageLabel : int { healthy = 0, late_blight = 1 };

const char* to_string(ImageLabel label);
ImageLabel image_label_from_string(const std::string& s);

// Per-pixel label map aligned to a field image.
struct SegMask {
  static constexpr std::uint8_t kBackground = 0;
  static constexpr std::uint8_t kPlant = 1;
  static constexpr std::uint8_t kSymptom = 2;

  Raster pixels;  // single channel, values in {0, 1, 2}
};

struct FieldImage {
  std::string id;
  Raster pixels;  // RGB
  ImageLabel label = ImageLabel::healthy;
  std::optional<SegMask> mask;  // present iff label == late_blight

  int rows() const { return pixels.height; }
  int cols() const { return pixels.width; }
};

struct Dataset {
  std::vector<FieldImage> images;  // sorted by id
  std::string manifest_digest;     // sha256 of the manifest file bytes
  std::filesystem::path root;      // directory the manifest lives in

  int diseased_count() const;
  int healthy_count() const;
};

// Loads `manifest.json` (schema: {"version":1,"images":[{"id","image_path",
// "mask_path"|null,"label"}]}) with all paths relative to the manifest's
// directory. Every invariant is checked up front: diseased images must carry
// a mask of matching dimensions containing at least one symptom pixel, and
// mask samples must lie in {0,1,2}.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Configuration for the deterministic synthetic dataset: green textured
// canopy over soil, with dark elliptical lesions (and their footprints
// recorded in the mask) on the diseased images.
struct SynthConfig {
  int image_count = 22;
  int diseased_count = 9;
  int rows = 1000;
  int cols = 1500;
  int min_blobs = 4;
  int max_blobs = 9;
  double min_blob_radius = 22.0;
  double max_blob_radius = 45.0;
  double texture_scale = 1.0;  // multiplies all noise wavelengths
  std::uint64_t seed = 0;
};

// Per-image generator cross-check data (not part of the on-disk artifact).
struct SynthImageStats {
  std::string id;
  bool diseased = false;
  std::int64_t blob_pixels_composited = 0;   // pixels painted as lesion
  std::int64_t blob_pixels_on_canopy = 0;    // of those, how many were canopy before
  std::int64_t canopy_pixels = 0;            // pre-lesion canopy size
};

// Writes PNGs plus manifest.json into out_dir and returns the dataset loaded
// back from disk. Fully deterministic in config.seed: images are generated
// from per-image derived streams, so output is byte-identical across runs
// and independent of scheduling.
Dataset generate_synthetic(const SynthConfig& config,
                           const std::filesystem::path& out_dir,
                           std::vector<SynthImageStats>* stats = nullptr);

}  // namespace isd4l
