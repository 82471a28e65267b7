#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "isd4l/dataset.hpp"
#include "isd4l/raster.hpp"
#include "isd4l/rng.hpp"

namespace isd4l {

// Random transform drawn for one patch: rotate the source by theta, crop to
// the blank-free inscribed rectangle, take the t x t square at (x, y).
struct PatchSpec {
  double theta = 0.0;  // radians, in [-pi, pi]
  int t = 0;           // square side, pixels
  int x = 0;           // top-left column in the inscribed-rect frame
  int y = 0;           // top-left row in the inscribed-rect frame
  std::string source_image_id;
};

struct LabeledPatch {
  Raster pixels;  // t x t RGB
  ImageLabel label = ImageLabel::healthy;
  PatchSpec spec;
  std::int64_t symptom_pixel_count = 0;
};

struct PatchSet {
  std::vector<LabeledPatch> patches;  // grouped by source image, draw order
  int rho = 0;
  std::uint64_t seed = 0;
  std::string manifest_digest;

  // Digest over every record (spec, label, count) and every pixel byte, in
  // order. Two runs agree iff their patch sets are identical in content.
  std::string content_digest() const;

  std::size_t positive_count() const;
};

struct SamplerOptions {
  int min_symptom_pixels = 1;
  int max_redraws = 100;      // (theta, t) attempts before PatchCannotFit
  double zoom_min = 0.15;     // t range as a fraction of l = min(rows, cols)
  double zoom_max = 0.25;
};

// Draws theta ~ U[-pi, pi], integer t ~ U[ceil(zoom_min*l), floor(zoom_max*l)]
// and a uniform in-bounds position inside the inscribed rectangle of the
// rotated (rows x cols) image. Redraws (theta, t) when the square cannot fit;
// throws PatchCannotFit after options.max_redraws attempts.
PatchSpec draw_patch_spec(RandomSource& rng, int rows, int cols,
                          const SamplerOptions& options = {});

// Counts symptom pixels (value 2) in a {0,1,2} mask patch. Label is
// late_blight iff the count reaches min_symptom_pixels. Throws
// InvalidMaskValue on any other sample.
std::pair<ImageLabel, std::int64_t> label_from_mask(const Raster& mask_patch,
                                                    int min_symptom_pixels = 1);

// Extracts the RGB patch (bilinear) and, when the image carries a mask, the
// pixel-aligned mask patch (nearest, same spec) to derive the label. Images
// without a mask yield healthy patches.
LabeledPatch extract_labeled_patch(const FieldImage& image, const PatchSpec& spec,
                                   int min_symptom_pixels = 1);

// rho patches per image. Each image consumes its own derived RNG stream
// (StreamDomain::patch_sampling, index = position in the id-sorted dataset),
// so the result is identical for any thread count. threads == 0 picks the
// hardware concurrency.
PatchSet generate_patchset(const Dataset& dataset, int rho, std::uint64_t seed,
                           int threads = 0, const SamplerOptions& options = {});

// Patch-set archive: <dir>/patchset.json plus one PNG per patch. Lossless
// and bit-exact: load_patchset(save_patchset(ps)) reproduces every pixel and
// record, and re-saving produces byte-identical files.
void save_patchset(const PatchSet& ps, const std::filesystem::path& dir);
PatchSet load_patchset(const std::filesystem::path& dir);

}  // namespace isd4l
