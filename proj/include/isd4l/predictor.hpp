#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "isd4l/dataset.hpp"
#include "isd4l/model.hpp"
#include "isd4l/raster.hpp"

namespace isd4l {

// Half-stride sliding-window grid over an n x m image: t x t windows with
// top-left corners (i*t/2, j*t/2), i in [0, 2(n/t - 1)], j in
// [0, 2(floor(m/t) - 1)], so (2n/t - 1)(2 floor(m/t) - 1) windows in total.
// When t does not divide m the rightmost columns stay uncovered; edge-cover
// mode appends flush right/bottom windows instead (and drops the t | n
// requirement).
struct WindowGrid {
  int t = 0;
  int stride = 0;       // t / 2
  int rows = 0;         // rows of windows
  int cols = 0;         // columns of windows
  std::vector<std::pair<int, int>> windows;  // (top row, left col), row-major
};

WindowGrid enumerate_windows(int n, int m, int t, bool edge_cover = false);

// t = n/5 when that is a valid window side; throws IndivisiblePatchSize with
// an explanation otherwise (no silent rounding).
int default_window_side(int n);

struct WindowScore {
  int grid_row = 0;
  int grid_col = 0;
  int top = 0;
  int left = 0;
  double prob = 0.0;
};

struct ImagePrediction {
  WindowGrid grid;
  std::vector<double> probs;  // one per window, grid order
  double threshold = 0.8;
  double max_prob = 0.0;
  ImageLabel verdict = ImageLabel::healthy;
  std::vector<WindowScore> positives;  // prob >= threshold, descending prob
};

// Max-threshold decision rule over per-window probabilities: the image is
// positive iff max prob >= threshold (inclusive). Exposed separately so the
// rule can be driven with fixture grids.
ImagePrediction aggregate_windows(WindowGrid grid, std::vector<double> probs,
                                  double threshold);

// Crops every window, resizes it to the model input (same bilinear policy as
// training patches), classifies, and aggregates. Window evaluation may fan
// out over threads; results are independent of the thread count.
ImagePrediction predict_image(const ModelState& model, const Raster& image, int t,
                              double threshold = 0.8, int threads = 0,
                              bool edge_cover = false);
ImagePrediction predict_image(const ModelState& model, const FieldImage& image, int t,
                              double threshold = 0.8, int threads = 0,
                              bool edge_cover = false);

// One pixel per window, probability scaled to 0..255.
Raster localization_heatmap(const ImagePrediction& prediction);

void write_heatmap_pgm(const std::filesystem::path& path,
                       const ImagePrediction& prediction);
// CSV of (row, col, top_left_y, top_left_x, t, probability), one line per
// window, grid order.
void write_window_csv(const std::filesystem::path& path,
                      const ImagePrediction& prediction);

}  // namespace isd4l
