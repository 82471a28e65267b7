#include "isd4l/predictor.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

#include "isd4l/errors.hpp"
#include "isd4l/geometry.hpp"

namespace isd4l {

namespace {

// Default mode reproduces the index ranges i in [0, 2(dim/t - 1)] exactly:
// when t does not divide the dimension, the trailing dim - floor(dim/t)*t
// pixels stay uncovered even if one more half-stride window would fit flush.
// Edge-cover mode instead packs half-stride windows greedily and appends a
// flush window at the far edge.
std::vector<int> window_starts(int dim, int t, bool edge_cover) {
  std::vector<int> starts;
  if (edge_cover) {
    for (int s = 0; s + t <= dim; s += t / 2) starts.push_back(s);
    if (starts.back() != dim - t) starts.push_back(dim - t);
  } else {
    const int count = 2 * (dim / t) - 1;
    for (int i = 0; i < count; ++i) starts.push_back(i * (t / 2));
  }
  return starts;
}

}  // namespace

WindowGrid enumerate_windows(int n, int m, int t, bool edge_cover) {
  if (n < 1 || m < 1) throw std::invalid_argument("predictor: degenerate image");
  if (t < 2) throw std::invalid_argument("predictor: window side must be >= 2");
  if (t > n || t > m)
    throw PatchTooLarge("window side " + std::to_string(t) + " exceeds image " +
                        std::to_string(n) + "x" + std::to_string(m));
  if (t % 2 != 0)
    throw IndivisiblePatchSize("window side " + std::to_string(t) +
                               " must be even (stride is t/2)");
  if (!edge_cover && n % t != 0)
    throw IndivisiblePatchSize("window side " + std::to_string(t) +
                               " does not divide image height " + std::to_string(n));

  WindowGrid grid;
  grid.t = t;
  grid.stride = t / 2;
  const auto row_starts = window_starts(n, t, edge_cover);
  const auto col_starts = window_starts(m, t, edge_cover);
  grid.rows = static_cast<int>(row_starts.size());
  grid.cols = static_cast<int>(col_starts.size());
  grid.windows.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
  for (int top : row_starts)
    for (int left : col_starts) grid.windows.emplace_back(top, left);

  if (!edge_cover) {
    // count formula from the half-stride construction
    const long long expect =
        (2LL * (n / t) - 1) * (2LL * (m / t) - 1);
    if (static_cast<long long>(grid.windows.size()) != expect)
      throw std::logic_error("predictor: window enumeration disagrees with count formula");
  }
  return grid;
}

int default_window_side(int n) {
  if (n % 5 != 0)
    throw IndivisiblePatchSize("image height " + std::to_string(n) +
                               " is not a multiple of 5; pass the window side "
                               "explicitly");
  const int t = n / 5;
  if (t % 2 != 0)
    throw IndivisiblePatchSize("default window side " + std::to_string(t) +
                               " is odd; pass the window side explicitly");
  return t;
}

ImagePrediction aggregate_windows(WindowGrid grid, std::vector<double> probs,
                                  double threshold) {
  if (probs.size() != grid.windows.size())
    throw std::invalid_argument("predictor: probability count does not match grid");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("predictor: threshold must lie in [0, 1]");

  ImagePrediction pred;
  pred.threshold = threshold;
  pred.max_prob = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pred.max_prob = std::max(pred.max_prob, probs[i]);
    if (probs[i] >= threshold) {
      const int r = static_cast<int>(i) / grid.cols;
      const int c = static_cast<int>(i) % grid.cols;
      pred.positives.push_back(
          {r, c, grid.windows[i].first, grid.windows[i].second, probs[i]});
    }
  }
  pred.verdict =
      pred.max_prob >= threshold ? ImageLabel::late_blight : ImageLabel::healthy;
  std::sort(pred.positives.begin(), pred.positives.end(),
            [](const WindowScore& a, const WindowScore& b) {
              if (a.prob != b.prob) return a.prob > b.prob;
              if (a.grid_row != b.grid_row) return a.grid_row < b.grid_row;
              return a.grid_col < b.grid_col;
            });
  pred.grid = std::move(grid);
  pred.probs = std::move(probs);
  return pred;
}

namespace {

Raster crop(const Raster& img, int top, int left, int t) {
  Raster out(t, t, img.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(t) * img.channels;
  for (int y = 0; y < t; ++y) {
    const std::uint8_t* src = img.data.data() + img.index(left, top + y, 0);
    std::copy_n(src, row_bytes, out.data.data() + static_cast<std::size_t>(y) * row_bytes);
  }
  return out;
}

}  // namespace

ImagePrediction predict_image(const ModelState& model, const Raster& image, int t,
                              double threshold, int threads, bool edge_cover) {
  if (image.channels != 3)
    throw ArchitectureMismatch("whole-image prediction expects an RGB image");
  WindowGrid grid = enumerate_windows(image.height, image.width, t, edge_cover);
  std::vector<double> probs(grid.windows.size(), 0.0);

  auto run_window = [&](std::size_t i) {
    const auto [top, left] = grid.windows[i];
    probs[i] = predict_proba(model, crop(image, top, left, t));
  };

  int worker_count = threads > 0 ? threads
                                 : static_cast<int>(std::thread::hardware_concurrency());
  worker_count =
      std::clamp<int>(worker_count, 1, static_cast<int>(grid.windows.size()));
  if (worker_count <= 1) {
    for (std::size_t i = 0; i < grid.windows.size(); ++i) run_window(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(worker_count));
    for (int w = 0; w < worker_count; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < grid.windows.size();
             i = next.fetch_add(1))
          run_window(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  return aggregate_windows(std::move(grid), std::move(probs), threshold);
}

ImagePrediction predict_image(const ModelState& model, const FieldImage& image, int t,
                              double threshold, int threads, bool edge_cover) {
  return predict_image(model, image.pixels, t, threshold, threads, edge_cover);
}

Raster localization_heatmap(const ImagePrediction& prediction) {
  const auto& grid = prediction.grid;
  Raster map(grid.cols, grid.rows, 1);
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      map.at(c, r) = quantize_u8(prediction.probs[static_cast<std::size_t>(r) *
                                                      grid.cols + c] * 255.0);
  return map;
}

void write_heatmap_pgm(const std::filesystem::path& path,
                       const ImagePrediction& prediction) {
  const Raster map = localization_heatmap(prediction);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("predictor", "cannot write " + path.string());
  out << "P5\n" << map.width << " " << map.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(map.data.data()),
            static_cast<std::streamsize>(map.data.size()));
  if (!out) throw IoError("predictor", "short write to " + path.string());
}

void write_window_csv(const std::filesystem::path& path,
                      const ImagePrediction& prediction) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("predictor", "cannot write " + path.string());
  out << "row,col,top_left_y,top_left_x,t,probability\n";
  const auto& grid = prediction.grid;
  char line[128];
  for (std::size_t i = 0; i < grid.windows.size(); ++i) {
    const int r = static_cast<int>(i) / grid.cols;
    const int c = static_cast<int>(i) % grid.cols;
    std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%d,%.9g\n", r, c,
                  grid.windows[i].first, grid.windows[i].second, grid.t,
                  prediction.probs[i]);
    out << line;
  }
}

}  // namespace isd4l
