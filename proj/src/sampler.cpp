#include "isd4l/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "isd4l/errors.hpp"
#include "isd4l/geometry.hpp"
#include "isd4l/png_io.hpp"
#include "isd4l/sha256.hpp"

namespace isd4l {

namespace {

void append_le(Sha256& h, std::uint64_t v, int bytes) {
  std::uint8_t buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = std::uint8_t(v >> (8 * i));
  h.update(buf, static_cast<std::size_t>(bytes));
}

}  // namespace

std::string PatchSet::content_digest() const {
  Sha256 h;
  append_le(h, static_cast<std::uint64_t>(rho), 4);
  append_le(h, seed, 8);
  h.update(manifest_digest);
  for (const auto& p : patches) {
    h.update(p.spec.source_image_id);
    h.update("\0", 1);
    std::uint64_t theta_bits;
    static_assert(sizeof(theta_bits) == sizeof(p.spec.theta));
    std::memcpy(&theta_bits, &p.spec.theta, sizeof(theta_bits));
    append_le(h, theta_bits, 8);
    append_le(h, static_cast<std::uint64_t>(p.spec.t), 4);
    append_le(h, static_cast<std::uint64_t>(p.spec.x), 4);
    append_le(h, static_cast<std::uint64_t>(p.spec.y), 4);
    append_le(h, static_cast<std::uint64_t>(p.label), 1);
    append_le(h, static_cast<std::uint64_t>(p.symptom_pixel_count), 8);
    append_le(h, static_cast<std::uint64_t>(p.pixels.width), 4);
    append_le(h, static_cast<std::uint64_t>(p.pixels.height), 4);
    h.update(p.pixels.data);
  }
  return h.hex_digest();
}

std::size_t PatchSet::positive_count() const {
  return static_cast<std::size_t>(
      std::count_if(patches.begin(), patches.end(), [](const LabeledPatch& p) {
        return p.label == ImageLabel::late_blight;
      }));
}

PatchSpec draw_patch_spec(RandomSource& rng, int rows, int cols,
                          const SamplerOptions& options) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("sampler: degenerate image");
  if (!(options.zoom_min > 0.0) || options.zoom_max < options.zoom_min)
    throw std::invalid_argument("sampler: bad zoom range");

  const int l = std::min(rows, cols);
  const auto t_lo =
      static_cast<int>(std::ceil(options.zoom_min * l - 1e-9));
  const auto t_hi =
      static_cast<int>(std::floor(options.zoom_max * l + 1e-9));
  if (t_lo < 1 || t_lo > t_hi)
    throw PatchCannotFit("zoom range [" + std::to_string(options.zoom_min) + ", " +
                         std::to_string(options.zoom_max) + "] yields no valid side for l=" +
                         std::to_string(l));

  for (int attempt = 0; attempt < options.max_redraws; ++attempt) {
    const double theta = -M_PI + 2.0 * M_PI * rng.unit();
    const int t = static_cast<int>(rng.uniform_int(t_lo, t_hi));
    const InscribedRect rect = max_inscribed_rect(cols, rows, theta);
    if (t > rect.width || t > rect.height) continue;  // redraw (theta, t)
    PatchSpec spec;
    spec.theta = theta;
    spec.t = t;
    spec.x = static_cast<int>(rng.uniform_int(0, rect.width - t));
    spec.y = static_cast<int>(rng.uniform_int(0, rect.height - t));
    return spec;
  }
  throw PatchCannotFit("no (theta, t) drew a square fitting a " + std::to_string(cols) +
                       "x" + std::to_string(rows) + " image after " +
                       std::to_string(options.max_redraws) + " attempts");
}

std::pair<ImageLabel, std::int64_t> label_from_mask(const Raster& mask_patch,
                                                    int min_symptom_pixels) {
  if (mask_patch.channels != 1)
    throw std::invalid_argument("sampler: mask patch must be single-channel");
  if (min_symptom_pixels < 1)
    throw std::invalid_argument("sampler: min_symptom_pixels must be >= 1");

  std::int64_t count = 0;
  for (std::uint8_t v : mask_patch.data) {
    if (v > SegMask::kSymptom)
      throw InvalidMaskValue("mask sample " + std::to_string(v) + " outside {0,1,2}");
    if (v == SegMask::kSymptom) ++count;
  }
  const ImageLabel label =
      count >= min_symptom_pixels ? ImageLabel::late_blight : ImageLabel::healthy;
  return {label, count};
}

LabeledPatch extract_labeled_patch(const FieldImage& image, const PatchSpec& spec,
                                   int min_symptom_pixels) {
  LabeledPatch patch;
  patch.spec = spec;
  if (patch.spec.source_image_id.empty()) patch.spec.source_image_id = image.id;

  patch.pixels = sample_rotated_square(image.pixels, spec.theta, spec.x, spec.y, spec.t,
                                       Interp::bilinear);
  if (image.mask) {
    if (image.mask->pixels.width != image.pixels.width ||
        image.mask->pixels.height != image.pixels.height)
      throw MaskDimensionMismatch("sampler",
                                  image.id + ": mask dimensions do not match image");
    // Same spec, nearest interpolation: the mask patch is pixel-aligned with
    // the RGB patch by construction.
    const Raster mask_patch = sample_rotated_square(
        image.mask->pixels, spec.theta, spec.x, spec.y, spec.t, Interp::nearest);
    std::tie(patch.label, patch.symptom_pixel_count) =
        label_from_mask(mask_patch, min_symptom_pixels);
  } else {
    patch.label = ImageLabel::healthy;
    patch.symptom_pixel_count = 0;
  }
  return patch;
}

PatchSet generate_patchset(const Dataset& dataset, int rho, std::uint64_t seed,
                           int threads, const SamplerOptions& options) {
  if (rho < 1) throw std::invalid_argument("sampler: rho must be >= 1");
  if (dataset.images.empty()) throw EmptyDataset("cannot sample an empty dataset");

  const auto image_count = dataset.images.size();
  std::vector<std::vector<LabeledPatch>> per_image(image_count);
  std::vector<std::exception_ptr> failures(image_count);

  auto run_image = [&](std::size_t i) {
    const FieldImage& image = dataset.images[i];
    try {
      XoshiroSource rng(Xoshiro256pp::stream(seed, StreamDomain::patch_sampling,
                                             static_cast<std::uint64_t>(i)));
      auto& out = per_image[i];
      out.reserve(static_cast<std::size_t>(rho));
      for (int k = 0; k < rho; ++k) {
        PatchSpec spec = draw_patch_spec(rng, image.rows(), image.cols(), options);
        spec.source_image_id = image.id;
        out.push_back(extract_labeled_patch(image, spec, options.min_symptom_pixels));
      }
    } catch (const PatchCannotFit& e) {
      failures[i] = std::make_exception_ptr(
          PatchCannotFit("image '" + image.id + "': " + e.message()));
    } catch (const Error& e) {
      failures[i] = std::make_exception_ptr(
          Error(e.module(), "image '" + image.id + "': " + e.message()));
    } catch (const std::exception& e) {
      failures[i] = std::make_exception_ptr(
          Error("sampler", "image '" + image.id + "': " + e.what()));
    }
  };

  int worker_count = threads > 0 ? threads
                                 : static_cast<int>(std::thread::hardware_concurrency());
  worker_count = std::clamp<int>(worker_count, 1, static_cast<int>(image_count));
  if (worker_count == 1) {
    for (std::size_t i = 0; i < image_count; ++i) run_image(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(worker_count));
    for (int w = 0; w < worker_count; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < image_count; i = next.fetch_add(1))
          run_image(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);

  PatchSet ps;
  ps.rho = rho;
  ps.seed = seed;
  ps.manifest_digest = dataset.manifest_digest;
  ps.patches.reserve(image_count * static_cast<std::size_t>(rho));
  for (auto& group : per_image)
    for (auto& patch : group) ps.patches.push_back(std::move(patch));
  return ps;
}

// ---------------------------------------------------------------------------
// Archive
// ---------------------------------------------------------------------------

void save_patchset(const PatchSet& ps, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  nlohmann::json doc;
  doc["version"] = 1;
  doc["rho"] = ps.rho;
  doc["seed"] = ps.seed;
  doc["manifest_digest"] = ps.manifest_digest;
  auto& records = doc["patches"] = nlohmann::json::array();

  std::size_t per_image_index = 0;
  std::string prev_id;
  for (const auto& patch : ps.patches) {
    if (patch.spec.source_image_id != prev_id) {
      prev_id = patch.spec.source_image_id;
      per_image_index = 0;
    }
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "_%04zu.png", per_image_index++);
    const std::string file = patch.spec.source_image_id + suffix;
    write_png(dir / file, patch.pixels);

    nlohmann::json rec;
    rec["file"] = file;
    rec["image_id"] = patch.spec.source_image_id;
    rec["label"] = to_string(patch.label);
    rec["symptom_pixels"] = patch.symptom_pixel_count;
    rec["theta"] = patch.spec.theta;
    rec["t"] = patch.spec.t;
    rec["x"] = patch.spec.x;
    rec["y"] = patch.spec.y;
    records.push_back(rec);
  }

  const auto json_path = dir / "patchset.json";
  std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("sampler", "cannot write " + json_path.string());
  out << doc.dump(2) << '\n';
}

PatchSet load_patchset(const std::filesystem::path& dir) {
  const auto json_path = dir / "patchset.json";
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw MissingFile("patch-set index not found: " + json_path.string());

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("sampler", std::string("invalid patchset.json: ") + e.what());
  }

  PatchSet ps;
  try {
    if (doc.at("version").get<int>() != 1)
      throw IoError("sampler", "unsupported patch-set version");
    ps.rho = doc.at("rho").get<int>();
    ps.seed = doc.at("seed").get<std::uint64_t>();
    ps.manifest_digest = doc.at("manifest_digest").get<std::string>();
    for (const auto& rec : doc.at("patches")) {
      LabeledPatch patch;
      patch.spec.source_image_id = rec.at("image_id").get<std::string>();
      patch.spec.theta = rec.at("theta").get<double>();
      patch.spec.t = rec.at("t").get<int>();
      patch.spec.x = rec.at("x").get<int>();
      patch.spec.y = rec.at("y").get<int>();
      patch.label = image_label_from_string(rec.at("label").get<std::string>());
      patch.symptom_pixel_count = rec.at("symptom_pixels").get<std::int64_t>();
      patch.pixels = read_png(dir / rec.at("file").get<std::string>());
      if (patch.pixels.width != patch.spec.t || patch.pixels.height != patch.spec.t)
        throw IoError("sampler", "patch file dimensions disagree with record for " +
                                     rec.at("file").get<std::string>());
      ps.patches.push_back(std::move(patch));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("sampler", std::string("malformed patch record: ") + e.what());
  }
  return ps;
}

}  // namespace isd4l
