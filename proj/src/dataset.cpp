#include "isd4l/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "isd4l/errors.hpp"
#include "isd4l/geometry.hpp"
#include "isd4l/png_io.hpp"
#include "isd4l/rng.hpp"
#include "isd4l/sha256.hpp"

namespace isd4l {

const char* to_string(ImageLabel label) {
  return label == ImageLabel::late_blight ? "late_blight" : "healthy";
}

ImageLabel image_label_from_string(const std::string& s) {
  if (s == "healthy") return ImageLabel::healthy;
  if (s == "late_blight") return ImageLabel::late_blight;
  throw ManifestParseError("unknown label '" + s + "'");
}

int Dataset::diseased_count() const {
  return static_cast<int>(std::count_if(images.begin(), images.end(), [](const auto& im) {
    return im.label == ImageLabel::late_blight;
  }));
}

int Dataset::healthy_count() const {
  return static_cast<int>(images.size()) - diseased_count();
}

// ---------------------------------------------------------------------------
// Manifest loading
// ---------------------------------------------------------------------------

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw MissingFile("manifest not found: " + manifest_path.string());
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc.contains("images"))
    throw ManifestParseError("manifest must contain 'version' and 'images'");
  if (doc["version"].get<int>() != 1)
    throw ManifestParseError("unsupported manifest version");
  if (!doc["images"].is_array()) throw ManifestParseError("'images' must be an array");
  if (doc["images"].empty()) throw EmptyDataset("manifest lists no images");

  Dataset ds;
  ds.root = manifest_path.parent_path();
  ds.manifest_digest = sha256_hex(text);

  for (const auto& entry : doc["images"]) {
    FieldImage img;
    try {
      img.id = entry.at("id").get<std::string>();
      img.label = image_label_from_string(entry.at("label").get<std::string>());
      const auto image_path = ds.root / entry.at("image_path").get<std::string>();
      if (!std::filesystem::exists(image_path))
        throw MissingFile("image file not found: " + image_path.string());
      img.pixels = read_png(image_path);
      if (img.pixels.channels != 3)
        throw ManifestParseError(img.id + ": field images must be RGB");

      const auto& mask_field = entry.at("mask_path");
      if (!mask_field.is_null()) {
        const auto mask_path = ds.root / mask_field.get<std::string>();
        if (!std::filesystem::exists(mask_path))
          throw MissingFile("mask file not found: " + mask_path.string());
        SegMask mask;
        mask.pixels = read_png(mask_path);
        if (mask.pixels.channels != 1)
          throw ManifestParseError(img.id + ": masks must be single-channel");
        img.mask = std::move(mask);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ManifestParseError(std::string("bad image entry: ") + e.what());
    }

    if (img.mask) {
      if (!img.mask->pixels.same_shape(
              Raster(img.pixels.width, img.pixels.height, 1)))
        throw MaskDimensionMismatch(
            "dataset", img.id + ": mask dimensions do not match image");
      std::int64_t symptom = 0;
      for (std::uint8_t v : img.mask->pixels.data) {
        if (v > SegMask::kSymptom)
          throw InvalidMaskValue(img.id + ": mask value " + std::to_string(v) +
                                 " outside {0,1,2}");
        if (v == SegMask::kSymptom) ++symptom;
      }
      if (img.label == ImageLabel::late_blight && symptom == 0)
        throw LabelMaskInconsistency(img.id +
                                     ": labeled diseased but mask has no symptom pixels");
    } else if (img.label == ImageLabel::late_blight) {
      throw LabelMaskInconsistency(img.id + ": labeled diseased but has no mask");
    }

    ds.images.push_back(std::move(img));
  }

  std::sort(ds.images.begin(), ds.images.end(),
            [](const FieldImage& a, const FieldImage& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < ds.images.size(); ++i)
    if (ds.images[i].id == ds.images[i - 1].id)
      throw ManifestParseError("duplicate image id '" + ds.images[i].id + "'");
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

// Stateless lattice value noise: the value at integer cell (cx, cy) is a hash
// of (cx, cy, seed), interpolated with a smoothstep between cells.
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) : seed_(seed) {}

  double sample(double x, double y) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto cx = static_cast<std::int64_t>(fx);
    const auto cy = static_cast<std::int64_t>(fy);
    const double tx = smooth(x - fx), ty = smooth(y - fy);
    const double v00 = cell(cx, cy), v10 = cell(cx + 1, cy);
    const double v01 = cell(cx, cy + 1), v11 = cell(cx + 1, cy + 1);
    const double a = v00 + (v10 - v00) * tx;
    const double b = v01 + (v11 - v01) * tx;
    return a + (b - a) * ty;  // in [0, 1)
  }

  // Three octaves, normalized to roughly [0, 1].
  double fbm(double x, double y) const {
    return (sample(x, y) * 4.0 + sample(x * 2.3 + 17.0, y * 2.3 + 9.0) * 2.0 +
            sample(x * 5.1 + 31.0, y * 5.1 + 47.0)) /
           7.0;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

  double cell(std::int64_t cx, std::int64_t cy) const {
    const std::uint64_t h = mix64(seed_ ^ mix64(static_cast<std::uint64_t>(cx) *
                                                    0x8DA6B343ULL ^
                                                static_cast<std::uint64_t>(cy) *
                                                    0xD8163841ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
};

struct Rgb {
  double r, g, b;
};

void put_pixel(Raster& img, int x, int y, const Rgb& c) {
  img.at(x, y, 0) = quantize_u8(c.r);
  img.at(x, y, 1) = quantize_u8(c.g);
  img.at(x, y, 2) = quantize_u8(c.b);
}

Rgb get_pixel(const Raster& img, int x, int y) {
  return {static_cast<double>(img.at(x, y, 0)), static_cast<double>(img.at(x, y, 1)),
          static_cast<double>(img.at(x, y, 2))};
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

struct LesionShape {
  double cx, cy;
  double radius;
  double wobble_amp[3];    // harmonics 2..4 of the boundary
  double wobble_phase[3];

  double boundary(double phi) const {
    double m = 1.0;
    for (int h = 0; h < 3; ++h)
      m += wobble_amp[h] * std::cos((h + 2) * phi + wobble_phase[h]);
    return radius * m;
  }
};

LesionShape draw_lesion_shape(Xoshiro256pp& rng, double radius) {
  LesionShape s{};
  s.radius = radius;
  for (int h = 0; h < 3; ++h) {
    s.wobble_amp[h] = (rng.unit() * 2.0 - 1.0) * 0.18 / (h + 1);
    s.wobble_phase[h] = rng.unit() * 2.0 * M_PI;
  }
  return s;
}

// Renders one synthetic field image. The mask is always produced internally
// (canopy = 1); lesions are added only when `diseased`.
void render_image(Xoshiro256pp& rng, const SynthConfig& cfg, bool diseased,
                  Raster& image, Raster& mask, SynthImageStats& stats) {
  const int w = cfg.cols, h = cfg.rows;
  image = Raster(w, h, 3);
  mask = Raster(w, h, 1, SegMask::kBackground);

  const double scale = cfg.texture_scale;
  const ValueNoise soil_noise(rng.next());
  const ValueNoise grain(rng.next());
  const ValueNoise leaf_noise(rng.next());
  const double brightness = 0.94 + 0.12 * rng.unit();  // mild per-image jitter

  // Soil background: tan-brown, coarse undulation plus fine grain.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double n = soil_noise.fbm(x / (170.0 * scale), y / (170.0 * scale));
      const double g = grain.sample(x / (3.0 * scale), y / (3.0 * scale)) - 0.5;
      Rgb c{132.0 + 40.0 * (n - 0.5) + 14.0 * g, 110.0 + 34.0 * (n - 0.5) + 12.0 * g,
            82.0 + 24.0 * (n - 0.5) + 9.0 * g};
      c.r *= brightness;
      c.g *= brightness;
      c.b *= brightness;
      put_pixel(image, x, y, c);
    }
  }

  // Canopy: overlapping elliptical lobes in varied greens with radial
  // shading, darker toward the rim so the gaps between leaves read as
  // shadowed.
  const int lobes = 30 + static_cast<int>(rng.uniform_int(0, 12));
  const double lobe_lo = 0.055 * std::min(w, h);
  const double lobe_hi = 0.16 * std::min(w, h);
  for (int lb = 0; lb < lobes; ++lb) {
    const double cx = rng.unit() * w;
    const double cy = rng.unit() * h;
    const double a = lobe_lo + rng.unit() * (lobe_hi - lobe_lo);
    const double b = a * (0.55 + 0.4 * rng.unit());
    const double phi = rng.unit() * 2.0 * M_PI;
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double base_g = 95.0 + 70.0 * rng.unit();
    const double base_r = base_g * (0.36 + 0.22 * rng.unit());
    const double base_b = base_g * (0.28 + 0.18 * rng.unit());

    const int x0 = std::max(0, static_cast<int>(cx - a - 1));
    const int x1 = std::min(w - 1, static_cast<int>(cx + a + 1));
    const int y0 = std::max(0, static_cast<int>(cy - a - 1));
    const int y1 = std::min(h - 1, static_cast<int>(cy + a + 1));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double ex = (dx * cphi + dy * sphi) / a;
        const double ey = (-dx * sphi + dy * cphi) / b;
        const double rr = ex * ex + ey * ey;
        if (rr > 1.0) continue;
        const double shade = 0.72 + 0.28 * std::sqrt(1.0 - rr);
        const double tex =
            0.82 + 0.36 * leaf_noise.fbm(x / (9.0 * scale), y / (9.0 * scale));
        Rgb c{base_r * shade * tex, base_g * shade * tex, base_b * shade * tex};
        c.r *= brightness;
        c.g *= brightness;
        c.b *= brightness;
        put_pixel(image, x, y, c);
        mask.at(x, y) = SegMask::kPlant;
      }
    }
  }
  stats.canopy_pixels =
      std::count(mask.data.begin(), mask.data.end(), SegMask::kPlant);

  if (!diseased) return;

  // Lesions: dark brown wobbly-edged blobs, placed so the whole footprint
  // lies on canopy, with a chlorotic (yellowing) halo on the surrounding
  // leaf tissue. Only the blob core counts as symptom in the mask.
  const int blob_count =
      static_cast<int>(rng.uniform_int(cfg.min_blobs, cfg.max_blobs));
  for (int bi = 0; bi < blob_count; ++bi) {
    double radius =
        cfg.min_blob_radius + rng.unit() * (cfg.max_blob_radius - cfg.min_blob_radius);
    LesionShape shape{};
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      if (attempt > 0 && attempt % 80 == 0)
        radius = std::max(cfg.min_blob_radius * 0.5, radius * 0.8);
      shape = draw_lesion_shape(rng, radius);
      const double reach = radius * 1.35 + 2.0;  // covers max boundary wobble (1.33 r)
      shape.cx = reach + rng.unit() * (w - 2.0 * reach);
      shape.cy = reach + rng.unit() * (h - 2.0 * reach);

      bool all_canopy = true;
      const int bx0 = static_cast<int>(shape.cx - reach),
                bx1 = static_cast<int>(shape.cx + reach);
      const int by0 = static_cast<int>(shape.cy - reach),
                by1 = static_cast<int>(shape.cy + reach);
      for (int y = by0; y <= by1 && all_canopy; ++y) {
        for (int x = bx0; x <= bx1; ++x) {
          const double dx = x + 0.5 - shape.cx, dy = y + 0.5 - shape.cy;
          const double d = std::sqrt(dx * dx + dy * dy);
          if (d > shape.boundary(std::atan2(dy, dx))) continue;
          if (mask.at(x, y) != SegMask::kPlant) {
            all_canopy = false;
            break;
          }
        }
      }
      placed = all_canopy;
    }
    if (!placed) continue;  // statistically unreachable at default coverage

    const double reach = radius * 1.35 + 2.0;
    const double halo = 1.45;
    const int bx0 = std::max(0, static_cast<int>(shape.cx - reach * halo));
    const int bx1 = std::min(w - 1, static_cast<int>(shape.cx + reach * halo));
    const int by0 = std::max(0, static_cast<int>(shape.cy - reach * halo));
    const int by1 = std::min(h - 1, static_cast<int>(shape.cy + reach * halo));
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        const double dx = x + 0.5 - shape.cx, dy = y + 0.5 - shape.cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        const double edge = shape.boundary(std::atan2(dy, dx));
        if (d <= edge) {
          const double t = edge > 0 ? d / edge : 0.0;
          const double speckle =
              0.9 + 0.2 * grain.sample(x / (2.5 * scale), y / (2.5 * scale));
          Rgb c = lerp({24, 15, 9}, {76, 52, 26}, t * t);
          c.r *= speckle * brightness;
          c.g *= speckle * brightness;
          c.b *= speckle * brightness;
          if (mask.at(x, y) == SegMask::kPlant) ++stats.blob_pixels_on_canopy;
          put_pixel(image, x, y, c);
          mask.at(x, y) = SegMask::kSymptom;
          ++stats.blob_pixels_composited;
        } else if (d <= edge * halo && mask.at(x, y) == SegMask::kPlant) {
          const double t = 1.0 - (d - edge) / (edge * (halo - 1.0));
          const Rgb c = lerp(get_pixel(image, x, y), {188, 180, 62}, 0.55 * t);
          put_pixel(image, x, y, c);
        }
      }
    }
  }
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir,
                           std::vector<SynthImageStats>* stats_out) {
  if (cfg.image_count < 1 || cfg.diseased_count < 0 ||
      cfg.diseased_count > cfg.image_count)
    throw std::invalid_argument("dataset: bad synthetic config counts");
  if (cfg.rows < 64 || cfg.cols < 64)
    throw std::invalid_argument("dataset: synthetic images must be at least 64x64");
  if (cfg.min_blob_radius < 2.0 || cfg.max_blob_radius < cfg.min_blob_radius)
    throw std::invalid_argument("dataset: bad blob radius range");

  std::filesystem::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["version"] = 1;
  auto& images = manifest["images"] = nlohmann::json::array();

  std::vector<SynthImageStats> stats;
  for (int i = 0; i < cfg.image_count; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "img_%02d", i);
    const bool diseased = i < cfg.diseased_count;

    auto rng = Xoshiro256pp::stream(cfg.seed, StreamDomain::synthesis,
                                    static_cast<std::uint64_t>(i));
    Raster image, mask;
    SynthImageStats st;
    st.id = id;
    st.diseased = diseased;
    render_image(rng, cfg, diseased, image, mask, st);
    stats.push_back(st);

    const std::string image_name = std::string(id) + ".png";
    write_png(out_dir / image_name, image);
    nlohmann::json entry;
    entry["id"] = id;
    entry["image_path"] = image_name;
    entry["label"] = to_string(diseased ? ImageLabel::late_blight : ImageLabel::healthy);
    if (diseased) {
      const std::string mask_name = std::string(id) + "_mask.png";
      write_png(out_dir / mask_name, mask);
      entry["mask_path"] = mask_name;
    } else {
      entry["mask_path"] = nullptr;
    }
    images.push_back(entry);
  }

  const auto manifest_path = out_dir / "manifest.json";
  {
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("dataset", "cannot write " + manifest_path.string());
    out << manifest.dump(2) << '\n';
  }

  if (stats_out) *stats_out = std::move(stats);
  return load_dataset(manifest_path);
}

}  // namespace isd4l
