#include "isd4l/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "isd4l/errors.hpp"

namespace isd4l {

namespace {

constexpr double kLatticeEps = 1e-12;

struct SinCos {
  double s, c;
};

// sin/cos with exact values at lattice angles, so that quarter turns stay
// bit-exact instead of picking up ~1e-16 trigonometric residue.
SinCos snapped_sincos(double theta) {
  double s = std::sin(theta);
  double c = std::cos(theta);
  if (std::abs(s) < kLatticeEps) {
    s = 0.0;
    c = c > 0 ? 1.0 : -1.0;
  } else if (std::abs(c) < kLatticeEps) {
    c = 0.0;
    s = s > 0 ? 1.0 : -1.0;
  }
  return {s, c};
}

void check_theta(double theta) {
  if (!(theta >= -M_PI && theta <= M_PI))
    throw std::invalid_argument("geometry: theta must lie in [-pi, pi]");
}

inline double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace

std::uint8_t quantize_u8(double v) {
  v = clampd(v, 0.0, 255.0);
  const double f = std::floor(v);
  const double frac = v - f;
  int i = static_cast<int>(f);
  if (frac > 0.5 || (frac == 0.5 && (i & 1))) ++i;
  return static_cast<std::uint8_t>(i);
}

InscribedRect max_inscribed_rect(int w, int h, double theta) {
  if (w < 1 || h < 1) throw std::invalid_argument("geometry: degenerate image");
  check_theta(theta);

  const auto [s0, c0] = snapped_sincos(theta);
  const double sa = std::abs(s0);
  const double ca = std::abs(c0);

  // Lattice angles are exact.
  if (sa == 0.0) return {w, h};
  if (ca == 0.0) return {h, w};

  const bool width_longer = w >= h;
  const double side_long = width_longer ? w : h;
  const double side_short = width_longer ? h : w;

  double wr, hr;
  if (side_short <= 2.0 * sa * ca * side_long || std::abs(sa - ca) < 1e-10) {
    // Half-constrained: only the two long sides bind; the inscribed rect's
    // corners sit on them with the short direction fully used.
    const double x = 0.5 * side_short;
    if (width_longer) {
      wr = x / sa;
      hr = x / ca;
    } else {
      wr = x / ca;
      hr = x / sa;
    }
  } else {
    // Fully constrained: all four rotated sides bind.
    const double cos2a = ca * ca - sa * sa;
    wr = (w * ca - h * sa) / cos2a;
    hr = (h * ca - w * sa) / cos2a;
  }

  // Floor with a hair of slack so values that are integral up to float
  // round-off do not lose a pixel.
  const int iw = std::max(1, static_cast<int>(std::floor(wr + 1e-9)));
  const int ih = std::max(1, static_cast<int>(std::floor(hr + 1e-9)));
  return {iw, ih};
}

RotatedFrame::RotatedFrame(int src_w, int src_h, double theta) {
  check_theta(theta);
  const auto [s, c] = snapped_sincos(theta);
  sin_ = s;
  cos_ = c;
  src_cx_ = 0.5 * src_w;
  src_cy_ = 0.5 * src_h;
  rect_ = max_inscribed_rect(src_w, src_h, theta);
  half_w_ = 0.5 * rect_.width;
  half_h_ = 0.5 * rect_.height;
}

void RotatedFrame::to_source(double rx, double ry, double& sx, double& sy) const {
  // The inscribed rect shares its center with the rotated image, so the
  // bounding-box offset cancels: shift to center, rotate by -theta, shift
  // back into the source frame.
  const double dx = rx - half_w_;
  const double dy = ry - half_h_;
  sx = src_cx_ + cos_ * dx + sin_ * dy;
  sy = src_cy_ - sin_ * dx + cos_ * dy;
}

namespace {

Raster sample_bilinear(const Raster& img, const RotatedFrame& frame, int x, int y, int t) {
  Raster out(t, t, img.channels);
  const int w = img.width, h = img.height, ch = img.channels;
  for (int v = 0; v < t; ++v) {
    for (int u = 0; u < t; ++u) {
      double sx, sy;
      frame.to_source(x + u + 0.5, y + v + 0.5, sx, sy);
      // pixel-center index space
      const double gx = sx - 0.5;
      const double gy = sy - 0.5;
      const double fgx = std::floor(gx);
      const double fgy = std::floor(gy);
      const double fx = gx - fgx;
      const double fy = gy - fgy;
      const int x0 = std::clamp(static_cast<int>(fgx), 0, w - 1);
      const int x1 = std::clamp(static_cast<int>(fgx) + 1, 0, w - 1);
      const int y0 = std::clamp(static_cast<int>(fgy), 0, h - 1);
      const int y1 = std::clamp(static_cast<int>(fgy) + 1, 0, h - 1);
      const double w00 = (1.0 - fx) * (1.0 - fy);
      const double w10 = fx * (1.0 - fy);
      const double w01 = (1.0 - fx) * fy;
      const double w11 = fx * fy;
      for (int k = 0; k < ch; ++k) {
        const double val = w00 * img.at(x0, y0, k) + w10 * img.at(x1, y0, k) +
                           w01 * img.at(x0, y1, k) + w11 * img.at(x1, y1, k);
        out.at(u, v, k) = quantize_u8(val);
      }
    }
  }
  return out;
}

Raster sample_nearest(const Raster& img, const RotatedFrame& frame, int x, int y, int t) {
  Raster out(t, t, img.channels);
  const int w = img.width, h = img.height, ch = img.channels;
  for (int v = 0; v < t; ++v) {
    for (int u = 0; u < t; ++u) {
      double sx, sy;
      frame.to_source(x + u + 0.5, y + v + 0.5, sx, sy);
      const int ix = std::clamp(static_cast<int>(std::floor(sx)), 0, w - 1);
      const int iy = std::clamp(static_cast<int>(std::floor(sy)), 0, h - 1);
      for (int k = 0; k < ch; ++k) out.at(u, v, k) = img.at(ix, iy, k);
    }
  }
  return out;
}

}  // namespace

Raster sample_rotated_square(const Raster& img, double theta, int x, int y, int t,
                             Interp interp) {
  if (t < 1) throw std::invalid_argument("geometry: patch side must be >= 1");
  const RotatedFrame frame(img.width, img.height, theta);
  const auto& rect = frame.inscribed();
  if (x < 0 || y < 0 || x + t > rect.width || y + t > rect.height) {
    throw SquareOutOfBounds("square " + std::to_string(t) + "px at (" +
                            std::to_string(x) + "," + std::to_string(y) +
                            ") exceeds inscribed rect " + std::to_string(rect.width) +
                            "x" + std::to_string(rect.height));
  }
  return interp == Interp::bilinear ? sample_bilinear(img, frame, x, y, t)
                                    : sample_nearest(img, frame, x, y, t);
}

Raster resize(const Raster& src, int s, Interp interp) {
  if (s < 1) throw std::invalid_argument("geometry: resize target must be >= 1");
  if (src.width == s && src.height == s) return src;

  Raster out(s, s, src.channels);
  const int ch = src.channels;

  // Corner-aligned source position for output index i along an axis of
  // length n -> s.
  auto pos = [s](int i, int n) {
    if (s == 1) return 0.5 * (n - 1);
    return static_cast<double>(i) * (n - 1) / (s - 1);
  };

  for (int v = 0; v < s; ++v) {
    const double gy = pos(v, src.height);
    for (int u = 0; u < s; ++u) {
      const double gx = pos(u, src.width);
      if (interp == Interp::nearest) {
        const int ix = std::clamp(static_cast<int>(std::llround(gx)), 0, src.width - 1);
        const int iy = std::clamp(static_cast<int>(std::llround(gy)), 0, src.height - 1);
        for (int k = 0; k < ch; ++k) out.at(u, v, k) = src.at(ix, iy, k);
      } else {
        const int x0 = static_cast<int>(std::floor(gx));
        const int y0 = static_cast<int>(std::floor(gy));
        const int x1 = std::min(x0 + 1, src.width - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double fx = gx - x0;
        const double fy = gy - y0;
        for (int k = 0; k < ch; ++k) {
          const double val = (1 - fx) * (1 - fy) * src.at(x0, y0, k) +
                             fx * (1 - fy) * src.at(x1, y0, k) +
                             (1 - fx) * fy * src.at(x0, y1, k) +
                             fx * fy * src.at(x1, y1, k);
          out.at(u, v, k) = quantize_u8(val);
        }
      }
    }
  }
  return out;
}

}  // namespace isd4l
