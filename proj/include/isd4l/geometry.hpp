#pragma once

#include <cstdint>

#include "isd4l/raster.hpp"

namespace isd4l {

enum class Interp { bilinear, nearest };

// Axis-aligned rectangle inscribed in a rotated image, centered on the
// rotated image's center. Dimensions are floored to whole pixels.
struct InscribedRect {
  int width = 0;
  int height = 0;

  long long area() const { return static_cast<long long>(width) * height; }
  bool operator==(const InscribedRect&) const = default;
};

// Largest axis-aligned, blank-free rectangle inside the rotation of a w x h
// image by theta (radians, in [-pi, pi]; anything else throws). Closed-form
// case analysis: either two opposite rectangle sides bind (half-constrained)
// or all four do (fully-constrained), depending on |tan theta| against the
// aspect ratio. Lattice angles (multiples of pi/2) are returned exactly.
InscribedRect max_inscribed_rect(int w, int h, double theta);

// Continuous mapping between the inscribed-rect frame of a rotated image and
// source pixel coordinates. Rotation is about the image center; pixel (x, y)
// spans [x, x+1) x [y, y+1) with its center at (x+0.5, y+0.5).
class RotatedFrame {
 public:
  RotatedFrame(int src_w, int src_h, double theta);

  const InscribedRect& inscribed() const { return rect_; }

  // Maps a continuous point in inscribed-rect coordinates (origin at the
  // rect's top-left corner) to continuous source coordinates (origin at the
  // image's top-left corner). For any point inside the rect the result lies
  // inside [0, src_w] x [0, src_h].
  void to_source(double rx, double ry, double& sx, double& sy) const;

 private:
  double cos_ = 1.0, sin_ = 0.0;
  double src_cx_ = 0.0, src_cy_ = 0.0;
  double half_w_ = 0.0, half_h_ = 0.0;  // inscribed-rect half extents
  InscribedRect rect_;
};

// Extracts the t x t square with top-left (x, y) in the inscribed-rect frame
// of img rotated by theta, by inverse-mapping each target pixel into the
// source. Equivalent (up to interpolation) to rotating the whole image,
// cropping to the blank-free rectangle and slicing out the square, without
// materializing the rotated image. Bilinear for RGB, nearest for masks.
// Throws SquareOutOfBounds unless 0 <= x, y and x+t <= rect.width,
// y+t <= rect.height.
Raster sample_rotated_square(const Raster& img, double theta, int x, int y, int t,
                             Interp interp);

// Square resize to s x s. Bilinear uses the corner-aligned convention: the
// first and last sample positions coincide with the first and last source
// pixel centers (a 1-pixel output samples the source midpoint). Nearest
// rounds the same positions to the closest pixel.
Raster resize(const Raster& src, int s, Interp interp);

// 8-bit quantization, round half to even. Exposed so golden tests can pin
// the exact rounding rule.
std::uint8_t quantize_u8(double v);

}  // namespace isd4l
