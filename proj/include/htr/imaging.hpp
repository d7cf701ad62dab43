#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "htr/tensor.hpp"

namespace htr {

/// Grayscale image, row-major, 0 = black ink, 1 = white paper.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(Index width, Index height, double fill = 1.0);
  /// Throws ContractError if any pixel is outside [0, 1].
  explicit GrayImage(RowMatrixXd pixels);

  Index width() const { return pixels_.cols(); }
  Index height() const { return pixels_.rows(); }
  bool empty() const { return pixels_.size() == 0; }

  double operator()(Index x, Index y) const { return pixels_(y, x); }
  double& operator()(Index x, Index y) { return pixels_(y, x); }
  const RowMatrixXd& pixels() const { return pixels_; }
  RowMatrixXd& pixels() { return pixels_; }

  /// Bilinear sample at (x, y) in pixel coordinates; white outside.
  double sample(double x, double y) const;
  /// Ink mass map, 1 - pixel.
  RowMatrixXd ink() const { return 1.0 - pixels_.array(); }

  bool operator==(const GrayImage& other) const { return pixels_ == other.pixels_; }

 private:
  RowMatrixXd pixels_;
};

// ---- file formats ----

/// Binary PGM (P5), maxval <= 255.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
/// 8-bit PNG (gray, gray+alpha, RGB, RGBA), non-interlaced. Color is
/// converted to luma; alpha is composited over white.
GrayImage read_png(const std::filesystem::path& path);
/// 8-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const GrayImage& img);
/// Dispatches on the file signature.
GrayImage read_image(const std::filesystem::path& path);

/// Quantizes to 8-bit levels, as a PGM round trip would.
GrayImage quantize8(const GrayImage& img);

// ---- geometry ----

/// Rotates content counterclockwise (as displayed) by `degrees` about the
/// image center; same canvas, white fill.
GrayImage rotate(const GrayImage& img, double degrees);

/// Horizontal shear x' = x + factor * (distance above the bottom row). The
/// canvas widens so no ink is clipped. Positive factors lean strokes right.
GrayImage shear(const GrayImage& img, double factor);

struct AffineParams {
  double scale_x = 1;
  double scale_y = 1;
  double shear = 0;
  double translate_x = 0;
  double translate_y = 0;
};

/// Applies [[scale_x, shear], [0, scale_y]] about the center, then the
/// translation. The canvas is the bounding box of the transformed corners.
GrayImage affine(const GrayImage& img, const AffineParams& params);

struct AugmentRanges {
  double scale_x_min = 0.75, scale_x_max = 1.25;
  double scale_y_min = 0.9, scale_y_max = 1.1;
  double shear_max = 0.3;
  double translate_max = 2;
};

AffineParams draw_augmentation(std::uint64_t seed, const AugmentRanges& ranges = {});
/// Random affine distortion, deterministic in `seed`.
GrayImage augment(const GrayImage& img, std::uint64_t seed, const AugmentRanges& ranges = {});

/// Bilinear resize sampling at pixel centers.
GrayImage resize(const GrayImage& img, Index width, Index height);

/// Smallest box containing pixels darker than `threshold`, grown by
/// `margin` and clamped to the image. Blank images are returned unchanged.
GrayImage crop_to_ink(const GrayImage& img, Index margin = 0, double threshold = 0.5);

GrayImage median3x3(const GrayImage& img);

// ---- preprocessing ----

struct DeskewResult {
  GrayImage image;
  double angle = 0;  // estimated skew in degrees, counterclockwise
};

/// Sweeps angles in [-max, max] at 0.5 degree steps, keeping the one whose
/// horizontal ink profile has the largest variance, and rotates it back.
DeskewResult deskew(const GrayImage& img, double max_angle_deg = 15.0);

struct DeslantResult {
  GrayImage image;
  double shear = 0;  // applied correction factor
};

/// Sweeps shear factors in [-1, 1] at 0.1 steps, keeping the one whose
/// sheared ink has the most mass in fully contiguous columns (sum of squared
/// run lengths), and applies it.
DeslantResult deslant(const GrayImage& img);

/// Sum of squared column ink masses over the squared total: a concentration
/// measure of the vertical projection, insensitive to blank margins.
double column_peakedness(const GrayImage& img);

/// Aspect-preserving fit into target_w x target_h, pasted top-left on white.
GrayImage fit_to_canvas(const GrayImage& img, Index target_w = 128, Index target_h = 32);

/// fit_to_canvas followed by standardization to zero mean and unit variance
/// (variance guard 1 for uniform canvases). Returns target_h x target_w.
RowMatrixXd normalize_to_model(const GrayImage& img, Index target_w = 128, Index target_h = 32);

// ---- drawing ----

/// Draws a round-capped segment of the given stroke width in `ink` (0 is
/// black), anti-aliased over one pixel.
void draw_segment(GrayImage& img, double x0, double y0, double x1, double y1, double width, double ink = 0.0);

}  // namespace htr
