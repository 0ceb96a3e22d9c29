#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace masksizer {

/// Continuous pixel coordinates: origin at the top-left corner of pixel
/// (0,0), x rightward, y downward. Pixel (i,j) covers [i,i+1) x [j,j+1).
struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b);

/// 8-bit grayscale raster, row-major.
class GrayImage {
public:
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::uint8_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

struct RectRegion {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;

  bool fits_in(int width, int height) const noexcept;
  bool contains(const Point& p) const noexcept;
  friend bool operator==(const RectRegion&, const RectRegion&) = default;
};

/// One affine map from a step's input space to its output space:
/// out = (in - offset) * scale, applied per axis.
struct AffineStep {
  double scale_x = 1.0;
  double scale_y = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  Point apply(const Point& p) const noexcept;
  Point invert(const Point& p) const noexcept;
};

/// Ordered steps taking original-image coordinates to processed coordinates.
class TransformChain {
public:
  TransformChain() = default;

  void push(const AffineStep& step);
  std::span<const AffineStep> steps() const noexcept { return steps_; }

  /// Original space to processed space.
  Point forward(const Point& p) const noexcept;

  /// Processed space back to original space.
  Point map_point(const Point& p) const noexcept;

private:
  std::vector<AffineStep> steps_;
};

inline Point map_point(const TransformChain& chain, const Point& p) { return chain.map_point(p); }

GrayImage load_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> save_pgm(const GrayImage& img);

/// 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette); colour is reduced with
/// luma weights 0.299/0.587/0.114 rounded half-up.
GrayImage load_png(std::span<const std::uint8_t> bytes);

/// Dispatches on the magic bytes (P5 or PNG).
GrayImage decode_image(std::span<const std::uint8_t> bytes);
GrayImage load_image(const std::filesystem::path& path);

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

std::pair<GrayImage, AffineStep> crop(const GrayImage& img, const RectRegion& region);

/// Bilinear resampling with pixel-centre alignment and edge clamping.
std::pair<GrayImage, AffineStep> resize_bilinear(const GrayImage& img, int out_w, int out_h);

}  // namespace masksizer
