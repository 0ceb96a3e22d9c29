#include "masksizer/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"

namespace masksizer {

double distance(const Point& a, const Point& b) { return std::hypot(b.x - a.x, b.y - a.y); }

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw GeometryError("image dimensions must be positive");
  }
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) {
    throw GeometryError("image dimensions must be positive");
  }
  if (pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw GeometryError("pixel count does not match width x height");
  }
}

bool RectRegion::fits_in(int width, int height) const noexcept {
  return w >= 1 && h >= 1 && x0 >= 0 && y0 >= 0 && x0 + w <= width && y0 + h <= height;
}

bool RectRegion::contains(const Point& p) const noexcept {
  return p.x >= x0 && p.y >= y0 && p.x <= x0 + w && p.y <= y0 + h;
}

Point AffineStep::apply(const Point& p) const noexcept {
  return {(p.x - offset_x) * scale_x, (p.y - offset_y) * scale_y};
}

Point AffineStep::invert(const Point& p) const noexcept {
  return {p.x / scale_x + offset_x, p.y / scale_y + offset_y};
}

void TransformChain::push(const AffineStep& step) {
  if (!(step.scale_x > 0.0) || !(step.scale_y > 0.0)) {
    throw GeometryError("transform step scale must be positive");
  }
  steps_.push_back(step);
}

Point TransformChain::forward(const Point& p) const noexcept {
  Point q = p;
  for (const auto& step : steps_) q = step.apply(q);
  return q;
}

Point TransformChain::map_point(const Point& p) const noexcept {
  Point q = p;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) q = it->invert(q);
  return q;
}

namespace {

class PgmHeaderReader {
public:
  explicit PgmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) throw FormatError(std::string("pgm: ") + field + " out of range");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("pgm: malformed ") + field);
    return value;
  }

  std::size_t pos() const noexcept { return pos_; }
  void advance() noexcept { ++pos_; }
  bool at_space() const noexcept { return pos_ < bytes_.size() && std::isspace(bytes_[pos_]); }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

GrayImage load_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("pgm: magic is not P5");
  }
  PgmHeaderReader reader(bytes);
  const long width = reader.read_number("width");
  const long height = reader.read_number("height");
  const long maxval = reader.read_number("maxval");
  if (width < 1) throw FormatError("pgm: width must be positive");
  if (height < 1) throw FormatError("pgm: height must be positive");
  if (maxval != 255) throw FormatError("pgm: maxval must be 255");
  // Exactly one whitespace byte separates the header from the raster.
  if (!reader.at_space()) throw FormatError("pgm: missing separator after maxval");
  reader.advance();

  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - reader.pos() < need) {
    throw FormatError("pgm: payload truncated (" + std::to_string(bytes.size() - reader.pos()) +
                      " of " + std::to_string(need) + " bytes)");
  }
  std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos() + need));
  return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

std::vector<std::uint8_t> save_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  return out;
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  // Integer weights in thousandths keep the half-up rounding exact.
  const int weighted = 299 * r + 587 * g + 114 * b;
  return static_cast<std::uint8_t>((weighted + 500) / 1000);
}

GrayImage load_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw FormatError("png: " + message);
  }
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = luma(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  }
  return GrayImage(width, height, std::move(gray));
}

GrayImage decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
    return load_png(bytes);
  }
  return load_pgm(bytes);
}

GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_image(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::pair<GrayImage, AffineStep> crop(const GrayImage& img, const RectRegion& region) {
  if (!region.fits_in(img.width(), img.height())) {
    throw GeometryError("crop region [" + std::to_string(region.x0) + "," + std::to_string(region.y0) +
                        "," + std::to_string(region.w) + "," + std::to_string(region.h) +
                        "] is outside the " + std::to_string(img.width()) + "x" +
                        std::to_string(img.height()) + " image");
  }
  GrayImage out(region.w, region.h);
  for (int y = 0; y < region.h; ++y) {
    for (int x = 0; x < region.w; ++x) out.at(x, y) = img.at(region.x0 + x, region.y0 + y);
  }
  AffineStep step;
  step.offset_x = region.x0;
  step.offset_y = region.y0;
  return {std::move(out), step};
}

std::pair<GrayImage, AffineStep> resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) {
    throw GeometryError("resize target dimensions must be positive");
  }
  const int in_w = img.width();
  const int in_h = img.height();

  struct Tap {
    int i0, i1;
    double frac;
  };
  auto taps = [](int n_out, int n_in) {
    std::vector<Tap> t(static_cast<std::size_t>(n_out));
    const double ratio = static_cast<double>(n_in) / n_out;
    for (int d = 0; d < n_out; ++d) {
      double s = (d + 0.5) * ratio - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      t[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, n_in - 1), s - i0};
    }
    return t;
  };
  const auto tx = taps(out_w, in_w);
  const auto ty = taps(out_h, in_h);

  GrayImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      const double top = img.at(vx.i0, vy.i0) * (1.0 - vx.frac) + img.at(vx.i1, vy.i0) * vx.frac;
      const double bottom = img.at(vx.i0, vy.i1) * (1.0 - vx.frac) + img.at(vx.i1, vy.i1) * vx.frac;
      const double v = top * (1.0 - vy.frac) + bottom * vy.frac;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  AffineStep step;
  step.scale_x = static_cast<double>(out_w) / in_w;
  step.scale_y = static_cast<double>(out_h) / in_h;
  return {std::move(out), step};
}

}  // namespace masksizer
