#include <doctest.h>

#include <png.h>

#include <algorithm>
#include <cstring>
#include <string>

#include "helpers.hpp"
#include "masksizer/errors.hpp"
#include "masksizer/imaging.hpp"
#include "masksizer/rng.hpp"

using namespace masksizer;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> encode_png(int w, int h, png_uint_32 format, const std::vector<std::uint8_t>& pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  REQUIRE(png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr));
  std::vector<std::uint8_t> out(size);
  REQUIRE(png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr));
  out.resize(size);
  return out;
}

}  // namespace

TEST_CASE("crop returns the region and an offset step") {
  const GrayImage img = testing::ramp_image(512, 512);
  auto [out, step] = crop(img, RectRegion{150, 200, 200, 150});
  CHECK(out.width() == 200);
  CHECK(out.height() == 150);
  CHECK(step.offset_x == 150.0);
  CHECK(step.offset_y == 200.0);
  CHECK(step.scale_x == 1.0);
  CHECK(out.at(0, 0) == img.at(150, 200));
  CHECK(out.at(199, 149) == img.at(349, 349));
}

TEST_CASE("crop outside the image or empty is rejected") {
  const GrayImage img(10, 10);
  CHECK_THROWS_AS(crop(img, RectRegion{5, 5, 6, 2}), GeometryError);
  CHECK_THROWS_AS(crop(img, RectRegion{0, 0, 0, 2}), GeometryError);
  CHECK_THROWS_AS(crop(img, RectRegion{-1, 0, 2, 2}), GeometryError);
}

TEST_CASE("bilinear upscale of a two pixel row") {
  const GrayImage img(2, 1, std::vector<std::uint8_t>{0, 255});
  auto [out, step] = resize_bilinear(img, 4, 1);
  // Centres 0.5..3.5 map to source -0.25, 0.25, 0.75, 1.25.
  const std::vector<std::uint8_t> expected = {0, 64, 191, 255};
  CHECK(std::vector<std::uint8_t>(out.pixels().begin(), out.pixels().end()) == expected);
  CHECK(step.scale_x == doctest::Approx(2.0));
  CHECK(step.scale_y == doctest::Approx(1.0));
}

TEST_CASE("resize rejects zero dimensions") {
  const GrayImage img(4, 4);
  CHECK_THROWS_AS(resize_bilinear(img, 0, 3), GeometryError);
  CHECK_THROWS_AS(resize_bilinear(img, 3, 0), GeometryError);
}

TEST_CASE("resize stays inside the input envelope") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(30));
    const int h = 1 + static_cast<int>(rng.below(30));
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h));
    for (auto& p : px) p = static_cast<std::uint8_t>(40 + rng.below(150));
    const GrayImage img(w, h, px);
    const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
    auto [out, step] = resize_bilinear(img, 1 + static_cast<int>(rng.below(50)), 1 + static_cast<int>(rng.below(50)));
    for (auto v : out.pixels()) {
      CHECK(v >= *lo);
      CHECK(v <= *hi);
    }
  }
}

TEST_CASE("resize to the same size is the identity") {
  const GrayImage img = testing::ramp_image(17, 9);
  auto [out, step] = resize_bilinear(img, 17, 9);
  CHECK(out == img);
}

TEST_CASE("transform chain composes crop and downscale") {
  TransformChain chain;
  chain.push(AffineStep{1.0, 1.0, 100.0, 100.0});
  chain.push(AffineStep{0.5, 0.5, 0.0, 0.0});
  const Point p = chain.map_point({50.0, 40.0});
  CHECK(p.x == doctest::Approx(200.0));
  CHECK(p.y == doctest::Approx(180.0));
  const Point back = chain.forward(p);
  CHECK(back.x == doctest::Approx(50.0));
  CHECK(back.y == doctest::Approx(40.0));
}

TEST_CASE("transform chain round trip over random steps") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    TransformChain chain;
    const int n = 1 + static_cast<int>(rng.below(4));
    for (int k = 0; k < n; ++k) {
      chain.push(AffineStep{rng.uniform(0.1, 4.0), rng.uniform(0.1, 4.0), rng.uniform(-50, 50), rng.uniform(-50, 50)});
    }
    const Point p{rng.uniform(0, 500), rng.uniform(0, 500)};
    const Point q = chain.map_point(chain.forward(p));
    CHECK(q.x == doctest::Approx(p.x).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(p.y).epsilon(1e-12));
  }
}

TEST_CASE("transform chain rejects degenerate scale") {
  TransformChain chain;
  CHECK_THROWS_AS(chain.push(AffineStep{0.0, 1.0, 0.0, 0.0}), GeometryError);
}

TEST_CASE("crop then resize chain maps pixel centres consistently") {
  const GrayImage img = testing::ramp_image(300, 200);
  TransformChain chain;
  auto [c, s1] = crop(img, RectRegion{50, 20, 200, 150});
  auto [r, s2] = resize_bilinear(c, 100, 75);
  chain.push(s1);
  chain.push(s2);
  // Pixel centre (0.5, 0.5) of the 100x75 image sits at the centre of a
  // 2x2 source block starting at (50, 20).
  const Point p = chain.map_point({0.5, 0.5});
  CHECK(p.x == doctest::Approx(51.0));
  CHECK(p.y == doctest::Approx(21.0));
}

TEST_CASE("pgm round trip is bit exact") {
  const GrayImage img = testing::ramp_image(13, 7);
  const auto bytes = save_pgm(img);
  const std::string header = "P5\n13 7\n255\n";
  CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
  CHECK(load_pgm(bytes) == img);
  CHECK(decode_image(bytes) == img);
}

TEST_CASE("pgm header comments are skipped") {
  std::string data = "P5\n# made by hand\n2 1\n# another\n255\n";
  data += static_cast<char>(3);
  data += static_cast<char>(250);
  const GrayImage img = load_pgm(bytes_of(data));
  CHECK(img.width() == 2);
  CHECK(img.at(0, 0) == 3);
  CHECK(img.at(1, 0) == 250);
}

TEST_CASE("malformed pgm input") {
  CHECK_THROWS_AS(load_pgm(bytes_of("P2\n1 1\n255\n0")), FormatError);
  CHECK_THROWS_AS(load_pgm(bytes_of("P5\n2 2\n255\nab")), FormatError);
  CHECK_THROWS_AS(load_pgm(bytes_of("P5\n2 2\n65535\n")), FormatError);
  CHECK_THROWS_AS(load_pgm(bytes_of("P5\n0 2\n255\n")), FormatError);
  CHECK_THROWS_AS(decode_image(bytes_of("GIF89a")), FormatError);
}

TEST_CASE("png gray and rgb decode") {
  const std::vector<std::uint8_t> gray = {0, 10, 20, 200, 210, 255};
  CHECK(load_png(encode_png(3, 2, PNG_FORMAT_GRAY, gray)) == GrayImage(3, 2, gray));

  const std::vector<std::uint8_t> rgb = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30};
  const GrayImage g = decode_image(encode_png(2, 2, PNG_FORMAT_RGB, rgb));
  CHECK(g.at(0, 0) == luma(255, 0, 0));
  CHECK(g.at(1, 0) == luma(0, 255, 0));
  CHECK(g.at(0, 1) == luma(0, 0, 255));
  CHECK(g.at(1, 1) == luma(10, 20, 30));
}

TEST_CASE("luma uses integer half-up rounding") {
  CHECK(luma(255, 255, 255) == 255);
  CHECK(luma(0, 0, 0) == 0);
  CHECK(luma(255, 0, 0) == 76);   // 76.245
  CHECK(luma(0, 255, 0) == 150);  // 149.685
  CHECK(luma(0, 0, 255) == 29);   // 29.07
}

TEST_CASE("rect contains is closed on all edges") {
  const RectRegion r{10, 10, 5, 5};
  CHECK(r.contains({10.0, 10.0}));
  CHECK(r.contains({15.0, 15.0}));
  CHECK_FALSE(r.contains({15.0001, 12.0}));
  CHECK(r.fits_in(15, 15));
  CHECK_FALSE(r.fits_in(14, 15));
}
