#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "masksizer/dataset.hpp"
#include "masksizer/imaging.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("masksizer-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline masksizer::GrayImage ramp_image(int w, int h) {
  masksizer::GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 13) % 256);
  }
  return img;
}

/// Complete annotation for a 200x160 image with a direct scale.
inline masksizer::Annotation simple_annotation() {
  masksizer::Annotation a;
  a.landmarks = masksizer::Landmarks{{60.0, 80.0}, {140.0, 80.0}};
  a.scale = masksizer::DirectScale{2.0};
  a.face_box = masksizer::RectRegion{0, 0, 200, 160};
  a.nose_box = masksizer::RectRegion{40, 40, 120, 90};
  return a;
}

}  // namespace testing
