#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "masksizer/imaging.hpp"

namespace masksizer {

class SizeChart;

/// Diameter of the reference coin (Australian 20 cent piece).
inline constexpr double kCoinDiameterMm = 28.65;

/// Side length of the face sub-image every face box is resized to.
inline constexpr int kFaceSize = 512;

struct Landmarks {
  Point left;
  Point right;
};

struct CoinEndpoints {
  Point p1;
  Point p2;
};

struct DirectScale {
  double px_per_mm = 0.0;
};

using ScaleSource = std::variant<CoinEndpoints, DirectScale>;

/// Annotation of one image, in original-image pixels. Drafts (as edited in
/// the review service) may lack any field; manifest records must be complete.
struct Annotation {
  std::optional<Landmarks> landmarks;
  std::optional<ScaleSource> scale;
  std::optional<RectRegion> face_box;
  std::optional<RectRegion> nose_box;
};

enum class Completeness { draft, complete };

/// Throws ValidationError naming the field and rule. Boxes are checked
/// against the image bounds when dimensions are given.
void validate_annotation(const Annotation& a, Completeness level,
                         std::optional<std::pair<int, int>> image_dims = std::nullopt,
                         const std::string& where = {});

/// Parses the annotation fields of a manifest object. Throws ValidationError
/// on malformed fields (including both coin forms present).
Annotation annotation_from_json(const nlohmann::json& j, const std::string& where = {});
nlohmann::json annotation_to_json(const Annotation& a);

double scale_px_per_mm(const Annotation& a);
double scale_px_per_mm(const ScaleSource& s);

struct SampleRecord {
  std::string id;
  std::filesystem::path image_path;  // resolved against the manifest directory
  std::string image_ref;             // as written in the manifest
  Annotation annotation;
  std::optional<double> caliper_alar_mm;
  std::optional<std::string> ground_truth_size;
  nlohmann::json meta = nlohmann::json::object();
};

SampleRecord sample_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              const SizeChart& chart, const std::string& where = {},
                              std::vector<std::string>* warnings = nullptr);
nlohmann::json sample_to_json(const SampleRecord& s);

/// Reads a JSON Lines manifest. Unknown fields produce warnings.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path, const SizeChart& chart,
                                        std::vector<std::string>* warnings = nullptr);
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& samples);

/// Row-major dense matrix, one sample per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Scalars that map raw intensities and crop-space landmark coordinates
/// into [-1, 1]: v' = v / max - mean.
struct NormStats {
  double x_max = 1.0;
  double x_mean = 0.0;
  double y_max = 1.0;
  double y_mean = 0.0;
};

/// One sample after cropping and resizing, before normalization.
struct PreparedSample {
  std::string id;
  Eigen::VectorXd pixels;           // raw intensities, row-major unwrapped crop
  std::array<double, 4> target{};   // crop-space (x_left, y_left, x_right, y_right)
  TransformChain chain;             // original -> crop space
};

/// Loads, crops the face box, resizes it to kFaceSize square, crops the
/// nose box and resizes to crop_w x crop_h. Returns the crop and the chain.
std::pair<GrayImage, TransformChain> extract_nose_crop(const GrayImage& original,
                                                       const Annotation& a, int crop_w, int crop_h);

/// Throws when the image cannot be loaded or a landmark falls outside the crop.
PreparedSample prepare_sample(const SampleRecord& s, int crop_w, int crop_h);

struct Exclusion {
  std::string id;
  std::string reason;
};

struct PreparedSet {
  std::vector<PreparedSample> samples;
  std::vector<Exclusion> excluded;
  int crop_w = 0;
  int crop_h = 0;
};

PreparedSet prepare_samples(const std::vector<SampleRecord>& records, int crop_w, int crop_h);

NormStats compute_norm_stats(std::span<const PreparedSample* const> samples);

struct DesignMatrix {
  RowMatrix inputs;   // rows x (crop_w * crop_h)
  RowMatrix targets;  // rows x 4
  std::vector<std::string> ids;
  int crop_w = 0;
  int crop_h = 0;

  Eigen::Index rows() const noexcept { return inputs.rows(); }
  Eigen::Index cols() const noexcept { return inputs.cols(); }

  /// SHA-256 over ids, shape and the little-endian bytes of every value.
  std::string checksum() const;
};

DesignMatrix assemble_design_matrix(std::span<const PreparedSample* const> samples,
                                    const NormStats& stats, int crop_w, int crop_h);

struct DesignBuild {
  DesignMatrix matrix;
  NormStats stats;
  std::vector<TransformChain> chains;
  std::vector<Exclusion> excluded;
};

DesignBuild build_design_matrix(const std::vector<SampleRecord>& samples, int crop_w, int crop_h);

Eigen::VectorXd normalize_inputs(const Eigen::VectorXd& raw, const NormStats& stats);
std::array<double, 4> normalize_targets(const std::array<double, 4>& y, const NormStats& stats);
std::array<double, 4> denormalize_targets(const std::array<double, 4>& y_norm, const NormStats& stats);

}  // namespace masksizer
