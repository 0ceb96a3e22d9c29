#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "masksizer/dataset.hpp"
#include "masksizer/model_io.hpp"
#include "masksizer/sizing.hpp"
#include "masksizer/trainer.hpp"

namespace masksizer {

/// Width and size for one pair of original-space landmarks.
struct SizeResult {
  double width_mm = 0.0;
  double px_per_mm = 0.0;
  std::string size;
  std::string label;
  std::vector<BoundaryBand> bands;  // tolerance bands containing width_mm
  Landmarks landmarks;
};

SizeResult size_landmarks(const Landmarks& original_space, const ScaleSource& scale, const SizeChart& chart);
nlohmann::json size_result_to_json(const SizeResult& r, const SizeChart& chart);

struct Prediction {
  Landmarks crop_space;
  Landmarks original_space;
};

/// Runs the model on the annotated nose box of `original`; landmarks are
/// mapped back to original-image pixels. The crop size defaults to the
/// model's; a different size fails with ShapeError.
Prediction predict_original(const LandmarkModel& model, const GrayImage& original, const Annotation& annotation,
                            std::optional<std::pair<int, int>> crop = std::nullopt);

/// Outcomes for LOOCV results: mean landmarks are taken back to the
/// original image and sized with the sample's coin scale; the truth is the
/// caliper width. Samples without a caliper width are skipped.
std::vector<SizingOutcome> outcomes_from_folds(const std::vector<SampleRecord>& records,
                                               const PreparedSet& prepared, const std::vector<FoldResult>& folds,
                                               const SizeChart& chart);

struct LoocvRunFiles {
  std::filesystem::path folds;     // folds.jsonl
  std::filesystem::path outcomes;  // outcomes.jsonl
  std::filesystem::path report;    // report.json
  std::filesystem::path text;      // report.txt
  nlohmann::json report_json;
  std::string report_text;
  std::vector<Exclusion> excluded;
};

/// Full leave-one-out regime over the first `subset` manifest samples
/// (all when 0), writing byte-deterministic outputs into `out_dir`.
LoocvRunFiles run_loocv(const std::filesystem::path& manifest, const TrainConfig& config, std::size_t subset,
                        const std::filesystem::path& out_dir, const LoocvOptions& options = {},
                        const SizeChart& chart = SizeChart::eson());

}  // namespace masksizer
