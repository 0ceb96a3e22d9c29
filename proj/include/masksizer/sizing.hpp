#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "masksizer/imaging.hpp"

namespace masksizer {

struct SampleRecord;

struct SizeInterval {
  std::string name;   // short code used in manifests, e.g. "M"
  std::string label;  // display name, e.g. "Medium"
  double lower_mm = 0.0;
  double upper_mm = std::numeric_limits<double>::infinity();
};

/// Contiguous half-open intervals [lower, upper) covering [0, inf).
class SizeChart {
public:
  SizeChart(std::vector<SizeInterval> sizes, double tolerance = 0.02);

  /// Eson nasal mask: S [0,37), M [37,41), L [41,45), TL [45,inf).
  static SizeChart eson();
  static SizeChart from_json(const nlohmann::json& j);

  std::size_t size() const noexcept { return sizes_.size(); }
  const SizeInterval& operator[](std::size_t i) const { return sizes_.at(i); }
  const std::vector<SizeInterval>& sizes() const noexcept { return sizes_; }
  double tolerance() const noexcept { return tolerance_; }

  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const noexcept;

private:
  std::vector<SizeInterval> sizes_;
  double tolerance_;
};

double width_mm(const Point& left, const Point& right, double px_per_mm);

std::string classify(double width, const SizeChart& chart);
std::size_t classify_index(double width, const SizeChart& chart);

std::pair<double, double> tolerance_band(double boundary, double fraction);

/// A size boundary together with the sizes on either side of it.
struct BoundaryBand {
  double boundary = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t below = 0;  // chart index of the size under the boundary
  std::size_t above = 0;
};

/// Internal boundaries whose tolerance band contains `width` (inclusive).
std::vector<BoundaryBand> bands_containing(double width, const SizeChart& chart);

bool is_correct(double truth_width, std::string_view predicted_size, const SizeChart& chart);

struct SizingOutcome {
  std::string sample_id;
  double truth_width_mm = 0.0;
  double predicted_width_mm = 0.0;
  std::string truth_size;
  std::string predicted_size;
  bool correct_with_tolerance = false;
};

SizingOutcome make_outcome(std::string sample_id, double truth_width, double predicted_width,
                           const SizeChart& chart);

/// Exact fraction; `den == 0` marks an undefined entry.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 0;

  bool defined() const noexcept { return den != 0; }
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  /// 100 * num / den rounded half-up, computed in integers.
  std::int64_t percent_half_up() const noexcept { return (200 * num + den) / (2 * den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Rows are actual sizes, columns predicted sizes, in chart order.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t n = 4);
  ConfusionMatrix(std::vector<std::vector<std::int64_t>> counts);

  std::size_t order() const noexcept { return counts_.size(); }
  std::int64_t at(std::size_t actual, std::size_t predicted) const {
    return counts_.at(actual).at(predicted);
  }
  void add(std::size_t actual, std::size_t predicted, std::int64_t n = 1);
  std::int64_t total() const noexcept;
  std::int64_t trace() const noexcept;
  std::int64_t row_total(std::size_t k) const;
  std::int64_t col_total(std::size_t k) const;
  const std::vector<std::vector<std::int64_t>>& counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
  std::vector<std::vector<std::int64_t>> counts_;
};

/// Tolerance-correct mismatches land on the diagonal at the predicted size.
ConfusionMatrix confusion(const std::vector<SizingOutcome>& outcomes, const SizeChart& chart);

struct SizingMetrics {
  Ratio accuracy;
  Ratio within_one;
  std::vector<Ratio> sensitivity;  // per size, den 0 when the row is empty
  std::vector<Ratio> ppv;          // per size, den 0 when the column is empty
};

SizingMetrics metrics(const ConfusionMatrix& cm);

struct ManualBaseline {
  std::vector<SizingOutcome> outcomes;
  std::vector<std::string> skipped;  // ids without a caliper width
};

/// Sizes each sample from its labelled landmarks and coin scale.
ManualBaseline manual_baseline(const std::vector<SampleRecord>& samples, const SizeChart& chart);

/// The predicted and manually measured matrices reported for the Eson study.
ConfusionMatrix fixture_predicted_matrix();
ConfusionMatrix fixture_manual_matrix();

nlohmann::json report_json(const ConfusionMatrix& cm, const SizingMetrics& m, const SizeChart& chart);
std::string report_text(const std::string& title, const ConfusionMatrix& cm, const SizingMetrics& m,
                        const SizeChart& chart);

nlohmann::json outcome_to_json(const SizingOutcome& o);

ConfusionMatrix confusion_from_json(const nlohmann::json& j);

}  // namespace masksizer
