#include "masksizer/sizing.hpp"

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>

#include "masksizer/dataset.hpp"
#include "masksizer/errors.hpp"

namespace masksizer {

using nlohmann::json;

SizeChart::SizeChart(std::vector<SizeInterval> sizes, double tolerance)
    : sizes_(std::move(sizes)), tolerance_(tolerance) {
  if (sizes_.empty()) throw ArgumentError("size chart is empty");
  if (!(tolerance_ >= 0.0 && tolerance_ < 0.5)) throw ArgumentError("tolerance must lie in [0, 0.5)");
  if (sizes_.front().lower_mm != 0.0) throw ArgumentError("size chart must start at 0 mm");
  if (!std::isinf(sizes_.back().upper_mm)) throw ArgumentError("size chart must extend to infinity");
  std::set<std::string> names;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    const auto& s = sizes_[i];
    if (!(s.upper_mm > s.lower_mm)) throw ArgumentError("size '" + s.name + "' has an empty interval");
    if (i > 0 && s.lower_mm != sizes_[i - 1].upper_mm) {
      throw ArgumentError("size chart intervals are not contiguous at '" + s.name + "'");
    }
    if (!names.insert(s.name).second) throw ArgumentError("duplicate size name '" + s.name + "'");
  }
}

SizeChart SizeChart::eson() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return SizeChart({{"S", "Small", 0.0, 37.0},
                    {"M", "Medium", 37.0, 41.0},
                    {"L", "Large", 41.0, 45.0},
                    {"TL", "Too Large", 45.0, inf}},
                   0.02);
}

SizeChart SizeChart::from_json(const json& j) {
  std::vector<SizeInterval> sizes;
  for (const auto& s : j.at("sizes")) {
    SizeInterval iv;
    iv.name = s.at("name").get<std::string>();
    iv.label = s.value("label", iv.name);
    iv.lower_mm = s.at("lower_mm").get<double>();
    iv.upper_mm = s.contains("upper_mm") && !s["upper_mm"].is_null() ? s["upper_mm"].get<double>()
                                                                     : std::numeric_limits<double>::infinity();
    sizes.push_back(std::move(iv));
  }
  return SizeChart(std::move(sizes), j.value("tolerance", 0.02));
}

std::size_t SizeChart::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i].name == name) return i;
  }
  throw ArgumentError("unknown size '" + std::string(name) + "'");
}

bool SizeChart::contains(std::string_view name) const noexcept {
  for (const auto& s : sizes_) {
    if (s.name == name) return true;
  }
  return false;
}

double width_mm(const Point& left, const Point& right, double px_per_mm) {
  if (!(px_per_mm > 0.0) || !std::isfinite(px_per_mm)) throw ArgumentError("scale must be positive");
  return distance(left, right) / px_per_mm;
}

std::size_t classify_index(double width, const SizeChart& chart) {
  if (!std::isfinite(width)) throw ArgumentError("width must be finite");
  if (width < 0.0) throw ArgumentError("width must be non-negative");
  for (std::size_t i = 0; i < chart.size(); ++i) {
    if (width >= chart[i].lower_mm && width < chart[i].upper_mm) return i;
  }
  return chart.size() - 1;  // unreachable for a valid chart
}

std::string classify(double width, const SizeChart& chart) { return chart[classify_index(width, chart)].name; }

std::pair<double, double> tolerance_band(double boundary, double fraction) {
  return {boundary * (1.0 - fraction), boundary * (1.0 + fraction)};
}

std::vector<BoundaryBand> bands_containing(double width, const SizeChart& chart) {
  std::vector<BoundaryBand> out;
  for (std::size_t i = 1; i < chart.size(); ++i) {
    const double b = chart[i].lower_mm;
    const auto [lo, hi] = tolerance_band(b, chart.tolerance());
    if (width >= lo && width <= hi) out.push_back({b, lo, hi, i - 1, i});
  }
  return out;
}

bool is_correct(double truth_width, std::string_view predicted_size, const SizeChart& chart) {
  const std::size_t predicted = chart.index_of(predicted_size);
  if (predicted == classify_index(truth_width, chart)) return true;
  for (const auto& band : bands_containing(truth_width, chart)) {
    if (predicted == band.below || predicted == band.above) return true;
  }
  return false;
}

SizingOutcome make_outcome(std::string sample_id, double truth_width, double predicted_width,
                           const SizeChart& chart) {
  SizingOutcome o;
  o.sample_id = std::move(sample_id);
  o.truth_width_mm = truth_width;
  o.predicted_width_mm = predicted_width;
  o.truth_size = classify(truth_width, chart);
  o.predicted_size = classify(predicted_width, chart);
  o.correct_with_tolerance = is_correct(truth_width, o.predicted_size, chart);
  return o;
}

ConfusionMatrix::ConfusionMatrix(std::size_t n) : counts_(n, std::vector<std::int64_t>(n, 0)) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::vector<std::int64_t>> counts) : counts_(std::move(counts)) {
  for (const auto& row : counts_) {
    if (row.size() != counts_.size()) throw ArgumentError("confusion matrix must be square");
    for (auto c : row) {
      if (c < 0) throw ArgumentError("confusion counts must be non-negative");
    }
  }
}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, std::int64_t n) {
  counts_.at(actual).at(predicted) += n;
}

std::int64_t ConfusionMatrix::total() const noexcept {
  std::int64_t t = 0;
  for (const auto& row : counts_) {
    for (auto c : row) t += c;
  }
  return t;
}

std::int64_t ConfusionMatrix::trace() const noexcept {
  std::int64_t t = 0;
  for (std::size_t k = 0; k < counts_.size(); ++k) t += counts_[k][k];
  return t;
}

std::int64_t ConfusionMatrix::row_total(std::size_t k) const {
  std::int64_t t = 0;
  for (auto c : counts_.at(k)) t += c;
  return t;
}

std::int64_t ConfusionMatrix::col_total(std::size_t k) const {
  std::int64_t t = 0;
  for (const auto& row : counts_) t += row.at(k);
  return t;
}

ConfusionMatrix confusion(const std::vector<SizingOutcome>& outcomes, const SizeChart& chart) {
  if (outcomes.empty()) throw ArgumentError("no outcomes to tabulate");
  ConfusionMatrix cm(chart.size());
  for (const auto& o : outcomes) {
    const std::size_t predicted = chart.index_of(o.predicted_size);
    const std::size_t actual = o.correct_with_tolerance ? predicted : chart.index_of(o.truth_size);
    cm.add(actual, predicted);
  }
  return cm;
}

SizingMetrics metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw ArgumentError("confusion matrix is empty");
  const std::size_t n = cm.order();
  SizingMetrics m;
  m.accuracy = {cm.trace(), total};
  std::int64_t far = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (std::llabs(static_cast<long long>(a) - static_cast<long long>(p)) >= 2) far += cm.at(a, p);
    }
  }
  m.within_one = {total - far, total};
  for (std::size_t k = 0; k < n; ++k) {
    m.sensitivity.push_back({cm.at(k, k), cm.row_total(k)});
    m.ppv.push_back({cm.at(k, k), cm.col_total(k)});
  }
  return m;
}

ManualBaseline manual_baseline(const std::vector<SampleRecord>& samples, const SizeChart& chart) {
  ManualBaseline out;
  for (const auto& s : samples) {
    if (!s.caliper_alar_mm || !s.annotation.landmarks || !s.annotation.scale) {
      out.skipped.push_back(s.id);
      continue;
    }
    const double predicted = width_mm(s.annotation.landmarks->left, s.annotation.landmarks->right,
                                      scale_px_per_mm(s.annotation));
    out.outcomes.push_back(make_outcome(s.id, *s.caliper_alar_mm, predicted, chart));
  }
  return out;
}

ConfusionMatrix fixture_predicted_matrix() {
  return ConfusionMatrix({{61, 26, 5, 1}, {8, 55, 9, 0}, {1, 3, 21, 1}, {0, 1, 0, 6}});
}

ConfusionMatrix fixture_manual_matrix() {
  return ConfusionMatrix({{81, 12, 0, 0}, {2, 66, 4, 0}, {0, 1, 23, 2}, {0, 0, 0, 7}});
}

namespace {

json ratio_json(const Ratio& r) {
  if (!r.defined()) return json{{"num", r.num}, {"den", r.den}, {"value", nullptr}, {"percent", nullptr}};
  return json{{"num", r.num}, {"den", r.den}, {"value", r.value()}, {"percent", r.percent_half_up()}};
}

std::string percent_cell(const Ratio& r) { return r.defined() ? std::to_string(r.percent_half_up()) : "-"; }

std::string one_decimal_percent(const Ratio& r) {
  // Tenths of a percent, half-up, in integers.
  const std::int64_t tenths = (2000 * r.num + r.den) / (2 * r.den);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "%";
}

}  // namespace

json report_json(const ConfusionMatrix& cm, const SizingMetrics& m, const SizeChart& chart) {
  json sizes = json::array();
  json rows = json::object();
  json cols = json::object();
  json per_size = json::object();
  for (std::size_t k = 0; k < chart.size(); ++k) {
    const auto& name = chart[k].name;
    sizes.push_back(name);
    rows[name] = cm.row_total(k);
    cols[name] = cm.col_total(k);
    per_size[name] = {{"sensitivity", ratio_json(m.sensitivity[k])}, {"ppv", ratio_json(m.ppv[k])}};
  }
  return json{{"sizes", sizes},
              {"matrix", cm.counts()},
              {"totals", {{"total", cm.total()}, {"trace", cm.trace()}, {"actual", rows}, {"predicted", cols}}},
              {"accuracy", ratio_json(m.accuracy)},
              {"within_one", ratio_json(m.within_one)},
              {"per_size", per_size}};
}

std::string report_text(const std::string& title, const ConfusionMatrix& cm, const SizingMetrics& m,
                        const SizeChart& chart) {
  std::ostringstream os;
  os << title << "\n";
  os << std::left << std::setw(14) << "actual\\pred";
  for (const auto& s : chart.sizes()) os << std::right << std::setw(11) << s.label;
  os << "\n";
  for (std::size_t a = 0; a < chart.size(); ++a) {
    os << std::left << std::setw(14) << chart[a].label;
    for (std::size_t p = 0; p < chart.size(); ++p) os << std::right << std::setw(11) << cm.at(a, p);
    os << "\n";
  }
  os << "\n" << std::left << std::setw(14) << "(%)";
  for (const auto& s : chart.sizes()) os << std::right << std::setw(6) << s.name;
  os << "\n" << std::left << std::setw(14) << "sensitivity";
  for (const auto& r : m.sensitivity) os << std::right << std::setw(6) << percent_cell(r);
  os << "\n" << std::left << std::setw(14) << "pos. predict.";
  for (const auto& r : m.ppv) os << std::right << std::setw(6) << percent_cell(r);
  os << "\n\naccuracy      " << m.accuracy.num << "/" << m.accuracy.den << " = " << one_decimal_percent(m.accuracy)
     << "\nwithin one    " << m.within_one.num << "/" << m.within_one.den << " = "
     << one_decimal_percent(m.within_one) << "\n";
  return os.str();
}

json outcome_to_json(const SizingOutcome& o) {
  return json{{"id", o.sample_id},
              {"truth_mm", o.truth_width_mm},
              {"predicted_mm", o.predicted_width_mm},
              {"truth_size", o.truth_size},
              {"predicted_size", o.predicted_size},
              {"correct", o.correct_with_tolerance}};
}

ConfusionMatrix confusion_from_json(const json& j) {
  const json& counts = j.is_object() ? j.at("matrix") : j;
  return ConfusionMatrix(counts.get<std::vector<std::vector<std::int64_t>>>());
}

}  // namespace masksizer
