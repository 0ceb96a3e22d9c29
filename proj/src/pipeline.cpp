#include "masksizer/pipeline.hpp"

#include <map>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"

namespace masksizer {

using nlohmann::json;

SizeResult size_landmarks(const Landmarks& original_space, const ScaleSource& scale, const SizeChart& chart) {
  SizeResult r;
  r.landmarks = original_space;
  r.px_per_mm = scale_px_per_mm(scale);
  r.width_mm = width_mm(original_space.left, original_space.right, r.px_per_mm);
  const std::size_t k = classify_index(r.width_mm, chart);
  r.size = chart[k].name;
  r.label = chart[k].label;
  r.bands = bands_containing(r.width_mm, chart);
  return r;
}

json size_result_to_json(const SizeResult& r, const SizeChart& chart) {
  json bands = json::array();
  for (const auto& b : r.bands) {
    bands.push_back({{"boundary_mm", b.boundary},
                     {"low_mm", b.low},
                     {"high_mm", b.high},
                     {"sizes", {chart[b.below].name, chart[b.above].name}}});
  }
  return json{{"width_mm", r.width_mm},
              {"size", r.size},
              {"label", r.label},
              {"px_per_mm", r.px_per_mm},
              {"in_band", !r.bands.empty()},
              {"bands", bands},
              {"landmarks",
               {{"left", {r.landmarks.left.x, r.landmarks.left.y}}, {"right", {r.landmarks.right.x, r.landmarks.right.y}}}}};
}

Prediction predict_original(const LandmarkModel& model, const GrayImage& original, const Annotation& annotation,
                            std::optional<std::pair<int, int>> crop) {
  const auto [w, h] = crop.value_or(std::pair{model.crop_w, model.crop_h});
  auto [crop_img, chain] = extract_nose_crop(original, annotation, w, h);
  Prediction p;
  p.crop_space = predict_landmarks(model.params, model.stats, crop_img);
  p.original_space = {chain.map_point(p.crop_space.left), chain.map_point(p.crop_space.right)};
  return p;
}

std::vector<SizingOutcome> outcomes_from_folds(const std::vector<SampleRecord>& records,
                                               const PreparedSet& prepared, const std::vector<FoldResult>& folds,
                                               const SizeChart& chart) {
  if (folds.size() != prepared.samples.size()) throw ArgumentError("fold results do not match the prepared samples");
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<SizingOutcome> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    const auto& ps = prepared.samples[i];
    if (f.sample_id != ps.id) throw ArgumentError("fold " + std::to_string(i) + " is for a different sample");
    const SampleRecord& rec = *by_id.at(f.sample_id);
    if (!rec.caliper_alar_mm) continue;
    const Point left = ps.chain.map_point({f.mean[0], f.mean[1]});
    const Point right = ps.chain.map_point({f.mean[2], f.mean[3]});
    const double predicted = width_mm(left, right, scale_px_per_mm(rec.annotation));
    out.push_back(make_outcome(rec.id, *rec.caliper_alar_mm, predicted, chart));
  }
  return out;
}

LoocvRunFiles run_loocv(const std::filesystem::path& manifest, const TrainConfig& config, std::size_t subset,
                        const std::filesystem::path& out_dir, const LoocvOptions& options, const SizeChart& chart) {
  config.validate();
  auto records = load_manifest(manifest, chart);
  if (subset > 0 && subset < records.size()) records.resize(subset);
  const PreparedSet prepared = prepare_samples(records, config.crop_w, config.crop_h);
  const auto folds = loocv(prepared, config, options);
  const auto outcomes = outcomes_from_folds(records, prepared, folds, chart);

  LoocvRunFiles files;
  files.excluded = prepared.excluded;
  std::filesystem::create_directories(out_dir);
  files.folds = out_dir / "folds.jsonl";
  files.outcomes = out_dir / "outcomes.jsonl";
  files.report = out_dir / "report.json";
  files.text = out_dir / "report.txt";

  write_file_text(files.folds, folds_to_jsonl(folds));
  std::string outcome_lines;
  for (const auto& o : outcomes) outcome_lines += outcome_to_json(o).dump() + "\n";
  write_file_text(files.outcomes, outcome_lines);

  json excluded = json::array();
  for (const auto& e : prepared.excluded) excluded.push_back({{"id", e.id}, {"reason", e.reason}});
  if (outcomes.empty()) {
    files.report_json = {{"samples", folds.size()}, {"excluded", excluded}, {"predicted", nullptr}};
    files.report_text = "no samples with caliper widths; nothing to size\n";
  } else {
    const ConfusionMatrix cm = confusion(outcomes, chart);
    const SizingMetrics m = metrics(cm);
    files.report_json = {{"samples", folds.size()},
                         {"excluded", excluded},
                         {"config", config_to_json(config)},
                         {"manifest_sha256", sha256_file(manifest)},
                         {"predicted", report_json(cm, m, chart)}};
    files.report_text = report_text("Predicted mask sizes (leave-one-out, mean landmarks)", cm, m, chart);
    const ManualBaseline manual = manual_baseline(records, chart);
    if (!manual.outcomes.empty()) {
      const ConfusionMatrix mcm = confusion(manual.outcomes, chart);
      const SizingMetrics mm = metrics(mcm);
      files.report_json["manual"] = report_json(mcm, mm, chart);
      files.report_text += "\n" + report_text("Manually measured mask sizes (labelled landmarks)", mcm, mm, chart);
    }
  }
  write_file_text(files.report, files.report_json.dump(2) + "\n");
  write_file_text(files.text, files.report_text);
  return files;
}

}  // namespace masksizer
