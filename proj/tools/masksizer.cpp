// masksizer: command-line driver for the mask sizing pipeline.

#include <cstdlib>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "masksizer/checksum.hpp"
#include "masksizer/dataset.hpp"
#include "masksizer/errors.hpp"
#include "masksizer/model_io.hpp"
#include "masksizer/pipeline.hpp"
#include "masksizer/service.hpp"
#include "masksizer/sizing.hpp"
#include "masksizer/store.hpp"
#include "masksizer/synthgen.hpp"
#include "masksizer/trainer.hpp"

using namespace masksizer;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TrainFlags {
  TrainConfig config;
  std::vector<int> crop;
  std::string stats = "per-fold";

  void add(CLI::App& cmd) {
    cmd.add_option("--alpha", config.alpha0, "Initial learning rate")->capture_default_str();
    cmd.add_option("--mu", config.mu, "Momentum")->capture_default_str();
    cmd.add_option("--drop", config.drop_prob, "Dropout probability")->capture_default_str();
    cmd.add_option("--hidden", config.n_hidden, "Hidden units")->capture_default_str();
    cmd.add_option("--max-epochs", config.max_epochs)->capture_default_str();
    cmd.add_option("--patience", config.patience)->capture_default_str();
    cmd.add_option("--batch", config.batch_size)->capture_default_str();
    cmd.add_option("--reps", config.repetitions, "Repetitions per fold")->capture_default_str();
    cmd.add_option("--seed", config.base_seed, "Base seed")->capture_default_str();
    cmd.add_option("--crop", crop, "Nose crop size W H")->expected(2);
    cmd.add_option("--stats", stats, "Normalization statistics")
        ->check(CLI::IsMember({"per-fold", "global"}))
        ->capture_default_str();
  }

  TrainConfig resolve() {
    if (crop.size() == 2) {
      config.crop_w = crop[0];
      config.crop_h = crop[1];
    }
    config.stats_mode = stats == "global" ? StatsMode::global : StatsMode::per_fold;
    config.validate();
    return config;
  }
};

std::optional<std::pair<int, int>> crop_pair(const std::vector<int>& v) {
  if (v.size() != 2) return std::nullopt;
  return std::pair{v[0], v[1]};
}

json read_json_file(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

json report_pair(const json& tables, const SizeChart& chart, std::string& text) {
  json out = json::object();
  static const std::vector<std::pair<std::string, std::string>> titles = {
      {"predicted", "Predicted mask sizes"}, {"manual", "Manually measured mask sizes"}};
  for (const auto& [key, title] : titles) {
    if (!tables.contains(key)) continue;
    const ConfusionMatrix cm = confusion_from_json(tables.at(key));
    const SizingMetrics m = metrics(cm);
    out[key] = report_json(cm, m, chart);
    if (!text.empty()) text += "\n";
    text += report_text(tables.at(key).value("title", title), cm, m, chart);
  }
  return out;
}

int run_synth(const fs::path& out, const SynthParams& params) {
  const SizeChart chart = SizeChart::eson();
  params.validate(chart);
  const Corpus corpus = generate(params, chart);
  const fs::path manifest = write_corpus(corpus, out);
  const CorpusDifficulty d = corpus_difficulty(corpus.manifest, chart);
  std::cout << json{{"manifest", manifest.string()},
                    {"samples", d.samples},
                    {"per_size", d.per_size},
                    {"band_fraction", d.band_fraction}}
                   .dump(2)
            << "\n";
  return 0;
}

int run_validate(const fs::path& manifest) {
  std::vector<std::string> warnings;
  const auto records = load_manifest(manifest, SizeChart::eson(), &warnings);
  for (const auto& r : records) {
    const GrayImage img = load_image(r.image_path);
    validate_annotation(r.annotation, Completeness::complete, std::pair{img.width(), img.height()}, r.id);
  }
  std::cout << json{{"ok", true}, {"samples", records.size()}, {"warnings", warnings}}.dump(2) << "\n";
  return 0;
}

int run_train(const fs::path& manifest, const fs::path& out, TrainConfig config) {
  const auto records = load_manifest(manifest);
  const PreparedSet prepared = prepare_samples(records, config.crop_w, config.crop_h);
  TrainTrace trace;
  const LandmarkModel model = train_model(prepared, config, config.base_seed, &trace);
  save_model(out, model);
  json excluded = json::array();
  for (const auto& e : prepared.excluded) excluded.push_back({{"id", e.id}, {"reason", e.reason}});
  std::cout << json{{"model", out.string()},
                    {"samples", prepared.samples.size()},
                    {"excluded", excluded},
                    {"epochs", trace.epochs_run},
                    {"best_epoch", trace.best_epoch},
                    {"best_sse", trace.best_sse},
                    {"improvements", trace.improvements}}
                   .dump(2)
            << "\n";
  return 0;
}

int run_loocv_cmd(const fs::path& manifest, const TrainConfig& config, std::size_t subset, const std::string& out,
                  const std::string& store_dir, int threads, bool progress) {
  LoocvOptions opts;
  opts.threads = threads;
  if (progress) {
    opts.progress = [](std::size_t done, std::size_t total) { std::cerr << "fold " << done << "/" << total << "\n"; };
  }
  std::optional<Store> store;
  std::optional<Store::RunRecord> record;
  fs::path dir = out;
  if (!store_dir.empty()) {
    store.emplace(store_dir);
    record = store->create_run(config_to_json(config), manifest, subset);
    dir = store->run_dir(record->id);
  }
  try {
    const LoocvRunFiles files = run_loocv(manifest, config, subset, dir, opts);
    json summary = {{"out", dir.string()},
                    {"folds_sha256", sha256_file(files.folds)},
                    {"report_sha256", sha256_file(files.report)}};
    if (files.report_json.contains("predicted") && !files.report_json["predicted"].is_null()) {
      summary["accuracy"] = files.report_json["predicted"]["accuracy"];
      summary["within_one"] = files.report_json["predicted"]["within_one"];
    }
    if (record) {
      record->status = "done";
      record->folds_sha256 = summary["folds_sha256"];
      record->report_sha256 = summary["report_sha256"];
      record->finished = utc_timestamp();
      store->save_run(*record);
      summary["run"] = record->id;
    }
    std::cout << summary.dump(2) << "\n";
  } catch (const std::exception& e) {
    if (record) {
      record->status = "failed";
      record->error = e.what();
      record->finished = utc_timestamp();
      store->save_run(*record);
    }
    throw;
  }
  return 0;
}

int run_evaluate(bool fixtures, const std::string& tables_path, const std::string& folds, const std::string& manifest,
                 const std::vector<int>& crop, bool as_json) {
  const SizeChart chart = SizeChart::eson();
  std::string text;
  json out;
  if (fixtures) {
    json tables;
    if (tables_path.empty()) {
      tables = {{"predicted", {{"matrix", fixture_predicted_matrix().counts()}}},
                {"manual", {{"matrix", fixture_manual_matrix().counts()}}}};
    } else {
      tables = read_json_file(tables_path);
    }
    out = report_pair(tables, chart, text);
  } else {
    if (folds.empty() || manifest.empty()) throw ArgumentError("evaluate needs --fixtures or both --folds and --manifest");
    const auto records = load_manifest(manifest, chart);
    const auto results = load_folds(folds);
    const auto [w, h] = crop_pair(crop).value_or(std::pair{TrainConfig{}.crop_w, TrainConfig{}.crop_h});
    std::map<std::string, const SampleRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;
    std::vector<SampleRecord> used;
    for (const auto& f : results) {
      const auto it = by_id.find(f.sample_id);
      if (it == by_id.end()) throw ArgumentError("fold sample '" + f.sample_id + "' is not in the manifest");
      used.push_back(*it->second);
    }
    const PreparedSet prepared = prepare_samples(used, w, h);
    const auto outcomes = outcomes_from_folds(records, prepared, results, chart);
    if (outcomes.empty()) throw ArgumentError("no folds with caliper widths to evaluate");
    const ConfusionMatrix cm = confusion(outcomes, chart);
    const SizingMetrics m = metrics(cm);
    out = {{"predicted", report_json(cm, m, chart)}};
    text = report_text("Predicted mask sizes", cm, m, chart);
  }
  if (as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << text;
  }
  return 0;
}

int run_size(const fs::path& image_path, const fs::path& annot_path, const std::string& model_path,
             const std::vector<int>& crop) {
  const SizeChart chart = SizeChart::eson();
  const GrayImage img = load_image(image_path);
  const Annotation a = annotation_from_json(read_json_file(annot_path), annot_path.string());
  validate_annotation(a, Completeness::draft, std::pair{img.width(), img.height()});
  if (!a.scale) throw ValidationError("coin", "required for sizing");
  Landmarks landmarks;
  std::string source;
  if (!model_path.empty()) {
    const LandmarkModel model = load_model(model_path);
    landmarks = predict_original(model, img, a, crop_pair(crop)).original_space;
    source = "prediction";
  } else {
    if (!a.landmarks) throw ValidationError("landmarks", "required when no model is given");
    landmarks = *a.landmarks;
    source = "annotation";
  }
  json out = size_result_to_json(size_landmarks(landmarks, *a.scale, chart), chart);
  out["source"] = source;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_report(const std::string& dir, const std::string& store_dir, const std::string& run_id, bool as_json) {
  fs::path run_dir = dir;
  if (!store_dir.empty()) {
    Store store(store_dir);
    const auto r = store.run(run_id);
    if (!r) throw ArgumentError("unknown run '" + run_id + "'");
    if (r->status != "done") throw ArgumentError("run '" + run_id + "' is " + r->status);
    run_dir = store.run_dir(run_id);
  }
  if (run_dir.empty()) throw ArgumentError("report needs a run directory or --store with --run");
  const auto bytes = read_file_bytes(run_dir / (as_json ? "report.json" : "report.txt"));
  std::cout << std::string(bytes.begin(), bytes.end());
  return 0;
}

int run_serve(const std::string& store_dir, const std::string& host, int port, const std::string& model_path,
              const std::vector<int>& crop, int threads) {
  if (store_dir.empty()) throw ArgumentError("no store directory; pass --store or set MASKSIZER_STORE");
  Store store(store_dir);
  std::optional<LandmarkModel> model;
  if (!model_path.empty()) model = load_model(model_path);
  ServiceOptions opts;
  opts.crop = crop_pair(crop);
  opts.loocv_threads = threads;
  Service service(store, std::move(model), opts);
  httplib::Server server;
  service.mount(server);
  std::cerr << "serving " << store_dir << " on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

void print_error(const std::exception& e) {
  json err = {{"error", "error"}, {"message", e.what()}};
  if (const auto* me = dynamic_cast<const Error*>(&e)) err["error"] = me->kind();
  if (const auto* ve = dynamic_cast<const ValidationError*>(&e)) {
    err["field"] = ve->field();
    err["rule"] = ve->rule();
  }
  if (const auto* te = dynamic_cast<const TrainingError*>(&e)) {
    err["epoch"] = te->epoch();
    err["alpha"] = te->alpha();
  }
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nasal mask sizing from facial photographs"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic nose corpus");
  std::string synth_out;
  SynthParams sp;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", sp.seed)->capture_default_str();
  synth->add_option("--count", sp.count)->capture_default_str();
  synth->add_option("--width", sp.image_w)->capture_default_str();
  synth->add_option("--height", sp.image_h)->capture_default_str();
  synth->add_option("--alar-min", sp.alar_min_mm)->capture_default_str();
  synth->add_option("--alar-max", sp.alar_max_mm)->capture_default_str();
  synth->add_option("--scale-min", sp.scale_min)->capture_default_str();
  synth->add_option("--scale-max", sp.scale_max)->capture_default_str();
  synth->add_option("--noise", sp.noise)->capture_default_str();
  synth->add_option("--tilt", sp.tilt_deg)->capture_default_str();

  // validate
  auto* validate = app.add_subcommand("validate", "Check a manifest and its images");
  std::string validate_manifest;
  validate->add_option("manifest", validate_manifest)->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model on a whole manifest");
  std::string train_manifest, train_out;
  TrainFlags train_flags;
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--out", train_out, "Model file")->required();
  train_flags.add(*train);

  // loocv
  auto* loo = app.add_subcommand("loocv", "Leave-one-out evaluation with sizing report");
  std::string loo_manifest, loo_out, loo_store;
  std::size_t loo_subset = 0;
  int loo_threads = 1;
  bool loo_progress = false;
  TrainFlags loo_flags;
  loo->add_option("--manifest", loo_manifest)->required();
  auto* loo_out_opt = loo->add_option("--out", loo_out, "Output directory");
  auto* loo_store_opt = loo->add_option("--store", loo_store, "Register the run in this store");
  loo_out_opt->excludes(loo_store_opt);
  loo->add_option("--subset", loo_subset, "Use only the first N samples (0 = all)")->capture_default_str();
  loo->add_option("--threads", loo_threads)->capture_default_str();
  loo->add_flag("--progress", loo_progress);
  loo_flags.add(*loo);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Sizing metrics from confusion tables or fold results");
  std::string tables_path, eval_folds, eval_manifest;
  std::vector<int> eval_crop;
  bool eval_json = false;
  auto* fixtures_opt = evaluate->add_option("--fixtures", tables_path, "Tables JSON (embedded tables when empty)")
                           ->expected(0, 1);
  evaluate->add_option("--folds", eval_folds);
  evaluate->add_option("--manifest", eval_manifest);
  evaluate->add_option("--crop", eval_crop)->expected(2);
  evaluate->add_flag("--json", eval_json);

  // size
  auto* size = app.add_subcommand("size", "Size one image from its annotation");
  std::string size_image, size_annot, size_model;
  std::vector<int> size_crop;
  size->add_option("--image", size_image)->required();
  size->add_option("--annot", size_annot)->required();
  size->add_option("--model", size_model);
  size->add_option("--crop", size_crop)->expected(2);

  // report
  auto* report = app.add_subcommand("report", "Print the report of a finished run");
  std::string report_dir, report_store, report_run;
  bool report_json_flag = false;
  report->add_option("dir", report_dir, "Run output directory");
  report->add_option("--store", report_store);
  report->add_option("--run", report_run);
  report->add_flag("--json", report_json_flag);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string serve_store, serve_host = "127.0.0.1", serve_model;
  int serve_port = 8080, serve_threads = 1;
  std::vector<int> serve_crop;
  if (const char* env = std::getenv("MASKSIZER_STORE")) serve_store = env;
  serve->add_option("--store", serve_store, "Store directory (default $MASKSIZER_STORE)");
  serve->add_option("--host", serve_host)->capture_default_str();
  serve->add_option("--port", serve_port)->capture_default_str();
  serve->add_option("--model", serve_model);
  serve->add_option("--crop", serve_crop)->expected(2);
  serve->add_option("--threads", serve_threads, "Worker threads for background runs")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_out, sp);
    if (*validate) return run_validate(validate_manifest);
    if (*train) return run_train(train_manifest, train_out, train_flags.resolve());
    if (*loo) {
      if (loo_out.empty() && loo_store.empty()) {
        std::cerr << "loocv: one of --out or --store is required\n";
        return 2;
      }
      return run_loocv_cmd(loo_manifest, loo_flags.resolve(), loo_subset, loo_out, loo_store, loo_threads,
                           loo_progress);
    }
    if (*evaluate) {
      return run_evaluate(fixtures_opt->count() > 0, tables_path, eval_folds, eval_manifest, eval_crop, eval_json);
    }
    if (*size) return run_size(size_image, size_annot, size_model, size_crop);
    if (*report) return run_report(report_dir, report_store, report_run, report_json_flag);
    if (*serve) return run_serve(serve_store, serve_host, serve_port, serve_model, serve_crop, serve_threads);
  } catch (const std::exception& e) {
    print_error(e);
    return 1;
  }
  return 0;
}
