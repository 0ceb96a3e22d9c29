#include "masksizer/service.hpp"

#include <functional>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"
#include "masksizer/pipeline.hpp"
#include "masksizer/trainer.hpp"

namespace masksizer {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

struct HttpError {
  int status;
  json body;
};

[[noreturn]] void fail(int status, const std::string& error, const std::string& message) {
  throw HttpError{status, {{"error", error}, {"message", message}}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    fail(400, "bad_request", std::string("request body is not JSON: ") + e.what());
  }
}

json landmarks_to_json(const Landmarks& l) { return annotation_to_json(Annotation{l, {}, {}, {}})["landmarks"]; }

json sample_info_json(const Store::SampleInfo& s) {
  return {{"id", s.id},
          {"image_sha256", s.image_sha256},
          {"content_type", s.content_type},
          {"width", s.width},
          {"height", s.height}};
}

using Handler = void (Service::*)(const httplib::Request&, httplib::Response&);

}  // namespace

Service::Service(Store& store, std::optional<LandmarkModel> model, ServiceOptions options, SizeChart chart)
    : store_(store), model_(std::move(model)), options_(options), chart_(std::move(chart)) {}

Service::~Service() { wait_for_runs(); }

void Service::wait_for_runs() {
  std::vector<std::jthread> jobs;
  {
    std::lock_guard guard(jobs_mutex_);
    jobs.swap(jobs_);
  }
  for (auto& j : jobs) j.join();
}

void Service::mount(httplib::Server& server) {
  auto wrap = [this](Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      try {
        (this->*h)(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status, e.body);
      } catch (const ValidationError& e) {
        reply(res, 422, {{"error", "validation"}, {"field", e.field()}, {"rule", e.rule()}, {"message", e.what()}});
      } catch (const ShapeError& e) {
        reply(res, 422, {{"error", "shape"}, {"message", e.what()}});
      } catch (const GeometryError& e) {
        reply(res, 422, {{"error", "geometry"}, {"message", e.what()}});
      } catch (const FormatError& e) {
        reply(res, 422, {{"error", "format"}, {"message", e.what()}});
      } catch (const ArgumentError& e) {
        reply(res, 422, {{"error", "argument"}, {"message", e.what()}});
      } catch (const json::exception& e) {
        reply(res, 422, {{"error", "validation"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  };
  const std::string id = "([A-Za-z0-9-]+)";
  server.Post("/samples", wrap(&Service::post_sample));
  server.Get("/samples", wrap(&Service::list_samples));
  server.Get("/samples/" + id, wrap(&Service::get_sample));
  server.Get("/samples/" + id + "/image", wrap(&Service::get_image));
  server.Put("/samples/" + id + "/annotation", wrap(&Service::put_annotation));
  server.Get("/samples/" + id + "/annotation", wrap(&Service::get_annotation));
  server.Post("/samples/" + id + "/predict", wrap(&Service::predict));
  server.Post("/samples/" + id + "/size", wrap(&Service::size));
  server.Post("/runs", wrap(&Service::post_run));
  server.Get("/runs", wrap(&Service::list_runs));
  server.Get("/runs/" + id, wrap(&Service::get_run));
  server.Get("/runs/" + id + "/report", wrap(&Service::get_run_report));
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    json crop = nullptr;
    if (options_.crop) {
      crop = {options_.crop->first, options_.crop->second};
    } else if (model_) {
      crop = {model_->crop_w, model_->crop_h};
    }
    reply(res, 200, {{"model_loaded", model_.has_value()}, {"crop", crop}});
  });
}

Store::SampleInfo Service::require_sample(const std::string& id) const {
  auto info = store_.sample(id);
  if (!info) fail(404, "not_found", "unknown sample '" + id + "'");
  return *info;
}

void Service::post_sample(const httplib::Request& req, httplib::Response& res) {
  std::string type = req.get_header_value("Content-Type");
  type = type.substr(0, type.find(';'));
  if (type != "image/x-portable-graymap" && type != "image/png") {
    fail(415, "unsupported_media_type", "expected image/x-portable-graymap or image/png, got '" + type + "'");
  }
  const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
  const auto info = store_.add_sample(bytes, type);
  reply(res, 201, sample_info_json(info));
}

void Service::list_samples(const httplib::Request&, httplib::Response& res) {
  json out = json::array();
  for (const auto& id : store_.sample_ids()) out.push_back(sample_info_json(*store_.sample(id)));
  reply(res, 200, out);
}

void Service::get_sample(const httplib::Request& req, httplib::Response& res) {
  const auto info = require_sample(req.matches[1]);
  json j = sample_info_json(info);
  const auto versions = store_.annotation_versions(info.id);
  j["annotation_versions"] = versions.size();
  j["has_prediction"] = store_.prediction(info.id).has_value();
  reply(res, 200, j);
}

void Service::get_image(const httplib::Request& req, httplib::Response& res) {
  const auto info = require_sample(req.matches[1]);
  const auto bytes = store_.image_bytes(info);
  res.status = 200;
  res.set_content(std::string(bytes.begin(), bytes.end()), info.content_type);
}

void Service::put_annotation(const httplib::Request& req, httplib::Response& res) {
  const auto info = require_sample(req.matches[1]);
  const json body = parse_body(req);
  if (!body.is_object()) fail(422, "validation", "annotation must be a JSON object");
  const Annotation a = annotation_from_json(body);
  validate_annotation(a, Completeness::draft, std::pair{info.width, info.height});
  const int version = store_.put_annotation(info.id, a);
  reply(res, 200, {{"id", info.id}, {"version", version}, {"annotation", annotation_to_json(a)}});
}

void Service::get_annotation(const httplib::Request& req, httplib::Response& res) {
  const auto info = require_sample(req.matches[1]);
  const auto versions = store_.annotation_versions(info.id);
  if (versions.empty()) fail(404, "not_found", "sample '" + info.id + "' has no annotation");
  json latest = versions.back();
  latest["id"] = info.id;
  if (req.has_param("history")) {
    latest["history"] = versions;
  }
  reply(res, 200, latest);
}

void Service::predict(const httplib::Request& req, httplib::Response& res) {
  const auto info = require_sample(req.matches[1]);
  if (!model_) fail(503, "no_model", "the service was started without a model");
  const auto versions = store_.annotation_versions(info.id);
  if (versions.empty()) fail(409, "no_annotation", "annotate the nose box before requesting a prediction");
  const Annotation a = annotation_from_json(versions.back().at("annotation"));
  if (!a.nose_box) fail(409, "no_nose_box", "annotate the nose box before requesting a prediction");

  const Prediction p = predict_original(*model_, store_.image(info), a, options_.crop);
  const auto [w, h] = options_.crop.value_or(std::pair{model_->crop_w, model_->crop_h});
  const json out = {{"id", info.id},
                    {"annotation_version", versions.back().at("version")},
                    {"crop", {w, h}},
                    {"landmarks", landmarks_to_json(p.original_space)},
                    {"crop_landmarks", landmarks_to_json(p.crop_space)}};
  store_.put_prediction(info.id, out);
  reply(res, 200, out);
}

void Service::size(const httplib::Request& req, httplib::Response& res) {
  const auto info = require_sample(req.matches[1]);
  const json body = parse_body(req);
  const std::string source = body.is_object() ? body.value("source", "") : "";
  if (!source.empty() && source != "annotation" && source != "prediction") {
    fail(422, "validation", "source must be 'annotation' or 'prediction'");
  }

  const auto versions = store_.annotation_versions(info.id);
  std::optional<Annotation> a;
  if (!versions.empty()) a = annotation_from_json(versions.back().at("annotation"));
  const auto prediction = store_.prediction(info.id);

  std::optional<Landmarks> landmarks;
  std::string used;
  if (source != "prediction" && a && a->landmarks) {
    landmarks = a->landmarks;
    used = "annotation";
  } else if (source != "annotation" && prediction) {
    landmarks = annotation_from_json({{"landmarks", prediction->at("landmarks")}}).landmarks;
    used = "prediction";
  }
  if (!landmarks) fail(409, "no_landmarks", "no landmarks have been annotated or predicted for '" + info.id + "'");
  if (!a || !a->scale) fail(409, "no_scale", "mark the coin before requesting a size");

  json out = size_result_to_json(size_landmarks(*landmarks, *a->scale, chart_), chart_);
  out["id"] = info.id;
  out["source"] = used;
  out["annotation_version"] = versions.back().at("version");
  reply(res, 200, out);
}

void Service::post_run(const httplib::Request& req, httplib::Response& res) {
  const json body = parse_body(req);
  if (!body.is_object() || !body.contains("manifest")) fail(422, "validation", "'manifest' is required");
  const std::filesystem::path manifest = body.at("manifest").get<std::string>();
  if (!std::filesystem::exists(manifest)) fail(422, "validation", "manifest not found: " + manifest.string());
  const TrainConfig config = config_from_json(body.value("config", json::object()));
  config.validate();
  const std::size_t subset = body.value("subset", std::size_t{0});

  Store::RunRecord record = store_.create_run(config_to_json(config), manifest, subset);
  const int threads = options_.loocv_threads;
  std::lock_guard guard(jobs_mutex_);
  jobs_.emplace_back([this, record, config, manifest, subset, threads]() mutable {
    try {
      LoocvOptions opts;
      opts.threads = threads;
      const auto dir = store_.run_dir(record.id);
      const auto files = run_loocv(manifest, config, subset, dir, opts, chart_);
      record.folds_sha256 = sha256_file(files.folds);
      record.report_sha256 = sha256_file(files.report);
      record.status = "done";
    } catch (const std::exception& e) {
      record.status = "failed";
      record.error = e.what();
    }
    record.finished = utc_timestamp();
    store_.save_run(record);
  });
  reply(res, 202, run_to_json(record));
}

void Service::list_runs(const httplib::Request&, httplib::Response& res) {
  json out = json::array();
  for (const auto& r : store_.runs()) out.push_back(run_to_json(r));
  reply(res, 200, out);
}

void Service::get_run(const httplib::Request& req, httplib::Response& res) {
  const auto r = store_.run(req.matches[1]);
  if (!r) fail(404, "not_found", "unknown run '" + std::string(req.matches[1]) + "'");
  reply(res, 200, run_to_json(*r));
}

void Service::get_run_report(const httplib::Request& req, httplib::Response& res) {
  const auto r = store_.run(req.matches[1]);
  if (!r) fail(404, "not_found", "unknown run '" + std::string(req.matches[1]) + "'");
  if (r->status != "done") fail(409, "run_" + r->status, "run '" + r->id + "' is " + r->status);
  const auto text = read_file_bytes(store_.run_dir(r->id) / r->report_path);
  res.status = 200;
  res.set_content(std::string(text.begin(), text.end()), kJson);
}

}  // namespace masksizer
