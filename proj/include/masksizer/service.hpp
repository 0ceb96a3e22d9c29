#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "masksizer/model_io.hpp"
#include "masksizer/sizing.hpp"
#include "masksizer/store.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace masksizer {

struct ServiceOptions {
  /// Nose crop size used for prediction; the model's when unset.
  std::optional<std::pair<int, int>> crop;
  int loocv_threads = 1;
};

/// HTTP/JSON facade over a Store. The model is loaded once and shared
/// read-only by all request threads.
class Service {
public:
  Service(Store& store, std::optional<LandmarkModel> model, ServiceOptions options = {},
          SizeChart chart = SizeChart::eson());
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void mount(httplib::Server& server);

  /// Blocks until every background run started so far has finished.
  void wait_for_runs();

private:
  void post_sample(const httplib::Request& req, httplib::Response& res);
  void list_samples(const httplib::Request& req, httplib::Response& res);
  void get_sample(const httplib::Request& req, httplib::Response& res);
  void get_image(const httplib::Request& req, httplib::Response& res);
  void put_annotation(const httplib::Request& req, httplib::Response& res);
  void get_annotation(const httplib::Request& req, httplib::Response& res);
  void predict(const httplib::Request& req, httplib::Response& res);
  void size(const httplib::Request& req, httplib::Response& res);
  void post_run(const httplib::Request& req, httplib::Response& res);
  void list_runs(const httplib::Request& req, httplib::Response& res);
  void get_run(const httplib::Request& req, httplib::Response& res);
  void get_run_report(const httplib::Request& req, httplib::Response& res);

  Store::SampleInfo require_sample(const std::string& id) const;

  Store& store_;
  std::optional<LandmarkModel> model_;
  ServiceOptions options_;
  SizeChart chart_;
  std::mutex jobs_mutex_;
  std::vector<std::jthread> jobs_;
};

}  // namespace masksizer
