#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "masksizer/dataset.hpp"

namespace masksizer {

/// Layout under the root directory:
///   images/<sha256>.<pgm|png>          uploaded bytes, never modified
///   samples/<id>/sample.json           image reference and dimensions
///   samples/<id>/annotations/NNNNNN.json  every saved version
///   samples/<id>/prediction.json       latest model prediction
///   runs/<id>/run.json                 RunRecord plus output files
class Store {
public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  struct SampleInfo {
    std::string id;
    std::string image_sha256;
    std::string content_type;
    int width = 0;
    int height = 0;
  };

  /// Validates that the bytes decode, stores them content-addressed and
  /// allocates a new sample id.
  SampleInfo add_sample(const std::vector<std::uint8_t>& image_bytes, const std::string& content_type);
  std::optional<SampleInfo> sample(const std::string& id) const;
  std::vector<std::string> sample_ids() const;
  std::vector<std::uint8_t> image_bytes(const SampleInfo& info) const;
  GrayImage image(const SampleInfo& info) const;

  /// Appends a new annotation version; returns its number (1-based).
  int put_annotation(const std::string& id, const Annotation& a);
  std::optional<Annotation> annotation(const std::string& id) const;
  std::vector<nlohmann::json> annotation_versions(const std::string& id) const;

  void put_prediction(const std::string& id, const nlohmann::json& prediction);
  std::optional<nlohmann::json> prediction(const std::string& id) const;

  /// A LOOCV run registered in the store.
  struct RunRecord {
    std::string id;
    std::string status;  // running | done | failed
    nlohmann::json config;
    std::string manifest;
    std::string manifest_sha256;
    std::size_t subset = 0;
    std::string folds_path;   // relative to the run directory
    std::string report_path;
    std::string folds_sha256;
    std::string report_sha256;
    std::string created;
    std::string finished;
    std::string error;
  };

  RunRecord create_run(const nlohmann::json& config, const std::filesystem::path& manifest, std::size_t subset);
  void save_run(const RunRecord& r);
  /// Throws IoError when a finished run's files are missing or altered.
  std::optional<RunRecord> run(const std::string& id) const;
  std::vector<RunRecord> runs() const;
  std::filesystem::path run_dir(const std::string& id) const;

private:
  std::mutex& lock_for(const std::string& id) const;
  std::filesystem::path sample_dir(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex registry_mutex_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> sample_locks_;
};

nlohmann::json run_to_json(const Store::RunRecord& r);
Store::RunRecord run_from_json(const nlohmann::json& j);

std::string utc_timestamp();

}  // namespace masksizer
