#include "masksizer/store.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"

namespace masksizer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  // Write-then-rename so readers never see a partial file.
  const fs::path tmp = p.string() + ".tmp";
  write_file_text(tmp, j.dump(2) + "\n");
  fs::rename(tmp, p);
}

std::string next_id(const fs::path& dir, const char* prefix) {
  fs::create_directories(dir);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) ++n;
  }
  for (;; ++n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, n + 1);
    if (!fs::exists(dir / buf)) return buf;
  }
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Store::Store(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "images");
  fs::create_directories(root_ / "samples");
  fs::create_directories(root_ / "runs");
}

std::mutex& Store::lock_for(const std::string& id) const {
  std::lock_guard guard(registry_mutex_);
  auto& slot = sample_locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

fs::path Store::sample_dir(const std::string& id) const { return root_ / "samples" / id; }

Store::SampleInfo Store::add_sample(const std::vector<std::uint8_t>& image_bytes, const std::string& content_type) {
  std::string ext;
  if (content_type == "image/x-portable-graymap") {
    ext = "pgm";
  } else if (content_type == "image/png") {
    ext = "png";
  } else {
    throw FormatError("unsupported content type '" + content_type + "'");
  }
  const GrayImage img = ext == "png" ? load_png(image_bytes) : load_pgm(image_bytes);
  SampleInfo info;
  info.image_sha256 = sha256_hex(std::span<const std::uint8_t>(image_bytes));
  info.content_type = content_type;
  info.width = img.width();
  info.height = img.height();

  const fs::path image_file = root_ / "images" / (info.image_sha256 + "." + ext);
  std::lock_guard guard(registry_mutex_);
  if (!fs::exists(image_file)) write_file_bytes(image_file, image_bytes);
  info.id = next_id(root_ / "samples", "smp");
  fs::create_directories(sample_dir(info.id) / "annotations");
  write_json(sample_dir(info.id) / "sample.json", {{"id", info.id},
                                                   {"image_sha256", info.image_sha256},
                                                   {"content_type", info.content_type},
                                                   {"width", info.width},
                                                   {"height", info.height}});
  return info;
}

std::optional<Store::SampleInfo> Store::sample(const std::string& id) const {
  if (!valid_id(id)) return std::nullopt;
  const fs::path p = sample_dir(id) / "sample.json";
  if (!fs::exists(p)) return std::nullopt;
  const json j = read_json(p);
  return SampleInfo{j.at("id").get<std::string>(), j.at("image_sha256").get<std::string>(),
                    j.at("content_type").get<std::string>(), j.at("width").get<int>(), j.at("height").get<int>()};
}

std::vector<std::string> Store::sample_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root_ / "samples")) {
    if (e.is_directory() && fs::exists(e.path() / "sample.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::uint8_t> Store::image_bytes(const SampleInfo& info) const {
  const std::string ext = info.content_type == "image/png" ? "png" : "pgm";
  return read_file_bytes(root_ / "images" / (info.image_sha256 + "." + ext));
}

GrayImage Store::image(const SampleInfo& info) const { return decode_image(image_bytes(info)); }

int Store::put_annotation(const std::string& id, const Annotation& a) {
  std::lock_guard guard(lock_for(id));
  const fs::path dir = sample_dir(id) / "annotations";
  fs::create_directories(dir);
  int version = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") version = std::max(version, std::stoi(e.path().stem().string()));
  }
  ++version;
  char name[32];
  std::snprintf(name, sizeof name, "%06d.json", version);
  json j = annotation_to_json(a);
  write_json(dir / name, {{"version", version}, {"saved", utc_timestamp()}, {"annotation", j}});
  return version;
}

std::vector<json> Store::annotation_versions(const std::string& id) const {
  std::lock_guard guard(lock_for(id));
  std::vector<fs::path> files;
  const fs::path dir = sample_dir(id) / "annotations";
  if (!fs::exists(dir)) return {};
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<json> out;
  for (const auto& f : files) out.push_back(read_json(f));
  return out;
}

std::optional<Annotation> Store::annotation(const std::string& id) const {
  const auto versions = annotation_versions(id);
  if (versions.empty()) return std::nullopt;
  return annotation_from_json(versions.back().at("annotation"));
}

void Store::put_prediction(const std::string& id, const json& prediction) {
  std::lock_guard guard(lock_for(id));
  write_json(sample_dir(id) / "prediction.json", prediction);
}

std::optional<json> Store::prediction(const std::string& id) const {
  std::lock_guard guard(lock_for(id));
  const fs::path p = sample_dir(id) / "prediction.json";
  if (!fs::exists(p)) return std::nullopt;
  return read_json(p);
}

json run_to_json(const Store::RunRecord& r) {
  return json{{"id", r.id},
              {"status", r.status},
              {"config", r.config},
              {"manifest", r.manifest},
              {"manifest_sha256", r.manifest_sha256},
              {"subset", r.subset},
              {"folds", r.folds_path},
              {"report", r.report_path},
              {"folds_sha256", r.folds_sha256},
              {"report_sha256", r.report_sha256},
              {"created", r.created},
              {"finished", r.finished},
              {"error", r.error}};
}

Store::RunRecord run_from_json(const json& j) {
  Store::RunRecord r;
  r.id = j.at("id").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.config = j.at("config");
  r.manifest = j.at("manifest").get<std::string>();
  r.manifest_sha256 = j.at("manifest_sha256").get<std::string>();
  r.subset = j.at("subset").get<std::size_t>();
  r.folds_path = j.at("folds").get<std::string>();
  r.report_path = j.at("report").get<std::string>();
  r.folds_sha256 = j.at("folds_sha256").get<std::string>();
  r.report_sha256 = j.at("report_sha256").get<std::string>();
  r.created = j.at("created").get<std::string>();
  r.finished = j.at("finished").get<std::string>();
  r.error = j.value("error", "");
  return r;
}

fs::path Store::run_dir(const std::string& id) const { return root_ / "runs" / id; }

Store::RunRecord Store::create_run(const json& config, const fs::path& manifest, std::size_t subset) {
  RunRecord r;
  {
    std::lock_guard guard(registry_mutex_);
    r.id = next_id(root_ / "runs", "run");
    fs::create_directories(run_dir(r.id));
  }
  r.status = "running";
  r.config = config;
  r.manifest = fs::absolute(manifest).string();
  r.manifest_sha256 = sha256_file(manifest);
  r.subset = subset;
  r.folds_path = "folds.jsonl";
  r.report_path = "report.json";
  r.created = utc_timestamp();
  save_run(r);
  return r;
}

void Store::save_run(const RunRecord& r) { write_json(run_dir(r.id) / "run.json", run_to_json(r)); }

std::optional<Store::RunRecord> Store::run(const std::string& id) const {
  if (!valid_id(id)) return std::nullopt;
  const fs::path p = run_dir(id) / "run.json";
  if (!fs::exists(p)) return std::nullopt;
  RunRecord r = run_from_json(read_json(p));
  if (r.status == "done") {
    for (const auto& [file, sha] : {std::pair{r.folds_path, r.folds_sha256}, std::pair{r.report_path, r.report_sha256}}) {
      const fs::path f = run_dir(id) / file;
      if (!fs::exists(f)) throw IoError("run " + id + ": missing " + file);
      if (sha256_file(f) != sha) throw IoError("run " + id + ": checksum mismatch for " + file);
    }
  }
  return r;
}

std::vector<Store::RunRecord> Store::runs() const {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root_ / "runs")) {
    if (e.is_directory() && fs::exists(e.path() / "run.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<RunRecord> out;
  for (const auto& id : ids) out.push_back(*run(id));
  return out;
}

}  // namespace masksizer
