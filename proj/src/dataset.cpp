#include "masksizer/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"
#include "masksizer/sizing.hpp"

namespace masksizer {

using nlohmann::json;

namespace {

Point point_from_json(const json& j, const std::string& field, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(field, "expected [x, y]", where);
  }
  const Point p{j[0].get<double>(), j[1].get<double>()};
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw ValidationError(field, "coordinates must be finite", where);
  }
  return p;
}

json point_to_json(const Point& p) { return json::array({p.x, p.y}); }

RectRegion rect_from_json(const json& j, const std::string& field, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    throw ValidationError(field, "expected [x, y, w, h]", where);
  }
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ValidationError(field, "box values must be integers", where);
  }
  RectRegion r{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (r.w < 1 || r.h < 1) throw ValidationError(field, "box width and height must be >= 1", where);
  if (r.x0 < 0 || r.y0 < 0) throw ValidationError(field, "box origin must be non-negative", where);
  return r;
}

json rect_to_json(const RectRegion& r) { return json::array({r.x0, r.y0, r.w, r.h}); }

bool box_inside(const RectRegion& inner, const RectRegion& outer) {
  return inner.x0 >= outer.x0 && inner.y0 >= outer.y0 && inner.x0 + inner.w <= outer.x0 + outer.w &&
         inner.y0 + inner.h <= outer.y0 + outer.h;
}

}  // namespace

void validate_annotation(const Annotation& a, Completeness level,
                         std::optional<std::pair<int, int>> image_dims, const std::string& where) {
  const bool complete = level == Completeness::complete;
  if (complete) {
    if (!a.landmarks) throw ValidationError("landmarks", "required", where);
    if (!a.scale) throw ValidationError("coin", "required", where);
    if (!a.face_box) throw ValidationError("face_box", "required", where);
    if (!a.nose_box) throw ValidationError("nose_box", "required", where);
  }
  if (a.landmarks && a.landmarks->left == a.landmarks->right) {
    throw ValidationError("landmarks", "left and right nasal walls must be distinct", where);
  }
  if (a.scale) {
    if (const auto* coin = std::get_if<CoinEndpoints>(&*a.scale)) {
      if (coin->p1 == coin->p2) throw ValidationError("coin", "coin endpoints must be distinct", where);
    } else {
      const double s = std::get<DirectScale>(*a.scale).px_per_mm;
      if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("coin", "px_per_mm must be > 0", where);
    }
  }
  for (const auto& [box, name] : {std::pair{&a.face_box, "face_box"}, std::pair{&a.nose_box, "nose_box"}}) {
    if (*box && ((*box)->w < 1 || (*box)->h < 1)) {
      throw ValidationError(name, "box width and height must be >= 1", where);
    }
    if (*box && image_dims && !(*box)->fits_in(image_dims->first, image_dims->second)) {
      throw ValidationError(name, "box lies outside the image", where);
    }
  }
  if (a.face_box && a.nose_box && !box_inside(*a.nose_box, *a.face_box)) {
    throw ValidationError("nose_box", "must lie inside face_box", where);
  }
}

Annotation annotation_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError("annotation", "expected a JSON object", where);
  Annotation a;
  if (auto it = j.find("landmarks"); it != j.end() && !it->is_null()) {
    if (!it->is_object() || !it->contains("left") || !it->contains("right")) {
      throw ValidationError("landmarks", "expected {\"left\": [x,y], \"right\": [x,y]}", where);
    }
    a.landmarks = Landmarks{point_from_json(it->at("left"), "landmarks.left", where),
                            point_from_json(it->at("right"), "landmarks.right", where)};
  }
  if (auto it = j.find("coin"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError("coin", "expected an object", where);
    const bool has_points = it->contains("p1") || it->contains("p2");
    const bool has_direct = it->contains("px_per_mm");
    if (has_points && has_direct) {
      throw ValidationError("coin", "exactly one of endpoints or px_per_mm may be given", where);
    }
    if (has_points) {
      if (!it->contains("p1") || !it->contains("p2")) {
        throw ValidationError("coin", "both p1 and p2 are required", where);
      }
      a.scale = CoinEndpoints{point_from_json(it->at("p1"), "coin.p1", where),
                              point_from_json(it->at("p2"), "coin.p2", where)};
    } else if (has_direct) {
      if (!it->at("px_per_mm").is_number()) throw ValidationError("coin.px_per_mm", "expected a number", where);
      a.scale = DirectScale{it->at("px_per_mm").get<double>()};
    } else {
      throw ValidationError("coin", "expected p1/p2 or px_per_mm", where);
    }
  }
  if (auto it = j.find("face_box"); it != j.end() && !it->is_null()) {
    a.face_box = rect_from_json(*it, "face_box", where);
  }
  if (auto it = j.find("nose_box"); it != j.end() && !it->is_null()) {
    a.nose_box = rect_from_json(*it, "nose_box", where);
  }
  return a;
}

json annotation_to_json(const Annotation& a) {
  json j = json::object();
  if (a.landmarks) {
    j["landmarks"] = {{"left", point_to_json(a.landmarks->left)}, {"right", point_to_json(a.landmarks->right)}};
  }
  if (a.scale) {
    if (const auto* coin = std::get_if<CoinEndpoints>(&*a.scale)) {
      j["coin"] = {{"p1", point_to_json(coin->p1)}, {"p2", point_to_json(coin->p2)}};
    } else {
      j["coin"] = {{"px_per_mm", std::get<DirectScale>(*a.scale).px_per_mm}};
    }
  }
  if (a.face_box) j["face_box"] = rect_to_json(*a.face_box);
  if (a.nose_box) j["nose_box"] = rect_to_json(*a.nose_box);
  return j;
}

double scale_px_per_mm(const ScaleSource& s) {
  if (const auto* coin = std::get_if<CoinEndpoints>(&s)) {
    return distance(coin->p1, coin->p2) / kCoinDiameterMm;
  }
  return std::get<DirectScale>(s).px_per_mm;
}

double scale_px_per_mm(const Annotation& a) {
  if (!a.scale) throw ValidationError("coin", "no scale annotated");
  return scale_px_per_mm(*a.scale);
}

SampleRecord sample_from_json(const json& j, const std::filesystem::path& base_dir, const SizeChart& chart,
                              const std::string& where, std::vector<std::string>* warnings) {
  static const std::set<std::string> kKnown = {"id",       "image",  "landmarks", "coin", "face_box",
                                               "nose_box", "alar_mm", "size",      "meta"};
  if (!j.is_object()) throw ValidationError("sample", "expected a JSON object", where);
  if (warnings) {
    for (const auto& [key, value] : j.items()) {
      if (!kKnown.contains(key)) warnings->push_back(where + ": unknown field '" + key + "' ignored");
    }
  }
  SampleRecord s;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
    throw ValidationError("id", "required non-empty string", where);
  }
  s.id = j["id"].get<std::string>();
  if (!j.contains("image") || !j["image"].is_string()) {
    throw ValidationError("image", "required string", where);
  }
  s.image_ref = j["image"].get<std::string>();
  s.image_path = base_dir / s.image_ref;
  s.annotation = annotation_from_json(j, where);
  validate_annotation(s.annotation, Completeness::complete, std::nullopt, where);

  if (auto it = j.find("alar_mm"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw ValidationError("alar_mm", "expected a number", where);
    const double alar = it->get<double>();
    if (!(alar > 10.0 && alar < 80.0)) throw ValidationError("alar_mm", "must lie in (10, 80) mm", where);
    s.caliper_alar_mm = alar;
  }
  if (auto it = j.find("size"); it != j.end() && !it->is_null()) {
    if (!it->is_string() || !chart.contains(it->get<std::string>())) {
      throw ValidationError("size", "not a size of the active chart", where);
    }
    s.ground_truth_size = it->get<std::string>();
    if (s.caliper_alar_mm && classify(*s.caliper_alar_mm, chart) != *s.ground_truth_size) {
      throw ValidationError("size", "inconsistent with alar_mm under the size chart", where);
    }
  }
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError("meta", "expected an object", where);
    s.meta = *it;
  }
  return s;
}

json sample_to_json(const SampleRecord& s) {
  json j = {{"id", s.id}, {"image", s.image_ref}};
  j.update(annotation_to_json(s.annotation));
  if (s.caliper_alar_mm) j["alar_mm"] = *s.caliper_alar_mm;
  if (s.ground_truth_size) j["size"] = *s.ground_truth_size;
  if (!s.meta.empty()) j["meta"] = s.meta;
  return j;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path, const SizeChart& chart,
                                        std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base_dir = path.parent_path();
  std::vector<SampleRecord> out;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("line", std::string("invalid JSON: ") + e.what(), where);
    }
    auto record = sample_from_json(j, base_dir, chart, where, warnings);
    if (!seen.insert(record.id).second) throw ValidationError("id", "duplicate id '" + record.id + "'", where);
    if (!std::filesystem::exists(record.image_path)) {
      throw IoError(where + ": image not found: " + record.image_path.string());
    }
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  return load_manifest(path, SizeChart::eson());
}

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& samples) {
  std::string text;
  for (const auto& s : samples) text += sample_to_json(s).dump() + "\n";
  write_file_text(path, text);
}

std::pair<GrayImage, TransformChain> extract_nose_crop(const GrayImage& original, const Annotation& a,
                                                       int crop_w, int crop_h) {
  if (!a.nose_box) throw ValidationError("nose_box", "required");
  TransformChain chain;
  GrayImage stage = original;
  RectRegion nose = *a.nose_box;
  if (a.face_box) {
    auto [face, face_crop] = crop(original, *a.face_box);
    auto [face_sized, face_resize] = resize_bilinear(face, kFaceSize, kFaceSize);
    chain.push(face_crop);
    chain.push(face_resize);
    // Nose box corners rounded to the nearest face-space pixel edge.
    const Point tl = chain.forward({static_cast<double>(nose.x0), static_cast<double>(nose.y0)});
    const Point br = chain.forward({static_cast<double>(nose.x0 + nose.w), static_cast<double>(nose.y0 + nose.h)});
    const int x0 = static_cast<int>(std::lround(tl.x));
    const int y0 = static_cast<int>(std::lround(tl.y));
    nose = RectRegion{x0, y0, std::max(1, static_cast<int>(std::lround(br.x)) - x0),
                      std::max(1, static_cast<int>(std::lround(br.y)) - y0)};
    stage = std::move(face_sized);
  }
  auto [nose_img, nose_crop] = crop(stage, nose);
  auto [sized, nose_resize] = resize_bilinear(nose_img, crop_w, crop_h);
  chain.push(nose_crop);
  chain.push(nose_resize);
  return {std::move(sized), std::move(chain)};
}

PreparedSample prepare_sample(const SampleRecord& s, int crop_w, int crop_h) {
  if (!s.annotation.landmarks) throw ValidationError("landmarks", "required", s.id);
  const GrayImage original = load_image(s.image_path);
  validate_annotation(s.annotation, Completeness::complete, std::pair{original.width(), original.height()}, s.id);
  auto [img, chain] = extract_nose_crop(original, s.annotation, crop_w, crop_h);

  PreparedSample out;
  out.id = s.id;
  out.pixels.resize(static_cast<Eigen::Index>(img.pixels().size()));
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    out.pixels[static_cast<Eigen::Index>(i)] = img.pixels()[i];
  }
  const Point l = chain.forward(s.annotation.landmarks->left);
  const Point r = chain.forward(s.annotation.landmarks->right);
  const RectRegion frame{0, 0, crop_w, crop_h};
  if (!frame.contains(l) || !frame.contains(r)) {
    throw GeometryError("landmark falls outside nose_box");
  }
  out.target = {l.x, l.y, r.x, r.y};
  out.chain = std::move(chain);
  return out;
}

PreparedSet prepare_samples(const std::vector<SampleRecord>& records, int crop_w, int crop_h) {
  PreparedSet set;
  set.crop_w = crop_w;
  set.crop_h = crop_h;
  for (const auto& r : records) {
    try {
      set.samples.push_back(prepare_sample(r, crop_w, crop_h));
    } catch (const Error& e) {
      set.excluded.push_back({r.id, e.what()});
    }
  }
  return set;
}

NormStats compute_norm_stats(std::span<const PreparedSample* const> samples) {
  if (samples.empty()) throw ArgumentError("normalization needs at least one sample");
  NormStats st;
  double x_max = 0.0;
  double y_max = 0.0;
  for (const auto* s : samples) {
    x_max = std::max(x_max, s->pixels.maxCoeff());
    for (double v : s->target) y_max = std::max(y_max, v);
  }
  if (!(x_max > 0.0)) throw NumericError("all input pixels are zero; cannot normalize");
  if (!(y_max > 0.0)) throw NumericError("all target coordinates are zero; cannot normalize");
  double x_sum = 0.0;
  double y_sum = 0.0;
  std::size_t x_count = 0;
  for (const auto* s : samples) {
    x_sum += (s->pixels.array() / x_max).sum();
    x_count += static_cast<std::size_t>(s->pixels.size());
    for (double v : s->target) y_sum += v / y_max;
  }
  st.x_max = x_max;
  st.x_mean = x_sum / static_cast<double>(x_count);
  st.y_max = y_max;
  st.y_mean = y_sum / static_cast<double>(4 * samples.size());
  return st;
}

Eigen::VectorXd normalize_inputs(const Eigen::VectorXd& raw, const NormStats& stats) {
  return (raw.array() / stats.x_max - stats.x_mean).matrix();
}

std::array<double, 4> normalize_targets(const std::array<double, 4>& y, const NormStats& stats) {
  std::array<double, 4> out{};
  for (std::size_t k = 0; k < 4; ++k) out[k] = y[k] / stats.y_max - stats.y_mean;
  return out;
}

std::array<double, 4> denormalize_targets(const std::array<double, 4>& y_norm, const NormStats& stats) {
  std::array<double, 4> out{};
  for (std::size_t k = 0; k < 4; ++k) out[k] = (y_norm[k] + stats.y_mean) * stats.y_max;
  return out;
}

DesignMatrix assemble_design_matrix(std::span<const PreparedSample* const> samples, const NormStats& stats,
                                    int crop_w, int crop_h) {
  const Eigen::Index n_in = static_cast<Eigen::Index>(crop_w) * crop_h;
  DesignMatrix m;
  m.crop_w = crop_w;
  m.crop_h = crop_h;
  m.inputs.resize(static_cast<Eigen::Index>(samples.size()), n_in);
  m.targets.resize(static_cast<Eigen::Index>(samples.size()), 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    if (s.pixels.size() != n_in) throw ShapeError("sample " + s.id + " does not match the crop dimensions");
    const auto row = static_cast<Eigen::Index>(i);
    m.inputs.row(row) = normalize_inputs(s.pixels, stats).transpose();
    const auto t = normalize_targets(s.target, stats);
    for (Eigen::Index k = 0; k < 4; ++k) m.targets(row, k) = t[static_cast<std::size_t>(k)];
    m.ids.push_back(s.id);
  }
  return m;
}

std::string DesignMatrix::checksum() const {
  std::vector<std::uint8_t> buf;
  auto put_u64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  auto put_matrix = [&](const RowMatrix& mat) {
    put_u64(static_cast<std::uint64_t>(mat.rows()));
    put_u64(static_cast<std::uint64_t>(mat.cols()));
    for (Eigen::Index i = 0; i < mat.size(); ++i) put_u64(std::bit_cast<std::uint64_t>(mat.data()[i]));
  };
  for (const auto& id : ids) {
    buf.insert(buf.end(), id.begin(), id.end());
    buf.push_back(0);
  }
  put_matrix(inputs);
  put_matrix(targets);
  return sha256_hex(std::span<const std::uint8_t>(buf));
}

DesignBuild build_design_matrix(const std::vector<SampleRecord>& samples, int crop_w, int crop_h) {
  auto prepared = prepare_samples(samples, crop_w, crop_h);
  if (prepared.samples.empty()) throw ArgumentError("no usable samples to build a design matrix");
  std::vector<const PreparedSample*> ptrs;
  for (const auto& s : prepared.samples) ptrs.push_back(&s);
  DesignBuild b;
  b.stats = compute_norm_stats(ptrs);
  b.matrix = assemble_design_matrix(ptrs, b.stats, crop_w, crop_h);
  for (auto& s : prepared.samples) b.chains.push_back(std::move(s.chain));
  b.excluded = std::move(prepared.excluded);
  return b;
}

}  // namespace masksizer
