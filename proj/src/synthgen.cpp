#include "masksizer/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "masksizer/checksum.hpp"
#include "masksizer/errors.hpp"
#include "masksizer/rng.hpp"

namespace masksizer {

void SynthParams::validate(const SizeChart& chart) const {
  if (count < 0) throw ArgumentError("count must be >= 0");
  if (image_w < 16 || image_h < 16) throw ArgumentError("image must be at least 16x16");
  if (!(alar_min_mm > 0.0 && alar_max_mm > alar_min_mm)) throw ArgumentError("alar range must be positive and non-empty");
  if (!(scale_min > 0.0 && scale_max >= scale_min)) throw ArgumentError("scale range must be positive and non-empty");
  if (!(box_mm > alar_max_mm)) throw ArgumentError("nose box must be wider than the widest nose");
  if (!(box_jitter >= 0.0 && tilt_deg >= 0.0 && shading >= 0.0 && noise >= 0.0)) {
    throw ArgumentError("jitter, shading and noise must be non-negative");
  }
  if (classify_index(alar_min_mm, chart) == classify_index(alar_max_mm, chart)) {
    throw ArgumentError("alar range must span at least two chart sizes");
  }
}

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct SampleLayout {
  double alar_mm;
  double scale;
  Point centre;       // midpoint of the nasal walls
  double cos_t, sin_t;
  Point left, right;
  Point coin_centre;
  double coin_r;
  RectRegion nose_box;
};

SampleLayout draw_layout(const SynthParams& p, Rng& rng, const std::string& id) {
  SampleLayout L{};
  L.alar_mm = rng.uniform(p.alar_min_mm, p.alar_max_mm);
  L.scale = rng.uniform(p.scale_min, p.scale_max);
  L.coin_r = 0.5 * kCoinDiameterMm * L.scale;

  const int box_w = static_cast<int>(std::lround(p.box_mm * L.scale));
  const int box_h = static_cast<int>(std::lround(0.75 * p.box_mm * L.scale));
  constexpr double kMargin = 8.0;
  const double coin_bottom = kMargin + 2.0 * L.coin_r;
  const double y_lo = std::ceil(coin_bottom + kMargin);
  const double y_hi = p.image_h - box_h - kMargin;
  const double x_hi = p.image_w - box_w - kMargin;
  if (y_hi < y_lo || x_hi < kMargin || 2.0 * L.coin_r + 2 * kMargin > p.image_w) {
    throw GeometryError("sample " + id + ": coin and nose box do not fit in a " + std::to_string(p.image_w) + "x" +
                        std::to_string(p.image_h) + " image at " + std::to_string(L.scale) + " px/mm");
  }
  const int x0 = static_cast<int>(std::floor(rng.uniform(kMargin, x_hi)));
  const int y0 = static_cast<int>(std::floor(rng.uniform(y_lo, y_hi)));
  L.nose_box = {x0, y0, box_w, box_h};

  L.coin_centre = {rng.uniform(kMargin + L.coin_r, p.image_w - kMargin - L.coin_r), kMargin + L.coin_r};

  L.centre = {x0 + box_w * (0.5 + rng.uniform(-p.box_jitter, p.box_jitter)),
              y0 + box_h * (0.5 + rng.uniform(-p.box_jitter, p.box_jitter))};
  const double tilt = rng.uniform(-p.tilt_deg, p.tilt_deg) * std::numbers::pi / 180.0;
  L.cos_t = std::cos(tilt);
  L.sin_t = std::sin(tilt);
  const double half = 0.5 * L.alar_mm * L.scale;
  L.left = {L.centre.x - half * L.cos_t, L.centre.y - half * L.sin_t};
  L.right = {L.centre.x + half * L.cos_t, L.centre.y + half * L.sin_t};
  if (!L.nose_box.contains(L.left) || !L.nose_box.contains(L.right)) {
    throw GeometryError("sample " + id + ": landmarks fall outside the nose box");
  }
  return L;
}

GrayImage render(const SynthParams& p, const SampleLayout& L, Rng& rng) {
  const double s = L.scale;
  const double half = 0.5 * L.alar_mm * s;
  const double wall_sigma = 2.5 * s;      // dark alar crease
  const double edge = 1.5 * s;            // softness of the nose body outline
  const double body_half_h = 0.35 * L.alar_mm * s;
  const double nostril_rx = 0.22 * half;
  const double nostril_ry = 0.12 * half;
  const double nostril_v = 0.25 * half;
  const double skin_tilt = rng.uniform(-1.0, 1.0) * p.shading;
  const double skin_base = rng.uniform(110.0, 140.0);
  const double body_gain = rng.uniform(30.0, 45.0);
  const double wall_depth = rng.uniform(70.0, 95.0);

  GrayImage img(p.image_w, p.image_h);
  for (int y = 0; y < p.image_h; ++y) {
    for (int x = 0; x < p.image_w; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      double v = skin_base + skin_tilt * (px / p.image_w - 0.5);

      // Nose-aligned coordinates: u along the wall axis, w perpendicular.
      const double dx = px - L.centre.x;
      const double dy = py - L.centre.y;
      const double u = dx * L.cos_t + dy * L.sin_t;
      const double w = -dx * L.sin_t + dy * L.cos_t;
      if (std::abs(u) < half + 8.0 * wall_sigma && std::abs(w) < body_half_h + 8.0 * wall_sigma) {
        v += body_gain * sigmoid((half - std::abs(u)) / edge) * sigmoid((body_half_h - std::abs(w)) / edge);
        const double dl = (u + half) * (u + half) + w * w;
        const double dr = (u - half) * (u - half) + w * w;
        v -= wall_depth * (std::exp(-dl / (2 * wall_sigma * wall_sigma)) + std::exp(-dr / (2 * wall_sigma * wall_sigma)));
        for (double side : {-1.0, 1.0}) {
          const double nu = (u - side * 0.5 * half) / nostril_rx;
          const double nw = (w - nostril_v) / nostril_ry;
          v -= 50.0 * sigmoid((1.0 - std::sqrt(nu * nu + nw * nw)) * 4.0);
        }
      }

      const double dc = std::hypot(px - L.coin_centre.x, py - L.coin_centre.y);
      const double coverage = std::clamp(L.coin_r - dc + 0.5, 0.0, 1.0);
      v = v * (1.0 - coverage) + 225.0 * coverage;

      v += rng.uniform(-p.noise, p.noise);
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return img;
}

}  // namespace

Corpus generate(const SynthParams& params, const SizeChart& chart) {
  params.validate(chart);
  Corpus corpus;
  for (int i = 0; i < params.count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%04d", i);
    Rng rng(params.seed + static_cast<std::uint64_t>(i));
    const SampleLayout L = draw_layout(params, rng, id);

    SampleRecord rec;
    rec.id = id;
    rec.image_ref = std::string("images/") + id + ".pgm";
    rec.image_path = rec.image_ref;
    rec.annotation.landmarks = Landmarks{L.left, L.right};
    rec.annotation.scale = CoinEndpoints{{L.coin_centre.x - L.coin_r, L.coin_centre.y},
                                         {L.coin_centre.x + L.coin_r, L.coin_centre.y}};
    rec.annotation.face_box = RectRegion{0, 0, params.image_w, params.image_h};
    rec.annotation.nose_box = L.nose_box;
    rec.caliper_alar_mm = L.alar_mm;
    rec.ground_truth_size = classify(L.alar_mm, chart);
    rec.meta = {{"synthetic", true}, {"px_per_mm", L.scale}};
    validate_annotation(rec.annotation, Completeness::complete, std::pair{params.image_w, params.image_h}, id);

    corpus.images.push_back(render(params, L, rng));
    corpus.manifest.push_back(std::move(rec));
    corpus.truth.push_back({L.alar_mm, L.scale});
  }
  return corpus;
}

Corpus generate(const SynthParams& params) { return generate(params, SizeChart::eson()); }

std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto manifest_path = dir / "manifest.jsonl";
  if (corpus.manifest.empty()) {
    write_file_text(manifest_path, "");
    return manifest_path;
  }
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    write_file_bytes(dir / corpus.manifest[i].image_ref, save_pgm(corpus.images[i]));
  }
  write_manifest(manifest_path, corpus.manifest);
  return manifest_path;
}

CorpusDifficulty corpus_difficulty(const std::vector<SampleRecord>& manifest, const SizeChart& chart) {
  CorpusDifficulty d;
  for (const auto& s : chart.sizes()) d.per_size[s.name] = 0;
  int in_band = 0;
  for (const auto& rec : manifest) {
    if (!rec.caliper_alar_mm) continue;
    ++d.samples;
    ++d.per_size[classify(*rec.caliper_alar_mm, chart)];
    if (!bands_containing(*rec.caliper_alar_mm, chart).empty()) ++in_band;
  }
  d.band_fraction = d.samples ? static_cast<double>(in_band) / d.samples : 0.0;
  return d;
}

}  // namespace masksizer
