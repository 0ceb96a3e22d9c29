#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "masksizer/errors.hpp"
#include "masksizer/sizing.hpp"
#include "masksizer/synthgen.hpp"

using namespace masksizer;

namespace {

SynthParams small(int count, std::uint64_t seed = 1) {
  SynthParams p;
  p.seed = seed;
  p.count = count;
  return p;
}

}  // namespace

TEST_CASE("generation is seeded and order independent") {
  const Corpus a = generate(small(6, 4));
  const Corpus b = generate(small(6, 4));
  const Corpus c = generate(small(3, 4));
  REQUIRE(a.images.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a.images[i] == b.images[i]);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.images[i] == c.images[i]);
    CHECK(sample_to_json(a.manifest[i]) == sample_to_json(c.manifest[i]));
  }
  CHECK_FALSE(generate(small(1, 5)).images[0] == a.images[0]);
}

TEST_CASE("recorded geometry matches the drawn truth") {
  const SizeChart chart = SizeChart::eson();
  const Corpus corpus = generate(small(40, 9), chart);
  for (std::size_t i = 0; i < corpus.manifest.size(); ++i) {
    const auto& rec = corpus.manifest[i];
    const auto& truth = corpus.truth[i];
    const double scale = scale_px_per_mm(rec.annotation);
    CHECK(std::abs(scale - truth.px_per_mm) <= 0.005 * truth.px_per_mm);
    const double w = width_mm(rec.annotation.landmarks->left, rec.annotation.landmarks->right, scale);
    CHECK(std::abs(w - truth.alar_mm) <= 0.05);
    CHECK(*rec.caliper_alar_mm == truth.alar_mm);
    CHECK(*rec.ground_truth_size == classify(truth.alar_mm, chart));
    CHECK(rec.annotation.nose_box->contains(rec.annotation.landmarks->left));
    CHECK(rec.annotation.nose_box->contains(rec.annotation.landmarks->right));
    CHECK_NOTHROW(validate_annotation(rec.annotation, Completeness::complete,
                                      std::pair{corpus.images[i].width(), corpus.images[i].height()}));
  }
}

TEST_CASE("walls are darker than the surrounding skin") {
  SynthParams p = small(5, 3);
  p.noise = 0.0;
  const Corpus corpus = generate(p);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const auto& img = corpus.images[i];
    const auto& lm = *corpus.manifest[i].annotation.landmarks;
    const auto& box = *corpus.manifest[i].annotation.nose_box;
    const int lx = static_cast<int>(lm.left.x);
    const int ly = static_cast<int>(lm.left.y);
    CHECK(img.at(lx, ly) < img.at(box.x0 + 1, box.y0 + 1));
  }
}

TEST_CASE("the coin is a bright disc of the right diameter") {
  SynthParams p = small(3, 6);
  p.noise = 0.0;
  const Corpus corpus = generate(p);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const auto& coin = std::get<CoinEndpoints>(*corpus.manifest[i].annotation.scale);
    const int y = static_cast<int>(coin.p1.y);
    const int cx = static_cast<int>((coin.p1.x + coin.p2.x) / 2);
    CHECK(corpus.images[i].at(cx, y) >= 200);
    CHECK(distance(coin.p1, coin.p2) == doctest::Approx(kCoinDiameterMm * corpus.truth[i].px_per_mm));
  }
}

TEST_CASE("wide alar range covers every size") {
  const SizeChart chart = SizeChart::eson();
  const Corpus corpus = generate(small(200, 11), chart);
  const CorpusDifficulty d = corpus_difficulty(corpus.manifest, chart);
  CHECK(d.samples == 200);
  for (const auto& s : chart.sizes()) CHECK(d.per_size.at(s.name) > 0);
  CHECK(d.band_fraction > 0.0);
  CHECK(d.band_fraction < 1.0);
}

TEST_CASE("parameter validation") {
  const SizeChart chart = SizeChart::eson();
  SynthParams p = small(5);
  p.alar_min_mm = 38.0;
  p.alar_max_mm = 40.0;
  CHECK_THROWS_AS(p.validate(chart), ArgumentError);
  p = small(-1);
  CHECK_THROWS_AS(p.validate(chart), ArgumentError);
  p = small(5);
  p.scale_min = 0.0;
  CHECK_THROWS_AS(p.validate(chart), ArgumentError);
  p = small(2);
  p.scale_min = p.scale_max = 20.0;
  CHECK_THROWS_AS(generate(p, chart), GeometryError);
}

TEST_CASE("corpus files load as a manifest") {
  testing::TempDir dir("synth");
  const Corpus corpus = generate(small(4, 2));
  const auto manifest = write_corpus(corpus, dir.path());
  const auto records = load_manifest(manifest);
  REQUIRE(records.size() == 4);
  CHECK(records[2].id == "syn-0002");
  CHECK(load_image(records[2].image_path) == corpus.images[2]);
  const ManualBaseline manual = manual_baseline(records, SizeChart::eson());
  for (const auto& o : manual.outcomes) CHECK(o.correct_with_tolerance);
}

TEST_CASE("empty corpus writes an empty manifest") {
  testing::TempDir dir("empty");
  const auto manifest = write_corpus(generate(small(0)), dir.path());
  CHECK(std::filesystem::exists(manifest));
  CHECK(std::filesystem::file_size(manifest) == 0);
  CHECK(load_manifest(manifest).empty());
}
