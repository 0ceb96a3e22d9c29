#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "masksizer/dataset.hpp"
#include "masksizer/imaging.hpp"
#include "masksizer/sizing.hpp"

namespace masksizer {

/// Procedural nose corpus. Every sample gets a coin of exactly
/// 28.65 mm * scale pixels and two dark lateral-wall blobs alar_mm * scale
/// pixels apart inside a nose box of fixed physical size.
struct SynthParams {
  std::uint64_t seed = 1;
  int count = 200;
  int image_w = kFaceSize;
  int image_h = kFaceSize;
  double alar_min_mm = 30.0;
  double alar_max_mm = 50.0;
  double scale_min = 2.0;  // px/mm
  double scale_max = 6.0;
  double box_mm = 64.0;        // nose box width; height is 3/4 of it
  double box_jitter = 0.05;    // nose centre offset inside the box, fraction of box size
  double tilt_deg = 3.0;       // max rotation of the wall pair
  double shading = 40.0;       // horizontal skin gradient amplitude
  double noise = 8.0;          // uniform additive noise amplitude, intensity units

  void validate(const SizeChart& chart) const;
};

struct SynthTruth {
  double alar_mm = 0.0;
  double px_per_mm = 0.0;
};

struct Corpus {
  std::vector<GrayImage> images;
  std::vector<SampleRecord> manifest;  // image refs are "images/<id>.pgm"
  std::vector<SynthTruth> truth;
};

Corpus generate(const SynthParams& params, const SizeChart& chart);
Corpus generate(const SynthParams& params);

/// Writes images/ and manifest.jsonl under `dir`; returns the manifest path.
std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct CorpusDifficulty {
  std::map<std::string, int> per_size;  // every chart size, zero counts included
  double band_fraction = 0.0;           // share of widths inside any tolerance band
  int samples = 0;
};

CorpusDifficulty corpus_difficulty(const std::vector<SampleRecord>& manifest, const SizeChart& chart);

}  // namespace masksizer
