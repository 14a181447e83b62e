#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mivit/tensor.hpp"

namespace mivit {

// One sensor's raster, h x w x bands, band-fastest storage.
struct ModalRaster {
  int h = 0, w = 0, bands = 0;
  std::vector<float> data;

  float at(int r, int c, int b) const {
    return data[(static_cast<size_t>(r) * w + static_cast<size_t>(c)) * bands + static_cast<size_t>(b)];
  }
  float& at(int r, int c, int b) {
    return data[(static_cast<size_t>(r) * w + static_cast<size_t>(c)) * bands + static_cast<size_t>(b)];
  }
};

// Per-pixel class ids, -1 = unlabeled.
struct LabelRaster {
  int h = 0, w = 0;
  std::vector<int32_t> data;

  int32_t at(int r, int c) const { return data[static_cast<size_t>(r) * w + c]; }
};

struct Dataset {
  std::vector<ModalRaster> modalities;
  LabelRaster labels;

  int num_classes() const;
};

struct SampleSet {
  std::vector<std::pair<int, int>> centers;  // (row, col)
  std::vector<int> labels;
  std::vector<int> cube_sizes;
  std::string split;  // "train" | "test"

  size_t size() const { return centers.size(); }
};

// ---- MMRS container (bit-exact, little-endian) ----
//   "MMRS" | u16 version | u16 modality count
//   per modality: u32 h, u32 w, u32 bands
//   per modality: f32 plane data (h*w*bands, band-fastest)
//   label plane: i32 h*w of modality 0 (-1 = unlabeled)
Dataset load_mmrs(const std::string& path);
void save_mmrs(const std::string& path, const Dataset& ds);

// Contextual cube around `center`, one per requested size. Each cube is a
// [bands, size, size] tensor; out-of-bounds pixels are mirrored back into
// the raster (edge-inclusive reflection).
std::vector<Tensor> extract_cubes(const ModalRaster& raster, std::pair<int, int> center,
                                  const std::vector<int>& sizes);

// Batched form: [B, bands, size, size] for the selected sample indices.
Tensor assemble_cubes(const ModalRaster& raster, const SampleSet& samples,
                      const std::vector<int>& index, int size);

struct SynthConfig {
  uint64_t seed = 0;
  int classes = 4;
  int h = 64, w = 64;
  int bands1 = 16, bands2 = 1;
  float noise = 0.1f;
  int blobs_per_class = 3;
};

// Two-modality synthetic scene. Class layout is a Voronoi partition of
// random sites; modality 1 carries a per-class spectral signature, modality
// 2 a per-class elevation level, each plus N(0, noise^2). Signature groups
// are chosen so neither modality alone separates every class but the pair
// does.
Dataset synth_generate(const SynthConfig& cfg);

// Per-class split: exactly `per_class_train` pixels per class go to train,
// the rest to test; unlabeled pixels (-1) are excluded from both.
std::pair<SampleSet, SampleSet> split_samples(const LabelRaster& labels, int per_class_train,
                                              uint64_t seed);

// Per-band min-max normalization to [0,1] over the whole raster.
void normalize_minmax(ModalRaster& raster);

uint64_t fnv1a64(const void* data, size_t len);
uint64_t hash_file(const std::string& path);

}  // namespace mivit
