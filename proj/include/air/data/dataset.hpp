// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "air/data/image.hpp"

namespace air::data {

struct DatasetConfig {
  int corpus_size = 64;  // source images
  int image_size = 96;   // side of each synthesized source image
  int crop = 32;         // LQ crop side; the HQ crop is crop·scale
  int batch = 8;
  std::uint64_t seed = 0;
};

struct Batch {
  Tensor lq;  // N×3×crop×crop
  Tensor hq;  // N×3×(crop·s)×(crop·s)
};

/// Random-crop training stream over a procedural corpus. Crop positions,
/// order and noise are pure functions of (seed, epoch, position), so any
/// batch can be regenerated independently.
class Dataset {
 public:
  Dataset(const DatasetConfig& config, const DegradationSpec& spec);

  int batches_per_epoch() const;
  /// Sample order for an epoch: a permutation reshuffled per epoch.
  std::vector<std::size_t> order(int epoch) const;
  Batch batch(int epoch, int index, DType dtype = DType::f32) const;

  const DatasetConfig& config() const { return config_; }
  const DegradationSpec& spec() const { return spec_; }
  const std::vector<Image>& corpus() const { return corpus_; }

 private:
  DatasetConfig config_;
  DegradationSpec spec_;
  std::vector<Image> corpus_;
};

/// Fixed evaluation pairs: `count` images whose synthesis seeds lie in a range
/// disjoint from every training corpus, each of HQ side crop·scale.
std::vector<std::pair<Image, Image>> held_out_set(const DegradationSpec& spec, int count, int crop,
                                                  std::uint64_t seed);

}  // namespace air::data
