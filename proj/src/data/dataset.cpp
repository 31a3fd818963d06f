// SPDX-License-Identifier: Apache-2.0
#include "air/data/dataset.hpp"

#include "air/common/rng.hpp"

namespace air::data {
namespace {

// Training sources take corpus indices below this bound, held-out images
// the indices above it, so the two seed sets never meet.
constexpr std::uint64_t kHeldOutBase = std::uint64_t{1} << 32;

}  // namespace

Dataset::Dataset(const DatasetConfig& config, const DegradationSpec& spec) : config_(config), spec_(spec) {
  spec_.validate();
  const int hq = config.crop * spec.output_scale();
  if (config.corpus_size < 1 || config.batch < 1 || config.crop < 1) {
    throw ConfigError("dataset: corpus_size, batch and crop must be positive");
  }
  if (config.batch > config.corpus_size) {
    throw ConfigError("dataset: batch " + std::to_string(config.batch) + " exceeds corpus size " +
                      std::to_string(config.corpus_size));
  }
  if (hq > config.image_size) {
    throw ConfigError("dataset: HQ crop " + std::to_string(hq) + " exceeds source size " +
                      std::to_string(config.image_size));
  }
  corpus_.reserve(static_cast<std::size_t>(config.corpus_size));
  for (int i = 0; i < config.corpus_size; ++i) {
    corpus_.push_back(synth_image(derive_seed(config.seed, "corpus", static_cast<std::uint64_t>(i)), config.image_size));
  }
}

int Dataset::batches_per_epoch() const { return config_.corpus_size / config_.batch; }

std::vector<std::size_t> Dataset::order(int epoch) const {
  return Rng(config_.seed, "shuffle", static_cast<std::uint64_t>(epoch)).permutation(corpus_.size());
}

Batch Dataset::batch(int epoch, int index, DType dtype) const {
  if (index < 0 || index >= batches_per_epoch()) {
    throw LookupError("dataset: batch " + std::to_string(index) + " outside epoch of " +
                      std::to_string(batches_per_epoch()));
  }
  const auto perm = order(epoch);
  const int hq_side = config_.crop * spec_.output_scale();
  const int span = config_.image_size - hq_side + 1;
  std::vector<Image> lq, hq;
  for (int k = 0; k < config_.batch; ++k) {
    const std::size_t src = perm[static_cast<std::size_t>(index * config_.batch + k)];
    const std::uint64_t draw = static_cast<std::uint64_t>(epoch) * corpus_.size() + src;
    Rng rng(config_.seed, "crop", draw);
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    DegradationSpec s = spec_;
    s.seed = derive_seed(config_.seed, "degrade", draw);
    auto [l, h] = degrade(crop(corpus_[src], y, x, hq_side, hq_side), s);
    lq.push_back(std::move(l));
    hq.push_back(std::move(h));
  }
  return {to_tensor(lq, dtype), to_tensor(hq, dtype)};
}

std::vector<std::pair<Image, Image>> held_out_set(const DegradationSpec& spec, int count, int crop,
                                                  std::uint64_t seed) {
  std::vector<std::pair<Image, Image>> out;
  const int side = crop * spec.output_scale();
  for (int i = 0; i < count; ++i) {
    const auto idx = kHeldOutBase + static_cast<std::uint64_t>(i);
    DegradationSpec s = spec;
    s.seed = derive_seed(seed, "heldout.degrade", idx);
    out.push_back(degrade(synth_image(derive_seed(seed, "corpus", idx), side), s));
  }
  return out;
}

}  // namespace air::data
