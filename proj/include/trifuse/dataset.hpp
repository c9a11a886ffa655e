#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "trifuse/config.hpp"
#include "trifuse/data/mmv.hpp"
#include "trifuse/data/preprocess.hpp"
#include "trifuse/data/synthetic.hpp"

namespace trifuse {

/// Network-ready sample: normalized 4-channel input and WT/TC/ET target channels.
struct PreparedSample {
  std::string id;
  torch::Tensor input;   // [1, 4, D, H, W] float
  torch::Tensor target;  // [1, 3, D, H, W] float, channel order WT, TC, ET
  data::RegionMasks masks;
  Spacing spacing;
};

using Dataset = std::vector<PreparedSample>;

inline torch::Tensor to_tensor(const Volume& v) {
  const auto& s = v.shape();
  return torch::from_blob(const_cast<float*>(v.values().data()), {s.d, s.h, s.w}, torch::kFloat32).clone();
}

inline torch::Tensor to_tensor(const Mask& m) {
  const auto& s = m.shape();
  return torch::from_blob(const_cast<std::uint8_t*>(m.values().data()), {s.d, s.h, s.w}, torch::kUInt8)
      .to(torch::kFloat32);
}

/// Thresholded [3, D, H, W] (or [1, 3, ...]) probabilities into WT/TC/ET masks.
inline data::RegionMasks masks_from_probabilities(const torch::Tensor& probs, const Spacing& spacing,
                                                  double threshold = 0.5) {
  auto p = probs.dim() == 5 ? probs[0] : probs;
  p = (p > threshold).to(torch::kUInt8).contiguous();
  const Shape shape{p.size(1), p.size(2), p.size(3)};
  auto take = [&](int c) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(shape.voxels()));
    std::memcpy(v.data(), p[c].contiguous().data_ptr<std::uint8_t>(), v.size());
    return Mask(shape, spacing, std::move(v));
  };
  return {take(0), take(1), take(2)};
}

/// Normalizes each modality, resamples to `input` if the geometry differs, and
/// derives region targets.
inline PreparedSample prepare_sample(const MultiModalSample& raw, const Shape& input) {
  raw.validate();
  const MultiModalSample s = raw.label.shape() == input ? raw : data::crop_resize(raw, input);
  PreparedSample p;
  p.id = s.id;
  p.spacing = s.label.spacing();
  std::vector<torch::Tensor> chans;
  for (const auto& m : s.modalities) chans.push_back(to_tensor(data::normalize_intensity(m)));
  p.input = torch::stack(chans).unsqueeze(0);
  p.masks = data::region_masks(s.label);
  p.target = torch::stack({to_tensor(p.masks.wt), to_tensor(p.masks.tc), to_tensor(p.masks.et)}).unsqueeze(0);
  return p;
}

inline std::vector<MultiModalSample> load_raw_samples(const ExperimentConfig& cfg) {
  std::vector<MultiModalSample> out;
  if (cfg.data == DataSource::synthetic) {
    const auto spec = cfg.correlation_spec();
    for (int k = 0; k < cfg.samples; ++k)
      out.push_back(data::generate_synthetic_sample(cfg.data_seed + static_cast<std::uint64_t>(k), cfg.sample_shape, spec));
    return out;
  }
  return data::read_mmv_directory(cfg.data_dir);
}

inline Dataset prepare_dataset(const std::vector<MultiModalSample>& raw, const Shape& input) {
  Dataset d;
  d.reserve(raw.size());
  for (const auto& s : raw) d.push_back(prepare_sample(s, input));
  return d;
}

inline Dataset load_dataset(const ExperimentConfig& cfg) { return prepare_dataset(load_raw_samples(cfg), cfg.net.input); }

struct Split {
  std::vector<std::size_t> train, test;
};

/// Seeded shuffle, then the first round(n * fraction) indices train; at least one sample each side.
inline Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::invalid_argument, "need at least 2 samples to split");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  auto n_train = static_cast<std::size_t>(std::llround(double(n) * train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return s;
}

}  // namespace trifuse
