#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trifuse/error.hpp"
#include "trifuse/volume.hpp"

namespace trifuse {

enum class Expression { nonlinear, linear };
enum class PairDirection { forward, reverse, both };
enum class GateGranularity { channel, modality };

/// 1-based (source, target) modality pair constrained by the correlation loss.
struct ModalityPair {
  int source;
  int target;
  bool operator==(const ModalityPair&) const = default;
};

/// T1 -> T1c, T1 -> T2, T2 -> FLAIR.
inline std::vector<ModalityPair> default_pairs(PairDirection dir = PairDirection::forward) {
  const std::vector<ModalityPair> fwd{{1, 3}, {1, 4}, {4, 2}};
  std::vector<ModalityPair> out;
  if (dir != PairDirection::reverse) out = fwd;
  if (dir != PairDirection::forward)
    for (const auto& p : fwd) out.push_back({p.target, p.source});
  return out;
}

inline void validate_pairs(const std::vector<ModalityPair>& pairs, int modalities = kModalityCount) {
  for (const auto& p : pairs)
    if (p.source < 1 || p.source > modalities || p.target < 1 || p.target > modalities || p.source == p.target)
      throw Error(ErrorKind::invalid_argument, "invalid correlation pair (" + std::to_string(p.source) + ", " +
                                                   std::to_string(p.target) + ")");
}

namespace detail {

inline void check_concat(const torch::Tensor& concat, int modalities) {
  if (concat.dim() != 5) throw Error(ErrorKind::shape_mismatch, "fusion expects 5D feature maps");
  if (concat.size(1) % modalities != 0)
    throw Error(ErrorKind::shape_mismatch, "channel count " + std::to_string(concat.size(1)) +
                                               " is not divisible by " + std::to_string(modalities));
}

inline torch::Tensor global_average(const torch::Tensor& x) { return x.mean({2, 3, 4}); }

}  // namespace detail

struct ModalityAttentionOutput {
  torch::Tensor weights;                  // [N, 4C] in [0, 1]
  std::vector<torch::Tensor> attended;    // Z_im per modality, [N, C, D, H, W]
};

/// Channel squeeze-excitation over the concatenated modality features.
class ModalityAttentionImpl : public torch::nn::Module {
 public:
  ModalityAttentionImpl(std::int64_t channels_per_modality, int modalities = kModalityCount, std::int64_t reduction = 4,
                        GateGranularity granularity = GateGranularity::channel, double leaky_slope = 0.01)
      : per_modality_(channels_per_modality), modalities_(modalities), granularity_(granularity), slope_(leaky_slope) {
    const auto total = per_modality_ * modalities;
    const auto hidden = std::max<std::int64_t>(1, total / reduction);
    squeeze_ = register_module("squeeze", torch::nn::Linear(total, hidden));
    excite_ = register_module(
        "excite", torch::nn::Linear(hidden, granularity == GateGranularity::channel ? total : modalities));
  }

  ModalityAttentionOutput forward(const torch::Tensor& concat) {
    detail::check_concat(concat, modalities_);
    if (concat.size(1) != per_modality_ * modalities_)
      throw Error(ErrorKind::shape_mismatch, "modality attention built for " +
                                                 std::to_string(per_modality_ * modalities_) + " channels");
    auto w = torch::sigmoid(excite_(torch::leaky_relu(squeeze_(detail::global_average(concat)), slope_)));
    if (granularity_ == GateGranularity::modality) w = w.repeat_interleave(per_modality_, 1);
    return {w, apply(concat, w, modalities_)};
  }

  /// Z_im(i) = w-slice(i) * concat-slice(i), broadcast over space.
  static std::vector<torch::Tensor> apply(const torch::Tensor& concat, const torch::Tensor& weights, int modalities) {
    const auto gated = concat * weights.view({weights.size(0), weights.size(1), 1, 1, 1});
    return gated.chunk(modalities, 1);
  }

  torch::nn::Linear& excite() { return excite_; }

 private:
  std::int64_t per_modality_;
  int modalities_;
  GateGranularity granularity_;
  double slope_;
  torch::nn::Linear squeeze_{nullptr}, excite_{nullptr};
};
TORCH_MODULE(ModalityAttention);

struct SpatialAttentionOutput {
  torch::Tensor map;                      // [N, 1, D, H, W] in [0, 1]
  std::vector<torch::Tensor> attended;    // Z_is per modality
};

/// One shared sigmoid map over voxel positions from a 1x1x1 convolution.
class SpatialAttentionImpl : public torch::nn::Module {
 public:
  SpatialAttentionImpl(std::int64_t channels_per_modality, int modalities = kModalityCount)
      : modalities_(modalities) {
    conv_ = register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(channels_per_modality * modalities, 1, 1)));
  }

  SpatialAttentionOutput forward(const torch::Tensor& concat) {
    detail::check_concat(concat, modalities_);
    auto map = torch::sigmoid(conv_(concat));
    return {map, apply(concat, map, modalities_)};
  }

  static std::vector<torch::Tensor> apply(const torch::Tensor& concat, const torch::Tensor& map, int modalities) {
    return (concat * map).chunk(modalities, 1);
  }

  torch::nn::Conv3d& conv() { return conv_; }

 private:
  int modalities_;
  torch::nn::Conv3d conv_{nullptr};
};
TORCH_MODULE(SpatialAttention);

/// Z_f = concat_i(Z_im(i) + Z_is(i)).
inline torch::Tensor dual_attention_fuse(const std::vector<torch::Tensor>& modality_attended,
                                         const std::vector<torch::Tensor>& spatial_attended) {
  if (modality_attended.size() != spatial_attended.size() || modality_attended.empty())
    throw Error(ErrorKind::shape_mismatch, "fusion needs equally many non-empty modality and spatial features");
  std::vector<torch::Tensor> parts;
  parts.reserve(modality_attended.size());
  for (std::size_t i = 0; i < modality_attended.size(); ++i) {
    if (modality_attended[i].sizes() != spatial_attended[i].sizes())
      throw Error(ErrorKind::shape_mismatch, "modality " + std::to_string(i + 1) +
                                                 ": attended feature shapes differ");
    parts.push_back(modality_attended[i] + spatial_attended[i]);
  }
  return torch::cat(parts, 1);
}

/// Per-channel coefficients of the correlation expression, each [N, C].
struct CorrelationParams {
  torch::Tensor alpha, beta, gamma;
};

/// Correlation description block: pooled Z_is -> FC -> LeakyReLU -> FC -> (alpha, beta, gamma).
class CorrelationDescriptionImpl : public torch::nn::Module {
 public:
  explicit CorrelationDescriptionImpl(std::int64_t channels, std::int64_t hidden = 0, double leaky_slope = 0.01)
      : channels_(channels), slope_(leaky_slope) {
    if (hidden <= 0) hidden = channels;
    fc1_ = register_module("fc1", torch::nn::Linear(channels, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, 3 * channels));
  }

  CorrelationParams forward(const torch::Tensor& spatial_attended) {
    if (spatial_attended.dim() != 5 || spatial_attended.size(1) != channels_)
      throw Error(ErrorKind::shape_mismatch, "correlation description expects " + std::to_string(channels_) + " channels");
    auto g = fc2_(torch::leaky_relu(fc1_(detail::global_average(spatial_attended)), slope_));
    auto parts = g.chunk(3, 1);
    return {parts[0], parts[1], parts[2]};
  }

 private:
  std::int64_t channels_;
  double slope_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(CorrelationDescription);

/// nonlinear: alpha*Z^2 + beta*Z + gamma; linear: alpha*Z + gamma (per-channel, broadcast over space).
inline torch::Tensor correlation_transform(const torch::Tensor& z, const CorrelationParams& p,
                                           Expression mode = Expression::nonlinear) {
  if (z.dim() != 5) throw Error(ErrorKind::shape_mismatch, "correlation transform expects a 5D feature map");
  const auto n = z.size(0), c = z.size(1);
  auto check = [&](const torch::Tensor& t, const char* name) {
    if (t.dim() != 2 || t.size(0) != n || t.size(1) != c)
      throw Error(ErrorKind::shape_mismatch, std::string(name) + " must be [" + std::to_string(n) + ", " +
                                                 std::to_string(c) + "]");
    return t.view({n, c, 1, 1, 1});
  };
  const auto a = check(p.alpha, "alpha");
  const auto g = check(p.gamma, "gamma");
  if (mode == Expression::linear) return a * z + g;
  const auto b = check(p.beta, "beta");
  return a * z * z + b * z + g;
}

/// Correlated representation of the source and the spatial-attention representation of the target.
struct CorrelationCouple {
  ModalityPair pair;
  torch::Tensor predicted;  // F_i
  torch::Tensor target;     // Z_js
};

struct FusionOutput {
  torch::Tensor fused;
  torch::Tensor modality_weights;
  torch::Tensor spatial_map;
  std::vector<torch::Tensor> modality_attended;
  std::vector<torch::Tensor> spatial_attended;
  std::vector<CorrelationCouple> couples;
};

struct FusionOptions {
  std::vector<ModalityPair> pairs;  // empty: dual-attention fusion only
  Expression expression = Expression::nonlinear;
  std::int64_t reduction = 4;
  GateGranularity granularity = GateGranularity::channel;
  double leaky_slope = 0.01;
};

/// Dual-attention fusion plus, when pairs are given, the correlation attention branch.
/// The branch never alters the fused value; it only exposes couples for the loss.
class TriAttentionFusionImpl : public torch::nn::Module {
 public:
  TriAttentionFusionImpl(std::int64_t channels_per_modality, FusionOptions opts, int modalities = kModalityCount)
      : opts_(std::move(opts)), modalities_(modalities) {
    validate_pairs(opts_.pairs, modalities);
    modality_ = register_module("modality_attention",
                                ModalityAttention(channels_per_modality, modalities, opts_.reduction,
                                                  opts_.granularity, opts_.leaky_slope));
    spatial_ = register_module("spatial_attention", SpatialAttention(channels_per_modality, modalities));
  }

  /// Correlation description blocks are created separately so that building them
  /// does not disturb the random initialisation of the attention modules.
  void build_correlation_blocks(std::int64_t channels_per_modality) {
    for (const auto& p : opts_.pairs)
      describe_.push_back(register_module(
          "describe_" + std::to_string(p.source) + "_" + std::to_string(p.target),
          CorrelationDescription(channels_per_modality, 0, opts_.leaky_slope)));
  }

  FusionOutput forward(const std::vector<torch::Tensor>& features) {
    if (static_cast<int>(features.size()) != modalities_)
      throw Error(ErrorKind::shape_mismatch, "fusion expects " + std::to_string(modalities_) + " modality features");
    for (const auto& f : features)
      if (f.sizes() != features.front().sizes())
        throw Error(ErrorKind::shape_mismatch, "modality features differ in shape");
    const auto concat = torch::cat(features, 1);
    auto m = modality_(concat);
    auto s = spatial_(concat);
    FusionOutput out;
    out.fused = dual_attention_fuse(m.attended, s.attended);
    if (!opts_.pairs.empty() && describe_.size() != opts_.pairs.size())
      throw Error(ErrorKind::invalid_argument, "correlation blocks were not built");
    for (std::size_t k = 0; k < opts_.pairs.size(); ++k) {
      const auto& p = opts_.pairs[k];
      const auto& zs = s.attended[p.source - 1];
      out.couples.push_back({p, correlation_transform(zs, describe_[k](zs), opts_.expression), s.attended[p.target - 1]});
    }
    out.modality_weights = std::move(m.weights);
    out.spatial_map = std::move(s.map);
    out.modality_attended = std::move(m.attended);
    out.spatial_attended = std::move(s.attended);
    return out;
  }

  const FusionOptions& options() const { return opts_; }
  ModalityAttention& modality_attention() { return modality_; }
  SpatialAttention& spatial_attention() { return spatial_; }
  CorrelationDescription& describe(std::size_t k) { return describe_.at(k); }

 private:
  FusionOptions opts_;
  int modalities_;
  ModalityAttention modality_{nullptr};
  SpatialAttention spatial_{nullptr};
  std::vector<CorrelationDescription> describe_;
};
TORCH_MODULE(TriAttentionFusion);

}  // namespace trifuse
