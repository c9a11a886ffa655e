#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "trifuse/error.hpp"
#include "trifuse/volume.hpp"

namespace trifuse {

enum class NormKind { instance, none };

/// Architecture hyper-parameters of the multi-encoder U-Net.
struct NetworkConfig {
  int levels = 3;
  int initial_filters = 8;
  double dropout = 0.2;
  double leaky_slope = 0.01;
  NormKind norm = NormKind::instance;
  Shape input{32, 32, 32};
  int modalities = kModalityCount;
  int regions = 3;

  static NetworkConfig desk() { return {}; }
  /// Six levels, 8 initial filters, 128^3 input.
  static NetworkConfig paper() {
    NetworkConfig c;
    c.levels = 6;
    c.input = {128, 128, 128};
    return c;
  }

  std::int64_t channels_at(int level) const { return std::int64_t(initial_filters) << level; }

  void validate() const {
    if (levels < 2) throw Error(ErrorKind::invalid_argument, "levels must be >= 2");
    if (initial_filters < 1) throw Error(ErrorKind::invalid_argument, "initial filters must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw Error(ErrorKind::invalid_argument, "dropout must be in [0, 1)");
    const std::int64_t div = std::int64_t(1) << (levels - 1);
    for (auto e : input.as_array())
      if (e < div || e % div != 0)
        throw Error(ErrorKind::shape_mismatch, "input shape " + to_string(input) +
                                                   " is not divisible by 2^(levels-1) = " + std::to_string(div));
  }
};

/// 3x3x3 convolution (optionally dilated / strided) -> normalization -> leaky rectifier.
class ConvNormActImpl : public torch::nn::Module {
 public:
  ConvNormActImpl(std::int64_t in, std::int64_t out, const NetworkConfig& cfg, std::int64_t dilation = 1,
                  std::int64_t stride = 1)
      : slope_(cfg.leaky_slope) {
    // Bias is redundant in front of instance normalization.
    conv_ = register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3)
                                                          .padding(dilation)
                                                          .dilation(dilation)
                                                          .stride(stride)
                                                          .bias(cfg.norm == NormKind::none)));
    if (cfg.norm == NormKind::instance)
      norm_ = register_module("norm", torch::nn::InstanceNorm3d(torch::nn::InstanceNorm3dOptions(out).affine(true)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv_(x);
    if (norm_) y = norm_(y);
    return torch::leaky_relu(y, slope_);
  }

  torch::nn::Conv3d& conv() { return conv_; }

 private:
  double slope_;
  torch::nn::Conv3d conv_{nullptr};
  torch::nn::InstanceNorm3d norm_{nullptr};
};
TORCH_MODULE(ConvNormAct);

/// Residual block with two dilated 3x3x3 convolutions (rates 2 then 4): y = x + f(x).
class ResDilBlockImpl : public torch::nn::Module {
 public:
  ResDilBlockImpl(std::int64_t channels, const NetworkConfig& cfg) : channels_(channels) {
    first_ = register_module("dil2", ConvNormAct(channels, channels, cfg, 2));
    second_ = register_module("dil4", ConvNormAct(channels, channels, cfg, 4));
    if (cfg.dropout > 0.0) dropout_ = register_module("dropout", torch::nn::Dropout(cfg.dropout));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    if (x.dim() != 5 || x.size(1) != channels_)
      throw Error(ErrorKind::shape_mismatch, "res_dil block expects " + std::to_string(channels_) +
                                                 " channels, got " + (x.dim() == 5 ? std::to_string(x.size(1)) : "rank " + std::to_string(x.dim())));
    auto y = x + second_(first_(x));
    if (dropout_) y = dropout_(y);
    return y;
  }

  /// Voxels along one axis that can influence one output voxel.
  static constexpr std::int64_t receptive_field() { return 1 + 2 * 2 + 2 * 4; }

 private:
  std::int64_t channels_;
  ConvNormAct first_{nullptr}, second_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(ResDilBlock);

/// One modality's encoding path. Returns one feature map per level, shallow to deep.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const NetworkConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::int64_t in = 1;
    for (int l = 0; l < cfg.levels; ++l) {
      const auto out = cfg.channels_at(l);
      convs_.push_back(register_module("conv" + std::to_string(l), ConvNormAct(in, out, cfg, 1, l == 0 ? 1 : 2)));
      blocks_.push_back(register_module("res" + std::to_string(l), ResDilBlock(out, cfg)));
      in = out;
    }
  }

  std::vector<torch::Tensor> forward(torch::Tensor x) {
    if (x.dim() != 5 || x.size(1) != 1)
      throw Error(ErrorKind::shape_mismatch, "encoder expects a 1-channel 5D tensor");
    std::vector<torch::Tensor> out;
    out.reserve(convs_.size());
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      x = blocks_[l](convs_[l](x));
      out.push_back(x);
    }
    return out;
  }

 private:
  NetworkConfig cfg_;
  std::vector<ConvNormAct> convs_;
  std::vector<ResDilBlock> blocks_;
};
TORCH_MODULE(Encoder);

/// Trilinear x2 upsampling.
inline torch::Tensor upsample2(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0, 2.0})
                               .mode(torch::kTrilinear)
                               .align_corners(false));
}

/// Shared decoder over fused features. Level skips carry `skip_factor * channels_at(l)`
/// channels (the concatenation of all modality encoders at that level).
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const NetworkConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int L = cfg.levels;
    const std::int64_t m = cfg.modalities;
    bottleneck_ = register_module("bottleneck", ConvNormAct(m * cfg.channels_at(L - 1), cfg.channels_at(L - 1), cfg));
    heads_.push_back(register_module("head" + std::to_string(L - 1), head(cfg.channels_at(L - 1))));
    for (int l = L - 2; l >= 0; --l) {
      const auto c = cfg.channels_at(l);
      const auto tag = std::to_string(l);
      adjust_.push_back(register_module("adjust" + tag, ConvNormAct(cfg.channels_at(l + 1), c, cfg)));
      merge_.push_back(register_module(
          "merge" + tag, torch::nn::Conv3d(torch::nn::Conv3dOptions(c + m * c, c, 1).bias(false))));
      blocks_.push_back(register_module("res" + tag, ResDilBlock(c, cfg)));
      heads_.push_back(register_module("head" + tag, head(c)));
    }
  }

  /// `skips[l]` is the fused skip at level l (l = 0 .. levels-2). Returns logits per level,
  /// coarse to fine; entry k has spatial extent input / 2^(levels-1-k).
  std::vector<torch::Tensor> forward(const torch::Tensor& fused, const std::vector<torch::Tensor>& skips) {
    const int L = cfg_.levels;
    if (static_cast<int>(skips.size()) != L - 1)
      throw Error(ErrorKind::shape_mismatch, "decoder expects " + std::to_string(L - 1) + " skips, got " +
                                                 std::to_string(skips.size()));
    std::vector<torch::Tensor> logits;
    auto x = bottleneck_(fused);
    logits.push_back(heads_[0](x));
    for (int k = 0; k < L - 1; ++k) {
      const int l = L - 2 - k;
      const auto& skip = skips[l];
      x = adjust_[k](upsample2(x));
      if (skip.sizes().slice(2) != x.sizes().slice(2))
        throw Error(ErrorKind::shape_mismatch, "skip at level " + std::to_string(l) + " does not match decoder shape");
      x = blocks_[k](merge_[k](torch::cat({x, skip}, 1)));
      logits.push_back(heads_[k + 1](x));
    }
    return logits;
  }

 private:
  torch::nn::Conv3d head(std::int64_t c) const {
    return torch::nn::Conv3d(torch::nn::Conv3dOptions(c, cfg_.regions, 1));
  }

  NetworkConfig cfg_;
  ConvNormAct bottleneck_{nullptr};
  std::vector<ConvNormAct> adjust_;
  std::vector<torch::nn::Conv3d> merge_;
  std::vector<ResDilBlock> blocks_;
  std::vector<torch::nn::Conv3d> heads_;
};
TORCH_MODULE(Decoder);

/// Sum of per-level logits, each trilinearly upsampled to the finest level's extent.
inline torch::Tensor deep_supervision_merge(const std::vector<torch::Tensor>& level_logits) {
  namespace F = torch::nn::functional;
  if (level_logits.empty()) throw Error(ErrorKind::invalid_argument, "deep supervision needs at least one level");
  const auto& final_logits = level_logits.back();
  const auto size = final_logits.sizes().slice(2).vec();
  auto out = final_logits;
  for (std::size_t i = 0; i + 1 < level_logits.size(); ++i) {
    const auto& l = level_logits[i];
    if (l.dim() != final_logits.dim() || l.size(1) != final_logits.size(1))
      throw Error(ErrorKind::shape_mismatch, "deep supervision levels disagree on channel count");
    out = out + F::interpolate(l, F::InterpolateFuncOptions().size(size).mode(torch::kTrilinear).align_corners(false));
  }
  return out;
}

}  // namespace trifuse
