#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trifuse/backbone.hpp"
#include "trifuse/fusion.hpp"
#include "trifuse/rng.hpp"

namespace trifuse {

enum class FusionMode { baseline, dual, tri };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::baseline: return "baseline";
    case FusionMode::dual: return "dual";
    case FusionMode::tri: return "tri";
  }
  return "?";
}

struct ModelConfig {
  NetworkConfig net;
  FusionMode mode = FusionMode::tri;
  std::vector<ModalityPair> pairs = default_pairs();
  /// 1-based encoder levels carrying a correlation branch (levels == deepest).
  std::vector<int> correlation_levels;
  Expression expression = Expression::nonlinear;
  GateGranularity granularity = GateGranularity::channel;
  std::int64_t reduction = 4;

  bool correlated_at(int level) const {
    return mode == FusionMode::tri && !pairs.empty() &&
           std::find(correlation_levels.begin(), correlation_levels.end(), level) != correlation_levels.end();
  }

  void validate() const {
    net.validate();
    validate_pairs(pairs, net.modalities);
    for (int l : correlation_levels)
      if (l < 1 || l > net.levels)
        throw Error(ErrorKind::invalid_argument, "correlation level " + std::to_string(l) + " outside 1.." +
                                                     std::to_string(net.levels));
  }
};

/// Correlation couple tagged with the (1-based) level it came from.
struct LevelCouple {
  int level;
  CorrelationCouple couple;
};

struct ModelOutput {
  std::vector<torch::Tensor> level_logits;  // coarse to fine
  torch::Tensor logits;                     // deep-supervision merge at full resolution
  std::vector<LevelCouple> couples;
  std::optional<FusionOutput> deep_fusion;  // absent in baseline mode

  std::vector<CorrelationCouple> plain_couples() const {
    std::vector<CorrelationCouple> out;
    for (const auto& c : couples) out.push_back(c.couple);
    return out;
  }
};

/// Multi-encoder U-Net with (tri-)attention fusion at the deepest level and optional
/// correlation-constrained fusion at shallower skip levels.
class TriFuseNetImpl : public torch::nn::Module {
 public:
  TriFuseNetImpl(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& net = cfg_.net;
    const int L = net.levels;
    // Each component draws its initial weights from its own stream.
    auto seeded = [&](const std::string& name) { torch::manual_seed(derive_seed(seed, name)); };
    for (int m = 0; m < net.modalities; ++m) {
      seeded("encoder" + std::to_string(m + 1));
      encoders_.push_back(register_module("encoder" + std::to_string(m + 1), Encoder(net)));
    }
    if (cfg_.mode != FusionMode::baseline) {
      seeded("fusion" + std::to_string(L));
      deep_ = register_module("fusion" + std::to_string(L), make_fusion(L));
    }
    shallow_.assign(L - 1, TriAttentionFusion(nullptr));
    for (int l = 1; l < L; ++l)
      if (cfg_.correlated_at(l)) {
        seeded("fusion" + std::to_string(l));
        shallow_[l - 1] = register_module("fusion" + std::to_string(l), make_fusion(l));
      }
    seeded("decoder");
    decoder_ = register_module("decoder", Decoder(net));
    for (int l = 1; l <= L; ++l) {
      auto f = fusion_at(l);
      if (!f || f->options().pairs.empty()) continue;
      seeded("correlation" + std::to_string(l));
      f->build_correlation_blocks(net.channels_at(l - 1));
    }
  }

  /// Per-modality encoder features, [modality][level].
  std::vector<std::vector<torch::Tensor>> encode(const torch::Tensor& x) {
    check_input(x);
    std::vector<std::vector<torch::Tensor>> feats;
    for (int m = 0; m < cfg_.net.modalities; ++m) feats.push_back(encoders_[m](x.narrow(1, m, 1)));
    return feats;
  }

  ModelOutput forward(const torch::Tensor& x) {
    const auto feats = encode(x);
    const int L = cfg_.net.levels;
    auto level_features = [&](int level) {
      std::vector<torch::Tensor> z;
      for (const auto& f : feats) z.push_back(f[level - 1]);
      return z;
    };

    ModelOutput out;
    std::vector<torch::Tensor> skips;
    for (int l = 1; l < L; ++l) {
      auto z = level_features(l);
      if (auto f = shallow_[l - 1]) {
        auto fo = f->forward(z);
        for (auto& c : fo.couples) out.couples.push_back({l, std::move(c)});
        skips.push_back(fo.fused);
      } else {
        skips.push_back(torch::cat(z, 1));
      }
    }
    torch::Tensor fused;
    if (deep_) {
      auto fo = deep_->forward(level_features(L));
      for (const auto& c : fo.couples) out.couples.push_back({L, c});
      fused = fo.fused;
      out.deep_fusion = std::move(fo);
    } else {
      fused = torch::cat(level_features(L), 1);
    }
    out.level_logits = decoder_(fused, skips);
    out.logits = deep_supervision_merge(out.level_logits);
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  Encoder& encoder(int one_based) { return encoders_.at(one_based - 1); }
  Decoder& decoder() { return decoder_; }
  TriAttentionFusion fusion_at(int level) const {
    if (level == cfg_.net.levels) return deep_;
    if (level >= 1 && level < cfg_.net.levels) return shallow_[level - 1];
    return nullptr;
  }

 private:
  TriAttentionFusion make_fusion(int level) const {
    FusionOptions o;
    if (cfg_.correlated_at(level)) o.pairs = cfg_.pairs;
    o.expression = cfg_.expression;
    o.reduction = cfg_.reduction;
    o.granularity = cfg_.granularity;
    o.leaky_slope = cfg_.net.leaky_slope;
    return TriAttentionFusion(cfg_.net.channels_at(level - 1), o, cfg_.net.modalities);
  }

  void check_input(const torch::Tensor& x) const {
    const auto& s = cfg_.net.input;
    if (x.dim() != 5 || x.size(1) != cfg_.net.modalities || x.size(2) != s.d || x.size(3) != s.h || x.size(4) != s.w)
      throw Error(ErrorKind::shape_mismatch, "network input must be [N, " + std::to_string(cfg_.net.modalities) +
                                                 ", " + to_string(s) + "]");
  }

  ModelConfig cfg_;
  std::vector<Encoder> encoders_;
  TriAttentionFusion deep_{nullptr};
  std::vector<TriAttentionFusion> shallow_;
  Decoder decoder_{nullptr};
};
TORCH_MODULE(TriFuseNet);

}  // namespace trifuse
