#include <gtest/gtest.h>
#include <torch/torch.h>

#include "trifuse/fusion.hpp"

using namespace trifuse;

namespace {

std::vector<torch::Tensor> features(std::int64_t c = 4, std::int64_t e = 6) {
  std::vector<torch::Tensor> z;
  for (int m = 0; m < 4; ++m) z.push_back(torch::randn({1, c, e, e, e}));
  return z;
}

void set_bias_only(torch::nn::Linear& l, double bias) {
  torch::NoGradGuard g;
  l->weight.zero_();
  l->bias.fill_(bias);
}

}  // namespace

TEST(ModalityAttention, GatesInUnitIntervalOverManyInputs) {
  torch::manual_seed(0);
  ModalityAttention att(2);
  for (int t = 0; t < 100; ++t) {
    const auto w = att(torch::randn({1, 8, 3, 3, 3}) * 10.0).weights;
    ASSERT_EQ(w.numel(), 8);
    EXPECT_GE(w.min().item<float>(), 0.0f);
    EXPECT_LE(w.max().item<float>(), 1.0f);
  }
}

TEST(ModalityAttention, ForcedGatesGiveIdentityAndNull) {
  torch::manual_seed(1);
  ModalityAttention att(4);
  const auto concat = torch::cat(features(), 1);
  set_bias_only(att->excite(), 1e4);
  auto out = att(concat);
  for (int m = 0; m < 4; ++m) EXPECT_TRUE(torch::equal(out.attended[m], concat.narrow(1, 4 * m, 4)));
  set_bias_only(att->excite(), -1e4);
  out = att(concat);
  for (const auto& z : out.attended) EXPECT_EQ(z.abs().max().item<float>(), 0.0f);
}

TEST(ModalityAttention, ShrinkingAGateShrinksItsSlice) {
  torch::manual_seed(2);
  const auto concat = torch::cat(features(), 1);
  double previous = std::numeric_limits<double>::infinity();
  for (double s = 1.0; s >= 0.0; s -= 0.1) {
    auto w = torch::ones({1, 16});
    w.narrow(1, 4, 4).fill_(s);
    const auto norm = ModalityAttentionImpl::apply(concat, w, 4)[1].norm().item<double>();
    EXPECT_LE(norm, previous + 1e-12);
    previous = norm;
  }
}

TEST(ModalityAttention, PerModalityGranularityRepeatsOneGate) {
  torch::manual_seed(3);
  ModalityAttention att(4, 4, 4, GateGranularity::modality);
  const auto w = att(torch::cat(features(), 1)).weights;
  ASSERT_EQ(w.size(1), 16);
  for (int m = 0; m < 4; ++m) {
    const auto slice = w.narrow(1, 4 * m, 4);
    EXPECT_TRUE(torch::equal(slice, slice[0][0].expand_as(slice)));
  }
}

TEST(ModalityAttention, RejectsIndivisibleChannels) {
  ModalityAttention att(2);
  EXPECT_THROW(att(torch::randn({1, 7, 2, 2, 2})), Error);
}

TEST(SpatialAttention, MapInUnitIntervalAndIdentityWhenForced) {
  torch::manual_seed(4);
  SpatialAttention att(4);
  const auto concat = torch::cat(features(), 1) * 5.0;
  const auto map = att(concat).map;
  EXPECT_EQ(map.size(1), 1);
  EXPECT_GE(map.min().item<float>(), 0.0f);
  EXPECT_LE(map.max().item<float>(), 1.0f);
  {
    torch::NoGradGuard g;
    att->conv()->weight.zero_();
    att->conv()->bias.fill_(1e4);
  }
  const auto out = att(concat);
  for (int m = 0; m < 4; ++m) EXPECT_TRUE(torch::equal(out.attended[m], concat.narrow(1, 4 * m, 4)));
}

TEST(SpatialAttention, ZeroedRegionMapsToSigmoidOfBias) {
  torch::manual_seed(5);
  SpatialAttention att(4);
  auto concat = torch::cat(features(4, 8), 1);
  concat.narrow(2, 0, 4).zero_();
  const auto map = att(concat).map;
  const auto region = map.narrow(2, 0, 4);
  const float expected = torch::sigmoid(att->conv()->bias).item<float>();
  EXPECT_TRUE(torch::allclose(region, torch::full_like(region, expected)));
}

TEST(DualFuse, AdditiveIdentityLinearityAndPermutation) {
  torch::manual_seed(6);
  const auto a = features(), b = features();
  std::vector<torch::Tensor> zeros;
  for (const auto& t : b) zeros.push_back(torch::zeros_like(t));
  EXPECT_TRUE(torch::equal(dual_attention_fuse(a, zeros), torch::cat(a, 1)));

  std::vector<torch::Tensor> a2, b2;
  for (std::size_t i = 0; i < a.size(); ++i) a2.push_back(2 * a[i]), b2.push_back(2 * b[i]);
  EXPECT_TRUE(torch::allclose(dual_attention_fuse(a2, b2), 2 * dual_attention_fuse(a, b)));

  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<torch::Tensor> ap, bp, expected;
  const auto fused = dual_attention_fuse(a, b).chunk(4, 1);
  for (int p : perm) ap.push_back(a[p]), bp.push_back(b[p]), expected.push_back(fused[p]);
  EXPECT_TRUE(torch::equal(dual_attention_fuse(ap, bp), torch::cat(expected, 1)));
}

TEST(DualFuse, ShapeMismatchThrows) {
  auto a = features(), b = features();
  b[2] = torch::randn({1, 4, 5, 5, 5});
  EXPECT_THROW(dual_attention_fuse(a, b), Error);
}

TEST(CorrelationDescribe, ZeroInputZeroBiasGivesZeroParameters) {
  torch::manual_seed(7);
  CorrelationDescription cd(4);
  {
    torch::NoGradGuard g;
    for (auto& p : cd->named_parameters())
      if (p.key().find("bias") != std::string::npos) p.value().zero_();
  }
  const auto g = cd(torch::zeros({1, 4, 3, 3, 3}));
  for (const auto* t : {&g.alpha, &g.beta, &g.gamma}) {
    EXPECT_EQ(t->sizes(), (std::vector<std::int64_t>{1, 4}));
    EXPECT_EQ(t->abs().max().item<float>(), 0.0f);
  }
}

TEST(CorrelationDescribe, DeterministicAndThreeCOutputs) {
  torch::manual_seed(8);
  CorrelationDescription cd(5);
  const auto x = torch::randn({1, 5, 3, 3, 3});
  const auto a = cd(x), b = cd(x);
  EXPECT_TRUE(torch::equal(a.alpha, b.alpha));
  EXPECT_TRUE(torch::equal(a.gamma, b.gamma));
  EXPECT_EQ(a.alpha.numel() + a.beta.numel() + a.gamma.numel(), 15);
}

TEST(CorrelationTransform, HandEvaluations) {
  const auto z = torch::full({1, 1, 1, 1, 1}, 2.0);
  const CorrelationParams p{torch::full({1, 1}, 1.0), torch::full({1, 1}, 3.0), torch::full({1, 1}, -1.0)};
  EXPECT_DOUBLE_EQ(correlation_transform(z, p).item<double>(), 9.0);
  EXPECT_DOUBLE_EQ(correlation_transform(z, p, Expression::linear).item<double>(), 1.0);

  const auto zr = torch::randn({1, 3, 4, 4, 4});
  const CorrelationParams id{torch::zeros({1, 3}), torch::ones({1, 3}), torch::zeros({1, 3})};
  EXPECT_TRUE(torch::equal(correlation_transform(zr, id), zr));
}

TEST(CorrelationTransform, ShapeMismatchThrows) {
  const CorrelationParams p{torch::ones({1, 2}), torch::ones({1, 2}), torch::ones({1, 2})};
  EXPECT_THROW(correlation_transform(torch::randn({1, 3, 2, 2, 2}), p), Error);
}

TEST(TriAttention, DefaultPairsExposeThreeCouples) {
  torch::manual_seed(9);
  FusionOptions o;
  o.pairs = default_pairs();
  TriAttentionFusion f(4, o);
  f->build_correlation_blocks(4);
  const auto out = f(features());
  ASSERT_EQ(out.couples.size(), 3u);
  EXPECT_EQ(out.couples[0].pair, (ModalityPair{1, 3}));
  EXPECT_EQ(out.couples[2].pair, (ModalityPair{4, 2}));
  EXPECT_TRUE(torch::equal(out.couples[1].target, out.spatial_attended[3]));
  EXPECT_EQ(out.fused.size(1), 16);
}

TEST(TriAttention, CorrelationBranchLeavesFusedValueUntouched) {
  torch::manual_seed(10);
  FusionOptions with;
  with.pairs = default_pairs(PairDirection::both);
  TriAttentionFusion tri(4, with);
  TriAttentionFusion dual(4, FusionOptions{});
  {
    torch::NoGradGuard g;
    auto src = dual->named_parameters();
    for (auto& p : tri->named_parameters()) p.value().copy_(src[p.key()]);
  }
  tri->build_correlation_blocks(4);
  tri->eval();
  dual->eval();
  const auto z = features();
  const auto a = tri(z), b = dual(z);
  EXPECT_TRUE(torch::equal(a.fused, b.fused));
  EXPECT_EQ(a.couples.size(), 6u);
  EXPECT_TRUE(b.couples.empty());
  EXPECT_TRUE(torch::equal(b.fused, dual_attention_fuse(b.modality_attended, b.spatial_attended)));
}

TEST(TriAttention, InvalidPairsRejected) {
  FusionOptions o;
  o.pairs = {{1, 5}};
  EXPECT_THROW(TriAttentionFusion(4, o), Error);
  o.pairs = {{2, 2}};
  EXPECT_THROW(TriAttentionFusion(4, o), Error);
}

TEST(Pairs, Directions) {
  EXPECT_EQ(default_pairs().size(), 3u);
  EXPECT_EQ(default_pairs(PairDirection::reverse)[2], (ModalityPair{2, 4}));
  EXPECT_EQ(default_pairs(PairDirection::both).size(), 6u);
}
