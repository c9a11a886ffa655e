#pragma once

#include <torch/torch.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "trifuse/error.hpp"
#include "trifuse/fusion.hpp"

namespace trifuse {

inline constexpr double kDiceEpsilon = 1e-5;
inline constexpr double kKlClamp = 1e-8;
inline constexpr double kDefaultLambda = 0.1;

/// 1 - 2 (sum p*g + eps) / (sum (p + g) + eps), with both sums running jointly over
/// region channels and voxels.
inline torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps = kDiceEpsilon) {
  if (pred.sizes() != target.sizes())
    throw Error(ErrorKind::shape_mismatch, "dice loss: prediction and target shapes differ");
  if (!(eps > 0.0)) throw Error(ErrorKind::invalid_argument, "dice loss: epsilon must be > 0");
  {
    torch::NoGradGuard guard;
    const double lo = pred.min().item<double>(), hi = pred.max().item<double>();
    if (lo < -1e-6 || hi > 1.0 + 1e-6)
      throw Error(ErrorKind::invalid_argument, "dice loss: predictions outside [0, 1]");
  }
  const auto t = target.to(pred.dtype());
  const auto inter = (pred * t).sum();
  const auto denom = (pred + t).sum();
  return 1.0 - 2.0 * (inter + eps) / (denom + eps);
}

/// Softmax over the fully flattened tensor, in double: float32 sums over a full-resolution
/// feature map drift past the KL normalization check.
inline torch::Tensor to_distribution(const torch::Tensor& x) { return torch::softmax(x.flatten().to(torch::kFloat64), 0); }

/// sum P ln(P / max(Q, eps)), with 0 ln(0/q) = 0.
inline torch::Tensor kl_divergence(const torch::Tensor& p, const torch::Tensor& q, double eps = kKlClamp) {
  if (p.numel() != q.numel()) throw Error(ErrorKind::shape_mismatch, "KL: distributions differ in length");
  if (!(eps > 0.0)) throw Error(ErrorKind::invalid_argument, "KL: clamp epsilon must be > 0");
  {
    torch::NoGradGuard guard;
    for (const auto* t : {&p, &q}) {
      if (t->min().item<double>() < 0.0) throw Error(ErrorKind::invalid_argument, "KL: negative probability");
      if (std::abs(t->sum().item<double>() - 1.0) > 1e-5)
        throw Error(ErrorKind::invalid_argument, "KL: distribution does not sum to 1");
    }
  }
  const auto pf = p.flatten(), qf = q.flatten();
  return (torch::xlogy(pf, pf) - pf * torch::log(qf.clamp_min(eps))).sum();
}

/// KL(to_distribution(Z_js) || to_distribution(F_i)) per couple, averaged over the batch.
inline std::vector<torch::Tensor> correlation_loss(const std::vector<CorrelationCouple>& couples) {
  std::vector<torch::Tensor> out;
  out.reserve(couples.size());
  for (const auto& c : couples) {
    if (c.predicted.sizes() != c.target.sizes())
      throw Error(ErrorKind::shape_mismatch, "correlation couple shapes differ");
    const auto batch = c.target.size(0);
    torch::Tensor acc;
    for (std::int64_t b = 0; b < batch; ++b) {
      auto kl = kl_divergence(to_distribution(c.target[b]), to_distribution(c.predicted[b]));
      acc = acc.defined() ? acc + kl : kl;
    }
    out.push_back(acc / static_cast<double>(batch));
  }
  return out;
}

/// Scalar record of one loss evaluation.
struct LossBreakdown {
  double dice = 0.0;
  std::vector<double> pairs;
  double lambda = kDefaultLambda;
  double total = 0.0;

  double correlation_sum() const { return std::accumulate(pairs.begin(), pairs.end(), 0.0); }
};

struct TotalLoss {
  torch::Tensor value;
  LossBreakdown breakdown;
};

/// total = dice + lambda * sum(pairs).
inline TotalLoss total_loss(const torch::Tensor& dice, const std::vector<torch::Tensor>& pairs,
                            double lambda = kDefaultLambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
  TotalLoss t;
  t.breakdown.lambda = lambda;
  t.breakdown.dice = dice.item<double>();
  torch::Tensor sum;
  for (const auto& p : pairs) {
    t.breakdown.pairs.push_back(p.item<double>());
    sum = sum.defined() ? sum + p : p;
  }
  t.value = sum.defined() ? dice + lambda * sum : dice;
  t.breakdown.total = t.breakdown.dice + lambda * t.breakdown.correlation_sum();
  return t;
}

/// Same formula on plain numbers.
inline LossBreakdown total_loss(double dice, std::vector<double> pairs, double lambda = kDefaultLambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
  LossBreakdown b{dice, std::move(pairs), lambda, 0.0};
  b.total = dice + lambda * b.correlation_sum();
  return b;
}

}  // namespace trifuse
