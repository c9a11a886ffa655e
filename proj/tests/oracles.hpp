#pragma once

// Brute-force reference implementations for tests. Plain loops over std::vector,
// no torch, no distance transforms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "trifuse/volume.hpp"

namespace oracle {

inline double dice_loss(const std::vector<double>& p, const std::vector<double>& g, double eps) {
  double inter = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * g[i];
    sum += p[i] + g[i];
  }
  return 1.0 - 2.0 * (inter + eps) / (sum + eps);
}

inline double dice_score(const trifuse::Mask& a, const trifuse::Mask& b) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    tp += a[i] && b[i];
    fp += a[i] && !b[i];
    fn += !a[i] && b[i];
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += e[i] = std::exp(x[i] - m);
  for (auto& v : e) v /= s;
  return e;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q, double eps = 1e-8) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / std::max(q[i], eps));
  return s;
}

/// z is [C][V] (channel-major), coefficients per channel.
inline std::vector<double> transform(const std::vector<double>& z, std::size_t channels, const std::vector<double>& a,
                                     const std::vector<double>& b, const std::vector<double>& c, bool linear) {
  const std::size_t per = z.size() / channels;
  std::vector<double> out(z.size());
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t v = 0; v < per; ++v) {
      const double x = z[ch * per + v];
      out[ch * per + v] = linear ? a[ch] * x + c[ch] : a[ch] * x * x + b[ch] * x + c[ch];
    }
  return out;
}

struct Voxel {
  std::int64_t z, y, x;
};

inline std::vector<Voxel> border_voxels(const trifuse::Mask& m) {
  const auto& s = m.shape();
  std::vector<Voxel> out;
  const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (std::int64_t z = 0; z < s.d; ++z)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        if (!m.at(z, y, x)) continue;
        bool edge = false;
        for (const auto& o : nb) {
          const auto zz = z + o[0], yy = y + o[1], xx = x + o[2];
          if (zz < 0 || yy < 0 || xx < 0 || zz >= s.d || yy >= s.h || xx >= s.w || !m.at(zz, yy, xx)) edge = true;
        }
        if (edge) out.push_back({z, y, x});
      }
  return out;
}

/// All-pairs symmetric Hausdorff distance between border sets, in squared-then-rooted mm.
inline std::optional<double> hausdorff(const trifuse::Mask& a, const trifuse::Mask& b, const trifuse::Spacing& sp) {
  const auto ba = border_voxels(a), bb = border_voxels(b);
  if (ba.empty() || bb.empty()) return std::nullopt;
  auto d2 = [&](const Voxel& p, const Voxel& q) {
    const double dz = double(p.z - q.z) * sp.d, dy = double(p.y - q.y) * sp.h, dx = double(p.x - q.x) * sp.w;
    return dz * dz + dy * dy + dx * dx;
  };
  auto directed = [&](const std::vector<Voxel>& from, const std::vector<Voxel>& to) {
    double worst = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, d2(p, q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(ba, bb), directed(bb, ba)));
}

}  // namespace oracle
