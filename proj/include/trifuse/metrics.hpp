#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "trifuse/volume.hpp"

namespace trifuse::metrics {

/// 2TP / (2TP + FP + FN). Empty vs empty scores 1.
inline double dice_score(const Mask& pred, const Mask& truth) {
  if (pred.shape() != truth.shape()) throw Error(ErrorKind::shape_mismatch, "dice: mask shapes differ");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : double(2 * tp) / double(denom);
}

/// Mask voxels with at least one 6-connected neighbour outside the mask or outside the grid.
inline Mask border(const Mask& m) {
  const auto& s = m.shape();
  Mask out(s, m.spacing());
  auto inside = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    return z >= 0 && y >= 0 && x >= 0 && z < s.d && y < s.h && x < s.w && m.at(z, y, x) != 0;
  };
  for (std::int64_t z = 0; z < s.d; ++z)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        if (m.at(z, y, x) == 0) continue;
        out.at(z, y, x) = !(inside(z - 1, y, x) && inside(z + 1, y, x) && inside(z, y - 1, x) &&
                            inside(z, y + 1, x) && inside(z, y, x - 1) && inside(z, y, x + 1));
      }
  return out;
}

namespace detail {

inline constexpr double kFar = 1e30;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) at positions i * step.
// Entries at kFar carry no seed and are left out of the envelope.
inline void edt_1d(const std::vector<double>& f, double step, std::vector<double>& out, std::vector<std::int64_t>& v,
                   std::vector<double>& zs) {
  const auto n = static_cast<std::int64_t>(f.size());
  v.assign(n, 0);
  zs.assign(n + 1, 0.0);
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto pos = [&](std::int64_t i) { return double(i) * step; };
  auto intersect = [&](std::int64_t p, std::int64_t q) {
    return ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * pos(q) - 2.0 * pos(p));
  };
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      zs[0] = -inf;
      zs[1] = inf;
      continue;
    }
    double s = intersect(v[k], q);
    while (s <= zs[k]) {
      --k;
      s = intersect(v[k], q);
    }
    ++k;
    v[k] = q;
    zs[k] = s;
    zs[k + 1] = inf;
  }
  out.assign(n, kFar);
  if (k < 0) return;
  k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (zs[k + 1] < pos(q)) ++k;
    const double d = pos(q) - pos(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace detail

/// Squared Euclidean distance (mm^2) from every voxel to the nearest set voxel of `seeds`.
inline std::vector<double> squared_distance_transform(const Mask& seeds, const Spacing& sp) {
  const auto& s = seeds.shape();
  std::vector<double> g(seeds.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = seeds[i] ? 0.0 : detail::kFar;

  std::vector<double> line, out, zs;
  std::vector<std::int64_t> v;
  auto pass = [&](std::int64_t n, double step, auto&& offset, std::int64_t outer_a, std::int64_t outer_b) {
    line.resize(n);
    for (std::int64_t a = 0; a < outer_a; ++a)
      for (std::int64_t b = 0; b < outer_b; ++b) {
        for (std::int64_t i = 0; i < n; ++i) line[i] = g[offset(a, b, i)];
        detail::edt_1d(line, step, out, v, zs);
        for (std::int64_t i = 0; i < n; ++i) g[offset(a, b, i)] = out[i];
      }
  };
  pass(s.w, sp.w, [&](auto z, auto y, auto x) { return seeds.index(z, y, x); }, s.d, s.h);
  pass(s.h, sp.h, [&](auto z, auto x, auto y) { return seeds.index(z, y, x); }, s.d, s.w);
  pass(s.d, sp.d, [&](auto y, auto x, auto z) { return seeds.index(z, y, x); }, s.h, s.w);
  return g;
}

/// Directed distances (mm) from each border voxel of `from` to the border of `to`.
inline std::vector<double> directed_border_distances(const Mask& from, const Mask& to, const Spacing& sp) {
  const auto to_border = border(to);
  const auto dt = squared_distance_transform(to_border, sp);
  const auto from_border = border(from);
  std::vector<double> d;
  for (std::size_t i = 0; i < from_border.size(); ++i)
    if (from_border[i]) d.push_back(std::sqrt(dt[i]));
  return d;
}

inline bool any(const Mask& m) {
  return std::any_of(m.values().begin(), m.values().end(), [](std::uint8_t v) { return v != 0; });
}

/// Symmetric Hausdorff distance (mm) between mask borders. With `percentile` < 100 each
/// directed distance is replaced by that percentile (e.g. 95 for HD95). Empty mask -> nullopt.
inline std::optional<double> hausdorff_distance(const Mask& pred, const Mask& truth, const Spacing& sp,
                                                double percentile = 100.0) {
  if (pred.shape() != truth.shape()) throw Error(ErrorKind::shape_mismatch, "hausdorff: mask shapes differ");
  if (!any(pred) || !any(truth)) return std::nullopt;
  auto reduce = [&](std::vector<double> d) {
    if (percentile >= 100.0) return *std::max_element(d.begin(), d.end());
    std::sort(d.begin(), d.end());
    const double rank = percentile / 100.0 * double(d.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (d[hi] - d[lo]) * (rank - double(lo));
  };
  return std::max(reduce(directed_border_distances(pred, truth, sp)),
                  reduce(directed_border_distances(truth, pred, sp)));
}

enum class Region { et, wt, tc };
inline constexpr std::array<Region, 3> kReportRegions{Region::et, Region::wt, Region::tc};

inline const char* region_name(Region r) {
  switch (r) {
    case Region::et: return "ET";
    case Region::wt: return "WT";
    case Region::tc: return "TC";
  }
  return "?";
}

struct RegionScore {
  double dice = 0.0;
  std::optional<double> hausdorff_mm;  // nullopt when either surface is empty
};

/// Per-sample scores, indexed by Region.
struct RegionMetrics {
  std::array<RegionScore, 3> scores{};
  RegionScore& operator[](Region r) { return scores[static_cast<int>(r)]; }
  const RegionScore& operator[](Region r) const { return scores[static_cast<int>(r)]; }
};

inline std::string format_hausdorff(const std::optional<double>& hd) {
  if (!hd) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *hd);
  return buf;
}

struct SampleMetrics {
  std::string id;
  RegionMetrics metrics;
};

/// One row per (sample, region): sample_id,region,dice,hausdorff_mm.
inline void write_metrics_csv(std::ostream& os, const std::vector<SampleMetrics>& rows) {
  os << "sample_id,region,dice,hausdorff_mm\n";
  char buf[64];
  for (const auto& r : rows)
    for (auto region : kReportRegions) {
      const auto& s = r.metrics[region];
      std::snprintf(buf, sizeof buf, "%.6f", s.dice);
      os << r.id << ',' << region_name(region) << ',' << buf << ',' << format_hausdorff(s.hausdorff_mm) << '\n';
    }
}

/// Joint histogram of (a, b) intensities over mask voxels; a indexes rows, b columns.
struct JointHistogram {
  int bins = 0;
  double a_min = 0, a_max = 0, b_min = 0, b_max = 0;
  std::vector<std::int64_t> counts;  // bins * bins, row-major

  std::int64_t& at(int ia, int ib) { return counts[static_cast<std::size_t>(ia) * bins + ib]; }
  std::int64_t at(int ia, int ib) const { return counts[static_cast<std::size_t>(ia) * bins + ib]; }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  double a_width() const { return (a_max - a_min) / bins; }
  double b_width() const { return (b_max - b_min) / bins; }

  static int bin_of(double v, double lo, double hi, int bins) {
    if (hi <= lo) return 0;
    return std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1);
  }
};

inline JointHistogram joint_intensity_histogram(const Volume& a, const Volume& b, int bins, const Mask& mask) {
  if (a.shape() != b.shape() || a.shape() != mask.shape())
    throw Error(ErrorKind::shape_mismatch, "histogram: volume and mask shapes differ");
  if (bins < 2) throw Error(ErrorKind::invalid_argument, "histogram needs at least 2 bins");
  JointHistogram h;
  h.bins = bins;
  h.counts.assign(static_cast<std::size_t>(bins) * bins, 0);
  bool seen = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask[i]) continue;
    if (!seen) {
      h.a_min = h.a_max = a[i];
      h.b_min = h.b_max = b[i];
      seen = true;
    }
    h.a_min = std::min<double>(h.a_min, a[i]);
    h.a_max = std::max<double>(h.a_max, a[i]);
    h.b_min = std::min<double>(h.b_min, b[i]);
    h.b_max = std::max<double>(h.b_max, b[i]);
  }
  if (!seen) throw Error(ErrorKind::degenerate_input, "histogram mask is empty");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i])
      ++h.at(JointHistogram::bin_of(a[i], h.a_min, h.a_max, bins), JointHistogram::bin_of(b[i], h.b_min, h.b_max, bins));
  return h;
}

/// bins x bins counts, one row per a-bin, preceded by a comment line with the value ranges.
inline void write_histogram_csv(std::ostream& os, const JointHistogram& h) {
  os << "# a_range=[" << h.a_min << "," << h.a_max << "] b_range=[" << h.b_min << "," << h.b_max << "]\n";
  for (int i = 0; i < h.bins; ++i) {
    for (int j = 0; j < h.bins; ++j) os << (j ? "," : "") << h.at(i, j);
    os << '\n';
  }
}

/// Log-scaled grayscale PGM; a on the abscissa, b on the ordinate (increasing upwards).
inline void write_histogram_pgm(const std::filesystem::path& path, const JointHistogram& h) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::int64_t peak = 1;
  for (auto c : h.counts) peak = std::max(peak, c);
  os << "P5\n" << h.bins << ' ' << h.bins << "\n255\n";
  for (int row = h.bins - 1; row >= 0; --row)
    for (int col = 0; col < h.bins; ++col) {
      const auto c = h.at(col, row);
      const double v = c == 0 ? 0.0 : std::log1p(double(c)) / std::log1p(double(peak));
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
}

}  // namespace trifuse::metrics
