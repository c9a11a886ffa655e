#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "trifuse/volume.hpp"

namespace trifuse::data {

/// Z-score over the nonzero-input voxel set (population std). Zero voxels stay 0.
/// A constant nonzero support maps to all zeros.
inline Volume normalize_intensity(const Volume& v) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (float x : v.values())
    if (x != 0.0f) {
      sum += x;
      ++n;
    }
  if (n == 0) throw Error(ErrorKind::degenerate_input, "cannot normalize an all-zero volume");
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (float x : v.values())
    if (x != 0.0f) sq += (x - mean) * (x - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(n));

  Volume out(v.shape(), v.spacing(), 0.0f);
  if (stddev == 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] != 0.0f) out[i] = static_cast<float>((v[i] - mean) / stddev);
  return out;
}

/// Inclusive voxel bounding box.
struct BoundingBox {
  std::int64_t z0, y0, x0, z1, y1, x1;

  Shape extent() const { return {z1 - z0 + 1, y1 - y0 + 1, x1 - x0 + 1}; }
  BoundingBox united(const BoundingBox& o) const {
    return {std::min(z0, o.z0), std::min(y0, o.y0), std::min(x0, o.x0),
            std::max(z1, o.z1), std::max(y1, o.y1), std::max(x1, o.x1)};
  }
};

template <class T>
std::optional<BoundingBox> nonzero_bbox(const Grid<T>& g) {
  const auto& s = g.shape();
  std::optional<BoundingBox> box;
  for (std::int64_t z = 0; z < s.d; ++z)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        if (g.at(z, y, x) == T{}) continue;
        if (!box) {
          box = BoundingBox{z, y, x, z, y, x};
        } else {
          box = box->united(BoundingBox{z, y, x, z, y, x});
        }
      }
  return box;
}

namespace detail {

// Corner-aligned source coordinate for destination index i.
inline double source_coord(std::int64_t i, std::int64_t n_src, std::int64_t n_dst) {
  if (n_dst == 1) return 0.5 * static_cast<double>(n_src - 1);
  return static_cast<double>(i) * static_cast<double>(n_src - 1) / static_cast<double>(n_dst - 1);
}

inline void check_target(const Shape& target) {
  if (target.d < 1 || target.h < 1 || target.w < 1)
    throw Error(ErrorKind::invalid_argument, "target shape components must be >= 1");
}

inline Spacing rescaled_spacing(const Spacing& sp, const Shape& from, const Shape& to) {
  return {sp.d * double(from.d) / double(to.d), sp.h * double(from.h) / double(to.h),
          sp.w * double(from.w) / double(to.w)};
}

}  // namespace detail

/// Trilinear resample of the box region of v onto target.
inline Volume resample_trilinear(const Volume& v, const BoundingBox& box, const Shape& target) {
  detail::check_target(target);
  const Shape ext = box.extent();
  Volume out(target, detail::rescaled_spacing(v.spacing(), ext, target));
  for (std::int64_t z = 0; z < target.d; ++z) {
    const double sz = detail::source_coord(z, ext.d, target.d);
    const auto z0 = static_cast<std::int64_t>(std::floor(sz));
    const auto z1 = std::min(z0 + 1, ext.d - 1);
    const double fz = sz - double(z0);
    for (std::int64_t y = 0; y < target.h; ++y) {
      const double sy = detail::source_coord(y, ext.h, target.h);
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const auto y1 = std::min(y0 + 1, ext.h - 1);
      const double fy = sy - double(y0);
      for (std::int64_t x = 0; x < target.w; ++x) {
        const double sx = detail::source_coord(x, ext.w, target.w);
        const auto x0 = static_cast<std::int64_t>(std::floor(sx));
        const auto x1 = std::min(x0 + 1, ext.w - 1);
        const double fx = sx - double(x0);
        auto s = [&](std::int64_t a, std::int64_t b, std::int64_t c) {
          return double(v.at(box.z0 + a, box.y0 + b, box.x0 + c));
        };
        const double c00 = s(z0, y0, x0) * (1 - fx) + s(z0, y0, x1) * fx;
        const double c01 = s(z0, y1, x0) * (1 - fx) + s(z0, y1, x1) * fx;
        const double c10 = s(z1, y0, x0) * (1 - fx) + s(z1, y0, x1) * fx;
        const double c11 = s(z1, y1, x0) * (1 - fx) + s(z1, y1, x1) * fx;
        const double c0 = c00 * (1 - fy) + c01 * fy;
        const double c1 = c10 * (1 - fy) + c11 * fy;
        out.at(z, y, x) = static_cast<float>(c0 * (1 - fz) + c1 * fz);
      }
    }
  }
  return out;
}

/// Nearest-neighbour resample; closed over the source value set.
template <class T>
Grid<T> resample_nearest(const Grid<T>& v, const BoundingBox& box, const Shape& target) {
  detail::check_target(target);
  const Shape ext = box.extent();
  Grid<T> out(target, detail::rescaled_spacing(v.spacing(), ext, target));
  auto nearest = [](double c, std::int64_t n) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::lround(c)), 0, n - 1);
  };
  for (std::int64_t z = 0; z < target.d; ++z) {
    const auto sz = nearest(detail::source_coord(z, ext.d, target.d), ext.d);
    for (std::int64_t y = 0; y < target.h; ++y) {
      const auto sy = nearest(detail::source_coord(y, ext.h, target.h), ext.h);
      for (std::int64_t x = 0; x < target.w; ++x) {
        const auto sx = nearest(detail::source_coord(x, ext.w, target.w), ext.w);
        out.at(z, y, x) = v.at(box.z0 + sz, box.y0 + sy, box.x0 + sx);
      }
    }
  }
  return out;
}

/// Crop an intensity volume to its tight nonzero bounding box and resample it trilinearly.
inline Volume crop_resize(const Volume& v, const Shape& target) {
  detail::check_target(target);
  auto box = nonzero_bbox(v);
  if (!box) throw Error(ErrorKind::degenerate_input, "cannot crop an empty volume");
  return resample_trilinear(v, *box, target);
}

/// Crop a label volume to its tight nonzero bounding box and resample with nearest neighbour.
inline LabelVolume crop_resize(const LabelVolume& v, const Shape& target) {
  detail::check_target(target);
  auto box = nonzero_bbox(v);
  if (!box) throw Error(ErrorKind::degenerate_input, "cannot crop an empty label volume");
  return resample_nearest(v, *box, target);
}

/// Crop all volumes of a sample to the union of the modalities' nonzero support
/// and resample to target, keeping the five volumes aligned.
inline MultiModalSample crop_resize(const MultiModalSample& s, const Shape& target) {
  detail::check_target(target);
  std::optional<BoundingBox> box;
  for (const auto& m : s.modalities)
    if (auto b = nonzero_bbox(m)) box = box ? box->united(*b) : *b;
  if (!box) throw Error(ErrorKind::degenerate_input, "sample '" + s.id + "' has no nonzero voxels");
  MultiModalSample out;
  out.id = s.id;
  for (int i = 0; i < kModalityCount; ++i)
    out.modalities[i] = resample_trilinear(s.modalities[i], *box, target);
  out.label = resample_nearest(s.label, *box, target);
  return out;
}

/// Whole tumour, tumour core and enhancing tumour masks; ET ⊆ TC ⊆ WT.
struct RegionMasks {
  Mask wt, tc, et;
};

inline RegionMasks region_masks(const LabelVolume& label) {
  RegionMasks r{Mask(label.shape(), label.spacing()), Mask(label.shape(), label.spacing()),
                Mask(label.shape(), label.spacing())};
  for (std::size_t i = 0; i < label.size(); ++i) {
    const std::uint8_t v = label[i];
    if (!is_valid_label(v))
      throw Error(ErrorKind::invalid_label,
                  "label value " + std::to_string(int(v)) + " at voxel " + std::to_string(i) +
                      " is not one of {0, 1, 2, 4}");
    r.wt[i] = v != 0;
    r.tc[i] = v == 1 || v == 4;
    r.et[i] = v == 4;
  }
  return r;
}

}  // namespace trifuse::data
