#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "trifuse/rng.hpp"
#include "trifuse/volume.hpp"

namespace trifuse::data {

/// Quadratic intensity transfer target = a*x^2 + b*x + c applied inside the whole tumour.
struct IntensityTransfer {
  int source = 1;
  int target = 3;
  double a = 0.0, b = 1.0, c = 0.0;

  double apply(double x) const { return a * x * x + b * x + c; }
};

/// Planted inter-modality correlation used by the synthetic generator.
struct CorrelationSpec {
  std::vector<IntensityTransfer> pairs;
  double noise = 0.05;

  /// T1 -> T1c, T1 -> T2, T2 -> FLAIR; monotone on the generated T1 range (x > 0.5).
  static CorrelationSpec defaults() {
    return {{{1, 3, 0.35, 0.40, 0.10}, {1, 4, 0.50, -0.30, 0.60}, {4, 2, -0.15, 1.30, 0.20}},
            0.05};
  }

  void validate() const {
    if (!(noise >= 0.0)) throw Error(ErrorKind::invalid_argument, "noise must be >= 0");
    std::array<bool, kModalityCount + 1> targeted{};
    for (const auto& p : pairs) {
      if (p.source < 1 || p.source > kModalityCount || p.target < 1 || p.target > kModalityCount)
        throw Error(ErrorKind::invalid_argument, "correlation pair index outside 1..4");
      if (p.source == p.target)
        throw Error(ErrorKind::invalid_argument, "correlation pair indices must be distinct");
      if (p.target == 1)
        throw Error(ErrorKind::invalid_argument, "modality 1 is the generator root, not a target");
      if (targeted[p.target])
        throw Error(ErrorKind::invalid_argument,
                    "modality " + std::to_string(p.target) + " targeted twice");
      targeted[p.target] = true;
    }
  }
};

namespace detail {

struct SmoothField {
  struct Wave {
    double fz, fy, fx, phase, amp;
  };
  std::vector<Wave> waves;

  static SmoothField random(Rng& rng, int count, double amp) {
    SmoothField f;
    for (int i = 0; i < count; ++i)
      f.waves.push_back({rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5),
                         rng.uniform(0.0, 2.0 * std::numbers::pi), amp * rng.uniform(0.5, 1.0)});
    return f;
  }

  double operator()(double z, double y, double x, const Shape& s) const {
    double v = 0.0;
    for (const auto& w : waves)
      v += w.amp * std::cos(2.0 * std::numbers::pi *
                                (w.fz * z / double(s.d) + w.fy * y / double(s.h) +
                                 w.fx * x / double(s.w)) +
                            w.phase);
    return v / double(waves.size());
  }
};

struct Ellipsoid {
  double cz, cy, cx, rz, ry, rx;
  bool contains(double z, double y, double x) const {
    const double dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dz * dz + dy * dy + dx * dx <= 1.0;
  }
  Ellipsoid scaled(double sz, double sy, double sx) const {
    return {cz, cy, cx, rz * sz, ry * sy, rx * sx};
  }
};

}  // namespace detail

inline constexpr std::int64_t kMinSyntheticExtent = 16;

/// Deterministic synthetic 4-modality sample with three concentric ellipsoidal tumour
/// regions (label 2 outer, 1 middle, 4 inner) inside an ellipsoidal brain support.
inline MultiModalSample generate_synthetic_sample(std::uint64_t seed, const Shape& shape,
                                                  const CorrelationSpec& spec = CorrelationSpec::defaults()) {
  if (shape.d < kMinSyntheticExtent || shape.h < kMinSyntheticExtent || shape.w < kMinSyntheticExtent)
    throw Error(ErrorKind::generation, "shape " + to_string(shape) +
                                           " too small for three nested regions (need >= 16 per axis)");
  spec.validate();

  Rng geom(derive_seed(seed, "geometry"));
  Rng tex(derive_seed(seed, "texture"));
  Rng noise(derive_seed(seed, "noise"));

  const detail::Ellipsoid brain{(shape.d - 1) / 2.0, (shape.h - 1) / 2.0, (shape.w - 1) / 2.0,
                                0.46 * shape.d, 0.46 * shape.h, 0.46 * shape.w};
  // Centre on a voxel so the innermost region is never empty.
  const detail::Ellipsoid wt{
      double(geom.uniform_int(std::int64_t(0.38 * shape.d), std::int64_t(0.62 * shape.d))),
      double(geom.uniform_int(std::int64_t(0.38 * shape.h), std::int64_t(0.62 * shape.h))),
      double(geom.uniform_int(std::int64_t(0.38 * shape.w), std::int64_t(0.62 * shape.w))),
      geom.uniform(0.12, 0.21) * shape.d, geom.uniform(0.12, 0.21) * shape.h,
      geom.uniform(0.12, 0.21) * shape.w};
  const detail::Ellipsoid tc =
      wt.scaled(geom.uniform(0.5, 0.75), geom.uniform(0.5, 0.75), geom.uniform(0.5, 0.75));
  const detail::Ellipsoid et =
      tc.scaled(geom.uniform(0.4, 0.65), geom.uniform(0.4, 0.65), geom.uniform(0.4, 0.65));

  MultiModalSample s;
  s.id = "synthetic-" + std::to_string(seed);
  s.label = LabelVolume(shape, {});
  for (auto& m : s.modalities) m = Volume(shape, {});

  std::vector<std::uint8_t> in_brain(static_cast<std::size_t>(shape.voxels()), 0);
  for (std::int64_t z = 0; z < shape.d; ++z)
    for (std::int64_t y = 0; y < shape.h; ++y)
      for (std::int64_t x = 0; x < shape.w; ++x) {
        const double fz = double(z), fy = double(y), fx = double(x);
        const auto i = s.label.index(z, y, x);
        in_brain[i] = brain.contains(fz, fy, fx);
        std::uint8_t lab = 0;
        if (et.contains(fz, fy, fx)) lab = 4;
        else if (tc.contains(fz, fy, fx)) lab = 1;
        else if (wt.contains(fz, fy, fx)) lab = 2;
        s.label[i] = in_brain[i] ? lab : 0;
      }

  // Region offsets on top of a smooth base field drive T1.
  const auto base = detail::SmoothField::random(tex, 4, 0.25);
  auto region_offset = [](std::uint8_t lab) {
    switch (lab) {
      case 2: return 0.45;
      case 1: return 0.80;
      case 4: return 1.20;
    }
    return 0.0;
  };
  std::array<bool, kModalityCount + 1> derived{};
  derived[1] = true;
  for (const auto& p : spec.pairs) derived[p.target] = true;

  std::array<detail::SmoothField, kModalityCount + 1> background;
  for (int m = 1; m <= kModalityCount; ++m) background[m] = detail::SmoothField::random(tex, 4, 0.3);

  for (std::int64_t z = 0; z < shape.d; ++z)
    for (std::int64_t y = 0; y < shape.h; ++y)
      for (std::int64_t x = 0; x < shape.w; ++x) {
        const auto i = s.label.index(z, y, x);
        if (!in_brain[i]) continue;
        const double fz = double(z), fy = double(y), fx = double(x);
        s.modality(1)[i] = static_cast<float>(1.0 + base(fz, fy, fx, shape) + region_offset(s.label[i]));
        for (int m = 2; m <= kModalityCount; ++m) {
          // Independent texture everywhere; overwritten inside WT for derived modalities.
          double v = 1.0 + background[m](fz, fy, fx, shape);
          if (!derived[m]) v += region_offset(s.label[i]);
          s.modality(m)[i] = static_cast<float>(v);
        }
      }

  // Transfers in listed order; a source must already hold its final values.
  std::array<bool, kModalityCount + 1> ready{};
  ready[1] = true;
  for (const auto& p : spec.pairs) {
    if (!ready[p.source])
      throw Error(ErrorKind::invalid_argument,
                  "transfer source " + std::to_string(p.source) + " is not T1 or an earlier target");
    ready[p.target] = true;
    auto& dst = s.modality(p.target);
    const auto& src = s.modality(p.source);
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (s.label[i] != 0) dst[i] = static_cast<float>(p.apply(double(src[i])));
  }

  if (spec.noise > 0.0)
    for (int m = 2; m <= kModalityCount; ++m)
      for (std::size_t i = 0; i < s.modality(m).size(); ++i) {
        const double n = noise.normal();
        if (in_brain[i]) s.modality(m)[i] = static_cast<float>(s.modality(m)[i] + spec.noise * n);
      }
  return s;
}

}  // namespace trifuse::data
