#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trifuse/error.hpp"

namespace trifuse {

/// Grid extent in (depth, height, width) order; width varies fastest in memory.
struct Shape {
  std::int64_t d = 1, h = 1, w = 1;

  std::int64_t voxels() const { return d * h * w; }
  std::array<std::int64_t, 3> as_array() const { return {d, h, w}; }
  bool operator==(const Shape&) const = default;
};

/// Voxel size in millimetres, same axis order as Shape.
struct Spacing {
  double d = 1.0, h = 1.0, w = 1.0;
  bool operator==(const Spacing&) const = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.d) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

/// A dense 3D scalar grid with physical spacing.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;

  Grid(Shape shape, Spacing spacing = {}, T fill = T{})
      : shape_(shape), spacing_(spacing) {
    validate_geometry(shape_, spacing_);
    values_.assign(static_cast<std::size_t>(shape_.voxels()), fill);
  }

  Grid(Shape shape, Spacing spacing, std::vector<T> values)
      : shape_(shape), spacing_(spacing), values_(std::move(values)) {
    validate_geometry(shape_, spacing_);
    if (static_cast<std::int64_t>(values_.size()) != shape_.voxels())
      throw Error(ErrorKind::shape_mismatch,
                  "value count " + std::to_string(values_.size()) + " does not match shape " +
                      to_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>((z * shape_.h + y) * shape_.w + x);
  }
  T& at(std::int64_t z, std::int64_t y, std::int64_t x) { return values_[index(z, y, x)]; }
  const T& at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return values_[index(z, y, x)];
  }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const Grid&) const = default;

 private:
  static void validate_geometry(const Shape& s, const Spacing& sp) {
    if (s.d < 1 || s.h < 1 || s.w < 1)
      throw Error(ErrorKind::invalid_argument, "shape components must be >= 1, got " + to_string(s));
    if (!(sp.d > 0.0 && sp.h > 0.0 && sp.w > 0.0))
      throw Error(ErrorKind::invalid_argument, "spacing components must be > 0");
  }

  Shape shape_{};
  Spacing spacing_{};
  std::vector<T> values_{1, T{}};
};

/// Intensity volume.
using Volume = Grid<float>;
/// Label map with BraTS encoding {0, 1, 2, 4}.
using LabelVolume = Grid<std::uint8_t>;
/// Binary region mask (0 or 1).
using Mask = Grid<std::uint8_t>;

inline constexpr int kModalityCount = 4;

/// 1-based modality indices in sample order.
enum class Modality : int { t1 = 1, flair = 2, t1c = 3, t2 = 4 };

inline const char* modality_name(int index) {
  switch (index) {
    case 1: return "T1";
    case 2: return "FLAIR";
    case 3: return "T1c";
    case 4: return "T2";
  }
  return "?";
}

inline bool is_valid_label(std::uint8_t v) { return v == 0 || v == 1 || v == 2 || v == 4; }

/// Four co-registered modality volumes plus their label map.
struct MultiModalSample {
  std::string id;
  std::array<Volume, kModalityCount> modalities;  // T1, FLAIR, T1c, T2
  LabelVolume label;

  const Volume& modality(int one_based) const { return modalities.at(one_based - 1); }
  Volume& modality(int one_based) { return modalities.at(one_based - 1); }

  bool operator==(const MultiModalSample&) const = default;

  /// Throws unless all five volumes share shape and spacing and labels are valid.
  void validate() const {
    for (const auto& m : modalities) {
      if (m.shape() != label.shape() || m.spacing() != label.spacing())
        throw Error(ErrorKind::shape_mismatch,
                    "sample '" + id + "': modality geometry differs from label geometry");
    }
    for (auto v : label.values())
      if (!is_valid_label(v))
        throw Error(ErrorKind::invalid_label, "label value " + std::to_string(int(v)));
  }
};

}  // namespace trifuse
