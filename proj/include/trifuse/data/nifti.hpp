#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "trifuse/volume.hpp"

namespace trifuse::data {

namespace nifti {

inline constexpr std::int32_t kHeaderSize = 348;
inline constexpr std::int16_t kUint8 = 2;
inline constexpr std::int16_t kInt16 = 4;
inline constexpr std::int16_t kFloat32 = 16;

// Byte offsets of the NIfTI-1 header fields used here.
inline constexpr std::size_t kDimOffset = 40;
inline constexpr std::size_t kDatatypeOffset = 70;
inline constexpr std::size_t kPixdimOffset = 76;
inline constexpr std::size_t kVoxOffsetOffset = 108;
inline constexpr std::size_t kSclSlopeOffset = 112;
inline constexpr std::size_t kSclInterOffset = 116;
inline constexpr std::size_t kMagicOffset = 344;

template <class T>
T field(const std::vector<std::uint8_t>& buf, std::size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

}  // namespace nifti

/// Parses a single-file little-endian NIfTI-1 image into a Volume.
/// Header dim[1..3] = (x, y, z) maps to Shape (d, h, w) = (z, y, x), which keeps
/// x fastest in memory on both sides; pixdim maps the same way.
inline Volume parse_nifti(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < static_cast<std::size_t>(nifti::kHeaderSize))
    throw Error(ErrorKind::truncated, "file shorter than a NIfTI-1 header");
  const auto sizeof_hdr = nifti::field<std::int32_t>(buf, 0);
  if (sizeof_hdr != nifti::kHeaderSize)
    throw Error(ErrorKind::bad_header_size, "sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");
  if (std::memcmp(buf.data() + nifti::kMagicOffset, "n+1\0", 4) != 0) {
    if (std::memcmp(buf.data() + nifti::kMagicOffset, "ni1\0", 4) == 0)
      throw Error(ErrorKind::unsupported_format, "two-file NIfTI (.hdr/.img) is not supported");
    throw Error(ErrorKind::unsupported_format, "magic is not \"n+1\"");
  }

  std::int16_t dim[8];
  std::memcpy(dim, buf.data() + nifti::kDimOffset, sizeof dim);
  if (dim[0] < 3 || dim[0] > 7)
    throw Error(ErrorKind::unsupported_dimensionality, "dim[0] = " + std::to_string(dim[0]));
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] != 1)
      throw Error(ErrorKind::unsupported_dimensionality,
                  "only 3D images are supported (dim[" + std::to_string(i) + "] = " + std::to_string(dim[i]) + ")");
  for (int i = 1; i <= 3; ++i)
    if (dim[i] < 1)
      throw Error(ErrorKind::unsupported_dimensionality, "dim[" + std::to_string(i) + "] < 1");

  const auto datatype = nifti::field<std::int16_t>(buf, nifti::kDatatypeOffset);
  std::size_t elem = 0;
  switch (datatype) {
    case nifti::kUint8: elem = 1; break;
    case nifti::kInt16: elem = 2; break;
    case nifti::kFloat32: elem = 4; break;
    default:
      throw Error(ErrorKind::unsupported_datatype, "datatype code " + std::to_string(datatype));
  }

  float pixdim[8];
  std::memcpy(pixdim, buf.data() + nifti::kPixdimOffset, sizeof pixdim);
  const auto vox_offset = static_cast<std::size_t>(nifti::field<float>(buf, nifti::kVoxOffsetOffset));
  const float slope = nifti::field<float>(buf, nifti::kSclSlopeOffset);
  const float inter = nifti::field<float>(buf, nifti::kSclInterOffset);
  // Writers store NaN as well as 0 for "no scaling".
  const bool scaled = std::isfinite(slope) && slope != 0.0f;

  const Shape shape{dim[3], dim[2], dim[1]};
  auto spacing_of = [](float p) { return p > 0.0f ? double(p) : 1.0; };
  const Spacing spacing{spacing_of(pixdim[3]), spacing_of(pixdim[2]), spacing_of(pixdim[1])};

  const auto n = static_cast<std::size_t>(shape.voxels());
  if (buf.size() < vox_offset + n * elem)
    throw Error(ErrorKind::truncated, "voxel payload shorter than dim[1..3] implies");

  std::vector<float> values(n);
  const std::uint8_t* p = buf.data() + vox_offset;
  for (std::size_t i = 0; i < n; ++i) {
    double raw = 0.0;
    switch (datatype) {
      case nifti::kUint8: raw = p[i]; break;
      case nifti::kInt16: {
        std::int16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        raw = v;
        break;
      }
      case nifti::kFloat32: {
        float v;
        std::memcpy(&v, p + 4 * i, 4);
        raw = v;
        break;
      }
    }
    values[i] = scaled ? static_cast<float>(raw * slope + inter) : static_cast<float>(raw);
  }
  return Volume(shape, spacing, std::move(values));
}

inline Volume read_nifti(const std::filesystem::path& path) {
  if (path.extension() == ".gz")
    throw Error(ErrorKind::unsupported_format, "compressed NIfTI is not supported: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_nifti(buf);
}

}  // namespace trifuse::data
