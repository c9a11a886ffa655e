#pragma once

// MMV container: one multi-modal sample per file, little-endian.
//
//   "MMV1" | u32 modality count (4) | u32 D, H, W | f32 spacing[3]
//   | 4 x D*H*W f32 modality payloads | D*H*W u8 label payload
//   | u32 CRC32 (zlib polynomial) of all preceding bytes

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <iterator>
#include <string>
#include <vector>

#include "trifuse/volume.hpp"

namespace trifuse::data {

static_assert(std::endian::native == std::endian::little, "MMV I/O assumes a little-endian host");

inline constexpr char kMmvMagic[4] = {'M', 'M', 'V', '1'};
inline constexpr std::size_t kMmvHeaderBytes = 4 + 4 + 3 * 4 + 3 * 4;

namespace detail {

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; chunk to stay portable for large payloads.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
void put(std::vector<std::uint8_t>& buf, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& buf, std::size_t& off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_mmv(const MultiModalSample& s) {
  s.validate();
  const Shape& sh = s.label.shape();
  const Spacing& sp = s.label.spacing();
  const auto n = static_cast<std::size_t>(sh.voxels());

  std::vector<std::uint8_t> buf;
  buf.reserve(kMmvHeaderBytes + n * (4 * kModalityCount + 1) + 4);
  buf.insert(buf.end(), std::begin(kMmvMagic), std::end(kMmvMagic));
  detail::put<std::uint32_t>(buf, kModalityCount);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(sh.d));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(sh.h));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(sh.w));
  detail::put<float>(buf, static_cast<float>(sp.d));
  detail::put<float>(buf, static_cast<float>(sp.h));
  detail::put<float>(buf, static_cast<float>(sp.w));
  for (const auto& m : s.modalities) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(m.values().data());
    buf.insert(buf.end(), p, p + n * sizeof(float));
  }
  buf.insert(buf.end(), s.label.values().begin(), s.label.values().end());
  detail::put<std::uint32_t>(buf, detail::crc32_of(buf.data(), buf.size()));
  return buf;
}

/// Decodes an MMV byte stream. Spacing is stored as f32, so samples whose
/// spacing is not exactly representable in f32 do not round-trip.
inline MultiModalSample decode_mmv(const std::vector<std::uint8_t>& buf, std::string id = {}) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kMmvMagic, 4) != 0)
    throw Error(ErrorKind::bad_magic, "not an MMV1 file");
  if (buf.size() < kMmvHeaderBytes + 4)
    throw Error(ErrorKind::truncated, "header is incomplete");
  std::size_t off = 4;
  const auto count = detail::get<std::uint32_t>(buf, off);
  if (count != kModalityCount)
    throw Error(ErrorKind::unsupported_modality_count,
                "header declares " + std::to_string(count) + " modalities, expected 4");
  const auto d = detail::get<std::uint32_t>(buf, off);
  const auto h = detail::get<std::uint32_t>(buf, off);
  const auto w = detail::get<std::uint32_t>(buf, off);
  if (d == 0 || h == 0 || w == 0) throw Error(ErrorKind::shape_mismatch, "zero extent in header");
  const Spacing sp{detail::get<float>(buf, off), detail::get<float>(buf, off),
                   detail::get<float>(buf, off)};
  const std::uint64_t n = std::uint64_t(d) * h * w;
  const std::uint64_t expected = kMmvHeaderBytes + n * (4 * kModalityCount + 1) + 4;
  if (buf.size() < expected)
    throw Error(ErrorKind::truncated, "payload has " + std::to_string(buf.size()) +
                                          " bytes, header implies " + std::to_string(expected));
  if (buf.size() > expected)
    throw Error(ErrorKind::shape_mismatch, "payload has " + std::to_string(buf.size() - expected) +
                                               " trailing bytes beyond the declared shape");
  const std::size_t crc_off = expected - 4;
  std::size_t tail = crc_off;
  if (detail::get<std::uint32_t>(buf, tail) != detail::crc32_of(buf.data(), crc_off))
    throw Error(ErrorKind::checksum, "CRC32 does not match payload");

  const Shape shape{std::int64_t(d), std::int64_t(h), std::int64_t(w)};
  MultiModalSample s;
  s.id = std::move(id);
  for (auto& m : s.modalities) {
    std::vector<float> v(n);
    std::memcpy(v.data(), buf.data() + off, n * sizeof(float));
    off += n * sizeof(float);
    m = Volume(shape, sp, std::move(v));
  }
  std::vector<std::uint8_t> lab(buf.begin() + static_cast<std::ptrdiff_t>(off),
                                buf.begin() + static_cast<std::ptrdiff_t>(off + n));
  s.label = LabelVolume(shape, sp, std::move(lab));
  s.validate();
  return s;
}

inline void write_mmv(const MultiModalSample& s, const std::filesystem::path& path) {
  const auto buf = encode_mmv(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

/// The sample id is taken from the file stem.
inline MultiModalSample read_mmv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_mmv(buf, path.stem().string());
}

/// All `*.mmv` files of a directory in lexicographic path order.
inline std::vector<MultiModalSample> read_mmv_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::io, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".mmv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::io, "no .mmv files in " + dir.string());
  std::vector<MultiModalSample> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_mmv(f));
  return out;
}

}  // namespace trifuse::data
