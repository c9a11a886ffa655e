#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "trifuse/data/mmv.hpp"
#include "trifuse/data/nifti.hpp"
#include "trifuse/data/preprocess.hpp"
#include "trifuse/data/synthetic.hpp"

using namespace trifuse;
using namespace trifuse::data;

namespace {

const Shape k32{32, 32, 32};

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no trifuse::Error thrown";
  return ErrorKind::io;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "trifuse_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Synthetic, DeterministicForFixedSeed) {
  const auto a = generate_synthetic_sample(7, k32);
  const auto b = generate_synthetic_sample(7, k32);
  EXPECT_TRUE(a == b);
}

TEST(Synthetic, DifferentSeedsGiveDifferentLabels) {
  const auto a = generate_synthetic_sample(7, k32);
  const auto b = generate_synthetic_sample(8, k32);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.label.size(); ++i) differing += a.label[i] != b.label[i];
  EXPECT_GT(differing, 0u);
}

TEST(Synthetic, RegionsNestAndAreNonEmptyOverTwentySeeds) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto s = generate_synthetic_sample(seed, k32);
    const auto r = region_masks(s.label);
    std::size_t et = 0;
    for (std::size_t i = 0; i < s.label.size(); ++i) {
      EXPECT_TRUE(is_valid_label(s.label[i]));
      EXPECT_TRUE(!r.et[i] || r.tc[i]) << "seed " << seed;
      EXPECT_TRUE(!r.tc[i] || r.wt[i]) << "seed " << seed;
      et += r.et[i];
    }
    EXPECT_GT(et, 0u) << "seed " << seed;
  }
}

TEST(Synthetic, NoiselessTransferIsExactInsideWholeTumour) {
  auto spec = CorrelationSpec::defaults();
  spec.noise = 0.0;
  const auto s = generate_synthetic_sample(11, k32, spec);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < s.label.size(); ++i) {
    if (s.label[i] == 0) continue;
    const double t1 = s.modality(1)[i];
    EXPECT_EQ(s.modality(3)[i], static_cast<float>(0.35 * t1 * t1 + 0.40 * t1 + 0.10));
    const double t2 = s.modality(4)[i];
    EXPECT_EQ(t2, static_cast<float>(0.50 * t1 * t1 + -0.30 * t1 + 0.60));
    EXPECT_EQ(s.modality(2)[i], static_cast<float>(-0.15 * t2 * t2 + 1.30 * t2 + 0.20));
    ++checked;
  }
  EXPECT_GT(checked, 100u);
}

// Quadratic least squares via normal equations and Cramer's rule.
TEST(Synthetic, PlantedTransferRecoveredByLeastSquares) {
  auto spec = CorrelationSpec::defaults();
  spec.noise = 0.0;
  const auto s = generate_synthetic_sample(12, k32, spec);
  for (const auto& p : spec.pairs) {
    double m[3][3] = {}, r[3] = {};
    for (std::size_t i = 0; i < s.label.size(); ++i) {
      if (s.label[i] == 0) continue;
      const double x = s.modality(p.source)[i], y = s.modality(p.target)[i];
      const double f[3] = {x * x, x, 1.0};
      for (int a = 0; a < 3; ++a) {
        r[a] += f[a] * y;
        for (int b = 0; b < 3; ++b) m[a][b] += f[a] * f[b];
      }
    }
    auto det = [](double q[3][3]) {
      return q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) - q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0]) +
             q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0]);
    };
    const double d = det(m);
    double coef[3];
    for (int c = 0; c < 3; ++c) {
      double q[3][3];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) q[a][b] = b == c ? r[a] : m[a][b];
      coef[c] = det(q) / d;
    }
    EXPECT_NEAR(coef[0], p.a, 1e-6) << p.source << "->" << p.target;
    EXPECT_NEAR(coef[1], p.b, 1e-6) << p.source << "->" << p.target;
    EXPECT_NEAR(coef[2], p.c, 1e-6) << p.source << "->" << p.target;
  }
}

TEST(Synthetic, RejectsTooSmallShape) {
  EXPECT_EQ(kind_of([] { generate_synthetic_sample(1, {15, 32, 32}); }), ErrorKind::generation);
}

TEST(Synthetic, RejectsBadSpecs) {
  auto spec = CorrelationSpec::defaults();
  spec.pairs.push_back({2, 3, 0, 1, 0});
  EXPECT_EQ(kind_of([&] { generate_synthetic_sample(1, k32, spec); }), ErrorKind::invalid_argument);
  spec = CorrelationSpec::defaults();
  spec.pairs[0].target = 1;
  EXPECT_EQ(kind_of([&] { spec.validate(); }), ErrorKind::invalid_argument);
  spec = CorrelationSpec::defaults();
  spec.pairs[0].source = 5;
  EXPECT_EQ(kind_of([&] { spec.validate(); }), ErrorKind::invalid_argument);
  spec = CorrelationSpec::defaults();
  spec.noise = -1;
  EXPECT_EQ(kind_of([&] { spec.validate(); }), ErrorKind::invalid_argument);
}

TEST(Normalize, HandZScore) {
  Volume v({1, 1, 5}, {}, std::vector<float>{1, 0, 2, 0, 3});
  const auto n = normalize_intensity(v);
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(n[0], -1.0 / s, 1e-6);
  EXPECT_NEAR(n[2], 0.0, 1e-6);
  EXPECT_NEAR(n[4], 1.0 / s, 1e-6);
  EXPECT_NEAR(n[4], 1.2247449, 1e-6);
  EXPECT_EQ(n[1], 0.0f);
  EXPECT_EQ(n[3], 0.0f);
}

TEST(Normalize, MomentsOnSyntheticVolume) {
  const auto s = generate_synthetic_sample(3, k32);
  for (const auto& m : s.modalities) {
    const auto n = normalize_intensity(m);
    double sum = 0, sq = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0.0f) {
        EXPECT_EQ(n[i], 0.0f);
        continue;
      }
      sum += n[i];
      sq += double(n[i]) * n[i];
      ++k;
    }
    EXPECT_NEAR(sum / double(k), 0.0, 1e-5);
    EXPECT_NEAR(std::sqrt(sq / double(k)), 1.0, 1e-5);
  }
}

TEST(Normalize, DegenerateInputs) {
  Volume constant({2, 2, 2}, {}, 3.0f);
  const auto n = normalize_intensity(constant);
  for (float x : n.values()) EXPECT_EQ(x, 0.0f);
  EXPECT_EQ(kind_of([] { normalize_intensity(Volume({2, 2, 2})); }), ErrorKind::degenerate_input);
}

TEST(CropResize, IdentityWhenTargetIsBoundingBox) {
  Volume v({6, 6, 6});
  for (std::int64_t z = 1; z < 5; ++z)
    for (std::int64_t y = 2; y < 5; ++y)
      for (std::int64_t x = 0; x < 2; ++x) v.at(z, y, x) = float(1 + z * 100 + y * 10 + x);
  const auto out = crop_resize(v, {4, 3, 2});
  for (std::int64_t z = 0; z < 4; ++z)
    for (std::int64_t y = 0; y < 3; ++y)
      for (std::int64_t x = 0; x < 2; ++x) EXPECT_EQ(out.at(z, y, x), v.at(z + 1, y + 2, x));
}

TEST(CropResize, ConstantCubeStaysConstant) {
  Volume v({8, 8, 8}, {}, 1.0f);
  const auto out = crop_resize(v, {4, 4, 4});
  for (float x : out.values()) EXPECT_FLOAT_EQ(x, 1.0f);
  EXPECT_DOUBLE_EQ(out.spacing().d, 8.0 / 4.0);
}

TEST(CropResize, LabelsKeepTheirValueSet) {
  const auto s = generate_synthetic_sample(5, k32);
  const auto out = crop_resize(s.label, {13, 17, 11});
  for (auto v : out.values()) EXPECT_TRUE(is_valid_label(v));
  const auto whole = crop_resize(s, {16, 16, 16});
  whole.validate();
  EXPECT_EQ(whole.label.shape(), (Shape{16, 16, 16}));
}

TEST(CropResize, EmptyVolumeFails) {
  EXPECT_EQ(kind_of([] { crop_resize(Volume({4, 4, 4}), {2, 2, 2}); }), ErrorKind::degenerate_input);
  EXPECT_EQ(kind_of([] { crop_resize(LabelVolume({4, 4, 4}), {2, 2, 2}); }), ErrorKind::degenerate_input);
}

TEST(RegionMasks, SetMembership) {
  LabelVolume l({1, 1, 4}, {}, std::vector<std::uint8_t>{1, 2, 4, 0});
  const auto r = region_masks(l);
  EXPECT_EQ(r.wt.storage(), (std::vector<std::uint8_t>{1, 1, 1, 0}));
  EXPECT_EQ(r.tc.storage(), (std::vector<std::uint8_t>{1, 0, 1, 0}));
  EXPECT_EQ(r.et.storage(), (std::vector<std::uint8_t>{0, 0, 1, 0}));
}

TEST(RegionMasks, EmptyAndPointCases) {
  const auto empty = region_masks(LabelVolume({3, 3, 3}));
  for (auto* m : {&empty.wt, &empty.tc, &empty.et})
    for (auto v : m->values()) EXPECT_EQ(v, 0);
  LabelVolume point({3, 3, 3});
  point.at(1, 1, 1) = 4;
  const auto r = region_masks(point);
  for (auto* m : {&r.wt, &r.tc, &r.et}) EXPECT_EQ(m->at(1, 1, 1), 1);
}

TEST(RegionMasks, InvalidLabelNamesTheValue) {
  LabelVolume l({1, 1, 3}, {}, std::vector<std::uint8_t>{0, 3, 0});
  try {
    region_masks(l);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_label);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Mmv, RoundTripIsBitIdentical) {
  auto s = generate_synthetic_sample(21, {16, 20, 24});
  const auto path = temp_file("synthetic-21.mmv");
  write_mmv(s, path);
  const auto back = read_mmv(path);
  EXPECT_TRUE(back == s);
}

TEST(Mmv, DirectoryReadIsSorted) {
  auto dir = std::filesystem::temp_directory_path() / "trifuse_mmv_dir";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  for (std::uint64_t seed : {3, 1, 2}) {
    auto s = generate_synthetic_sample(seed, {16, 16, 16});
    write_mmv(s, dir / (s.id + ".mmv"));
  }
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto all = read_mmv_directory(dir);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].id, "synthetic-1");
  EXPECT_EQ(all[2].id, "synthetic-3");
}

TEST(Mmv, DistinctErrorKinds) {
  const auto good = encode_mmv(generate_synthetic_sample(2, {16, 16, 16}));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_mmv(bad_magic); }), ErrorKind::bad_magic);

  auto truncated = good;
  truncated.resize(good.size() - 10);
  EXPECT_EQ(kind_of([&] { decode_mmv(truncated); }), ErrorKind::truncated);

  auto five = good;
  five[4] = 5;
  EXPECT_EQ(kind_of([&] { decode_mmv(five); }), ErrorKind::unsupported_modality_count);

  auto longer = good;
  longer.insert(longer.end(), {0, 0, 0, 0});
  EXPECT_EQ(kind_of([&] { decode_mmv(longer); }), ErrorKind::shape_mismatch);

  auto flipped = good;
  flipped[100] ^= 0x01;
  EXPECT_EQ(kind_of([&] { decode_mmv(flipped); }), ErrorKind::checksum);
}

TEST(Mmv, HeaderLayout) {
  const auto s = generate_synthetic_sample(2, {16, 17, 18});
  const auto buf = encode_mmv(s);
  EXPECT_EQ(std::string(buf.begin(), buf.begin() + 4), "MMV1");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
  };
  EXPECT_EQ(u32(4), 4u);
  EXPECT_EQ(u32(8), 16u);
  EXPECT_EQ(u32(12), 17u);
  EXPECT_EQ(u32(16), 18u);
  EXPECT_EQ(buf.size(), 32u + 16u * 17u * 18u * 17u + 4u);
  EXPECT_EQ(u32(buf.size() - 4), static_cast<std::uint32_t>(::crc32(0, buf.data(), buf.size() - 4)));
}

namespace {

struct Expected {
  std::vector<std::int64_t> dims;  // x y z
  std::vector<double> zooms;
  std::vector<double> values;
};

Expected read_expected(const std::string& name) {
  std::ifstream in(std::string(TRIFUSE_TEST_DATA) + "/" + name + ".expected.txt");
  Expected e;
  std::string line;
  auto numbers = [&](auto& out) {
    std::getline(in, line);
    std::istringstream is(line);
    typename std::decay_t<decltype(out)>::value_type v;
    while (is >> v) out.push_back(v);
  };
  numbers(e.dims);
  numbers(e.zooms);
  numbers(e.values);
  return e;
}

}  // namespace

class NiftiReference : public ::testing::TestWithParam<const char*> {};

TEST_P(NiftiReference, MatchesIndependentWriter) {
  const std::string name = GetParam();
  const auto e = read_expected(name);
  const auto v = read_nifti(std::string(TRIFUSE_TEST_DATA) + "/" + name + ".nii");
  ASSERT_EQ(e.dims.size(), 3u);
  EXPECT_EQ(v.shape(), (Shape{e.dims[2], e.dims[1], e.dims[0]}));
  EXPECT_DOUBLE_EQ(v.spacing().w, e.zooms[0]);
  EXPECT_DOUBLE_EQ(v.spacing().h, e.zooms[1]);
  EXPECT_DOUBLE_EQ(v.spacing().d, e.zooms[2]);
  ASSERT_EQ(v.size(), e.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_FLOAT_EQ(v[i], static_cast<float>(e.values[i])) << i;
}

INSTANTIATE_TEST_SUITE_P(Fixtures, NiftiReference,
                         ::testing::Values("ref_int16_4x4x4", "ref_float32_2x3x5", "ref_uint8_scaled"));

TEST(Nifti, CoordinateEncodingMapsAxes) {
  // Fixture voxel (x, y, z) holds 100x + 10y + z.
  const auto v = read_nifti(std::string(TRIFUSE_TEST_DATA) + "/ref_int16_4x4x4.nii");
  EXPECT_EQ(v.shape(), (Shape{4, 4, 4}));
  EXPECT_EQ(v.at(3, 2, 1), 100.0f * 1 + 10.0f * 2 + 3);
  EXPECT_DOUBLE_EQ(v.spacing().d, 2.5);
  EXPECT_DOUBLE_EQ(v.spacing().w, 1.5);
}

TEST(Nifti, ZeroSlopePassesRawValues) {
  const auto v = read_nifti(std::string(TRIFUSE_TEST_DATA) + "/ref_int16_slope0.nii");
  EXPECT_EQ(v.at(0, 0, 0), 0.0f);
  EXPECT_EQ(v.at(3, 2, 1), 123.0f);
}

TEST(Nifti, RejectsUnsupportedInputs) {
  const std::string dir = TRIFUSE_TEST_DATA;
  EXPECT_EQ(kind_of([&] { read_nifti(dir + "/ref_4d.nii"); }), ErrorKind::unsupported_dimensionality);
  EXPECT_EQ(kind_of([&] { read_nifti(dir + "/ref_float64.nii"); }), ErrorKind::unsupported_datatype);
  EXPECT_EQ(kind_of([&] { read_nifti(dir + "/missing.nii.gz"); }), ErrorKind::unsupported_format);

  auto buf = slurp(dir + "/ref_int16_4x4x4.nii");
  auto two_file = buf;
  std::memcpy(two_file.data() + 344, "ni1\0", 4);
  EXPECT_EQ(kind_of([&] { parse_nifti(two_file); }), ErrorKind::unsupported_format);
  auto bad_size = buf;
  bad_size[0] = 0x5d;
  EXPECT_EQ(kind_of([&] { parse_nifti(bad_size); }), ErrorKind::bad_header_size);
  auto bad_magic = buf;
  std::memcpy(bad_magic.data() + 344, "abc\0", 4);
  EXPECT_EQ(kind_of([&] { parse_nifti(bad_magic); }), ErrorKind::unsupported_format);
  auto truncated = buf;
  truncated.resize(400);
  EXPECT_EQ(kind_of([&] { parse_nifti(truncated); }), ErrorKind::truncated);
}
