#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include <json.hpp>

#include "test_support.hpp"
#include "vcf/error.hpp"
#include "vcf/image_io.hpp"
#include "vcf/phantom.hpp"
#include "vcf/rng.hpp"
#include "vcf/volume.hpp"

using namespace vcf;
using vcf::testing::TempDir;

namespace {

Volume random_volume(Dims d, std::uint64_t seed) {
  Rng rng(seed);
  Volume v(d, {0.7, 0.8, 1.25});
  for (auto& x : v.voxels()) x = static_cast<std::int16_t>(kMinHu + static_cast<int>(rng.below(kMaxHu - kMinHu + 1)));
  return v;
}

std::string file_bytes(const std::filesystem::path& p) { return read_file(p); }

}  // namespace

TEST(Volume, IndexIsXFastestThenYThenZ) {
  Volume v({8, 9, 10}, {1, 1, 1});
  EXPECT_EQ(v.index(1, 0, 0), 1u);
  EXPECT_EQ(v.index(0, 1, 0), 8u);
  EXPECT_EQ(v.index(0, 0, 1), 72u);
  EXPECT_EQ(v.voxels().size(), 720u);
}

TEST(Volume, ValidateRejectsOutOfRangeValues) {
  Volume v({8, 8, 8}, {1, 1, 1}, 0);
  EXPECT_NO_THROW(v.validate());
  v.at(3, 3, 3) = 3072;
  EXPECT_THROW(v.validate(), std::invalid_argument);
  v.at(3, 3, 3) = -1025;
  EXPECT_THROW(v.validate(), std::invalid_argument);
  EXPECT_THROW(Volume({7, 8, 8}, {1, 1, 1}).validate(), std::invalid_argument);
  EXPECT_THROW(Volume({8, 8, 8}, {1, 0, 1}).validate(), std::invalid_argument);
}

TEST(VolumeIo, RoundTripRandom16Cubed) {
  TempDir dir;
  const auto v = random_volume({16, 16, 16}, 7);
  save_volume(v, dir / "r.vvol.json");
  EXPECT_EQ(load_volume(dir / "r.vvol.json"), v);
  // Path given without suffix resolves to the same pair of files.
  EXPECT_EQ(load_volume(dir / "r"), v);
}

TEST(VolumeIo, RoundTripPropertyOverRandomShapes) {
  TempDir dir;
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims d{8 + static_cast<int>(rng.below(9)), 8 + static_cast<int>(rng.below(9)), 8 + static_cast<int>(rng.below(9))};
    const auto v = random_volume(d, 1000 + trial);
    save_volume(v, dir / "p");
    ASSERT_EQ(load_volume(dir / "p"), v) << "trial " << trial;
  }
}

TEST(VolumeIo, RawFileSizeIsTwoBytesPerVoxel) {
  TempDir dir;
  save_volume(random_volume({16, 16, 16}, 3), dir / "s");
  EXPECT_EQ(std::filesystem::file_size(dir / "s.vvol.raw"), 8192u);
}

TEST(VolumeIo, HeaderMatchesDocumentedLayout) {
  TempDir dir;
  Volume v({8, 9, 10}, {0.5, 0.75, 2.0}, 0);
  save_volume(v, dir / "h");
  const std::string text = file_bytes(dir / "h.vvol.json");
  const auto j = nlohmann::ordered_json::parse(text);
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"version", "dims", "spacing_mm", "dtype", "order"}));
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["dims"], nlohmann::json::array({8, 9, 10}));
  EXPECT_EQ(j["spacing_mm"][2], 2.0);
  EXPECT_EQ(j["dtype"], "int16le");
  EXPECT_EQ(j["order"], "x-fastest");
}

TEST(VolumeIo, RawIsLittleEndianXFastest) {
  TempDir dir;
  Volume v({8, 8, 8}, {1, 1, 1}, 0);
  v.at(1, 0, 0) = 0x0102;
  v.at(0, 0, 1) = -2;
  save_volume(v, dir / "e");
  const std::string raw = file_bytes(dir / "e.vvol.raw");
  EXPECT_EQ(static_cast<unsigned char>(raw[2]), 0x02);
  EXPECT_EQ(static_cast<unsigned char>(raw[3]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(raw[128]), 0xFE);
  EXPECT_EQ(static_cast<unsigned char>(raw[129]), 0xFF);
}

TEST(VolumeIo, SizeMismatchIsReported) {
  TempDir dir;
  save_volume(Volume({8, 8, 8}, {1, 1, 1}, 0), dir / "m");
  std::string raw = file_bytes(dir / "m.vvol.raw");
  raw.resize(511 * 2);
  std::ofstream(dir / "m.vvol.raw", std::ios::binary).write(raw.data(), static_cast<std::streamsize>(raw.size()));
  EXPECT_THROW(load_volume(dir / "m"), IoError);
}

TEST(VolumeIo, MissingFilesAndBadHeaders) {
  TempDir dir;
  EXPECT_THROW(load_volume(dir / "absent"), IoError);
  save_volume(Volume({8, 8, 8}, {1, 1, 1}, 0), dir / "b");
  std::ofstream(dir / "b.vvol.json") << R"({"version":1,"dims":[8,8,4],"spacing_mm":[1,1,1],"dtype":"int16le","order":"x-fastest"})";
  EXPECT_THROW(load_volume(dir / "b"), IoError);
  std::ofstream(dir / "b.vvol.json") << R"({"version":1,"dims":[8,8,8],"spacing_mm":[1,-1,1],"dtype":"int16le","order":"x-fastest"})";
  EXPECT_THROW(load_volume(dir / "b"), IoError);
  std::ofstream(dir / "b.vvol.json") << "not json";
  EXPECT_THROW(load_volume(dir / "b"), IoError);
}

TEST(VolumeIo, SaveRejectsInvalidVolumeAndUnwritablePath) {
  TempDir dir;
  Volume bad({8, 8, 8}, {1, 1, 1}, 0);
  bad.at(0, 0, 0) = 3072;
  EXPECT_THROW(save_volume(bad, dir / "x"), std::invalid_argument);
  EXPECT_THROW(save_volume(Volume({8, 8, 8}, {1, 1, 1}, 0), dir / "no" / "such" / "dir" / "v"), IoError);
}

TEST(VolumeIo, SavingTwiceGivesIdenticalBytes) {
  TempDir dir;
  const auto v = random_volume({12, 10, 9}, 5);
  save_volume(v, dir / "a");
  save_volume(v, dir / "b");
  EXPECT_EQ(file_bytes(dir / "a.vvol.raw"), file_bytes(dir / "b.vvol.raw"));
  EXPECT_EQ(file_bytes(dir / "a.vvol.json"), file_bytes(dir / "b.vvol.json"));
}

TEST(VolumeIo, DefaultPhantomRoundTripsByteForByte) {
  TempDir dir;
  const auto ph = phantom::generate_phantom(phantom::PhantomSpec{});
  ASSERT_EQ(ph.volume.dims(), (Dims{96, 96, 192}));
  save_volume(ph.volume, dir / "ph");
  const auto back = load_volume(dir / "ph");
  EXPECT_EQ(back, ph.volume);
  save_volume(back, dir / "ph2");
  EXPECT_EQ(file_bytes(dir / "ph.vvol.raw"), file_bytes(dir / "ph2.vvol.raw"));
  // Independent byte oracle: the raw file is the voxel array in little-endian order.
  const std::string raw = file_bytes(dir / "ph.vvol.raw");
  ASSERT_EQ(raw.size(), ph.volume.voxels().size() * 2);
  std::uint64_t sum_file = 0, sum_mem = 0;
  for (std::size_t i = 0; i < ph.volume.voxels().size(); ++i) {
    const auto lo = static_cast<unsigned char>(raw[2 * i]), hi = static_cast<unsigned char>(raw[2 * i + 1]);
    sum_file += static_cast<std::uint16_t>(lo | (hi << 8)) * (i % 251 + 1);
    sum_mem += static_cast<std::uint16_t>(ph.volume.voxels()[i]) * (i % 251 + 1);
  }
  EXPECT_EQ(sum_file, sum_mem);
}

TEST(Slice, ConstantVolumeGivesConstantSlices) {
  Volume v({8, 9, 10}, {1, 1, 1}, 77);
  for (auto plane : {Plane::Axial, Plane::Coronal, Plane::Sagittal}) {
    const auto s = slice(v, plane, 3);
    EXPECT_TRUE(std::all_of(s.pixels.begin(), s.pixels.end(), [](auto p) { return p == 77; }));
  }
}

TEST(Slice, ShapesFollowTheFreeAxes) {
  Volume v({8, 9, 10}, {1, 1, 1}, 0);
  const auto a = slice(v, Plane::Axial, 0), c = slice(v, Plane::Coronal, 0), s = slice(v, Plane::Sagittal, 0);
  EXPECT_EQ(std::pair(a.rows, a.cols), std::pair(9, 8));
  EXPECT_EQ(std::pair(c.rows, c.cols), std::pair(10, 8));
  EXPECT_EQ(std::pair(s.rows, s.cols), std::pair(10, 9));
}

TEST(Slice, IndexOutOfRangeThrows) {
  Volume v({8, 9, 10}, {1, 1, 1}, 0);
  EXPECT_THROW(slice(v, Plane::Sagittal, 8), std::out_of_range);
  EXPECT_THROW(slice(v, Plane::Coronal, 9), std::out_of_range);
  EXPECT_THROW(slice(v, Plane::Axial, -1), std::out_of_range);
  EXPECT_NO_THROW(slice(v, Plane::Axial, 9));
}

TEST(Slice, MarkedVoxelLandsAtMappedCoordinate) {
  Volume v({8, 9, 10}, {1, 1, 1}, 0);
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int x = static_cast<int>(rng.below(8)), y = static_cast<int>(rng.below(9)), z = static_cast<int>(rng.below(10));
    std::fill(v.voxels().begin(), v.voxels().end(), 0);
    v.at(x, y, z) = 1000;
    EXPECT_EQ(slice(v, Plane::Axial, z).at(y, x), 1000);
    EXPECT_EQ(slice(v, Plane::Coronal, y).at(z, x), 1000);
    EXPECT_EQ(slice(v, Plane::Sagittal, x).at(z, y), 1000);
    const auto s = slice(v, Plane::Sagittal, x);
    EXPECT_EQ(std::count(s.pixels.begin(), s.pixels.end(), 1000), 1);
  }
}

TEST(Slice, AxialSlicesPartitionTheVolume) {
  const auto v = random_volume({9, 8, 11}, 12);
  long long total = std::accumulate(v.voxels().begin(), v.voxels().end(), 0LL);
  long long from_slices = 0;
  for (int z = 0; z < 11; ++z) {
    const auto s = slice(v, Plane::Axial, z);
    from_slices += std::accumulate(s.pixels.begin(), s.pixels.end(), 0LL);
  }
  EXPECT_EQ(from_slices, total);
}

TEST(Pgm, EncodesHeaderAndPixels) {
  const std::vector<std::uint8_t> px{0, 128, 255, 7, 8, 9};
  const auto bytes = encode_pgm(3, 2, px);
  EXPECT_EQ(bytes.substr(0, 11), "P5\n3 2\n255\n");
  EXPECT_EQ(bytes.size(), 11u + 6u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 255);
  EXPECT_EQ(to_grey(-5.0, 0.0, 10.0), 0);
  EXPECT_EQ(to_grey(20.0, 0.0, 10.0), 255);
}

TEST(Rng, SameSeedSameStreamAndUniformRange) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
}
