#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <unistd.h>

#include "test_util.hpp"
#include "vesselforge/raster_io.hpp"

namespace fs = std::filesystem;
using namespace vf;

namespace {

class RasterIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("vf_raster_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

void write_bytes(const fs::path& p, const std::string& header, const std::vector<std::uint8_t>& payload) {
  std::ofstream out(p, std::ios::binary);
  out << header;
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

TEST_F(RasterIoTest, LoadsTinyPgmVerbatim) {
  write_bytes(dir_ / "a.pgm", "P5\n# comment\n2 2\n255\n", {0, 64, 128, 255});
  const Raster r = load_raster(dir_ / "a.pgm");
  EXPECT_EQ(r, Raster(2, 2, 1, std::vector<std::uint8_t>{0, 64, 128, 255}));
}

TEST_F(RasterIoTest, TruncatedPpmIsCorrupt) {
  write_bytes(dir_ / "t.ppm", "P6\n4 4\n255\n", std::vector<std::uint8_t>(20, 9));
  try {
    load_raster(dir_ / "t.ppm");
    FAIL() << "expected CorruptImage";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorruptImage);
  }
}

TEST_F(RasterIoTest, MissingFileAndUnsupportedFormats) {
  try {
    load_raster(dir_ / "nope.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FileNotFound);
  }
  write_bytes(dir_ / "x.pgm", "P2\n1 1\n255\n7\n", {});
  try {
    load_raster(dir_ / "x.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedFormat);
  }
  write_bytes(dir_ / "deep.pgm", "P5\n1 1\n65535\n", {0, 7});
  try {
    load_raster(dir_ / "deep.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedFormat);
  }
}

TEST_F(RasterIoTest, SingleGrayPixelRoundTrips) {
  const Raster r(1, 1, 1, std::vector<std::uint8_t>{7});
  for (const char* name : {"p.pgm", "p.png"}) {
    save_raster(r, dir_ / name);
    EXPECT_EQ(load_raster(dir_ / name), r) << name;
  }
}

TEST_F(RasterIoTest, DriveSizedColourRoundTrips) {
  std::mt19937_64 rng(3);
  Raster r(565, 584, 3);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : r.data) v = static_cast<std::uint8_t>(d(rng));
  for (const char* name : {"c.ppm", "c.png"}) {
    save_raster(r, dir_ / name);
    EXPECT_EQ(load_raster(dir_ / name), r) << name;
  }
}

// Property: every supported format is a bit-exact round trip and loading
// never alters the payload checksum.
TEST_F(RasterIoTest, RandomRastersRoundTripInEveryFormat) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 40), bit(0, 1), val(0, 255);
  for (int trial = 0; trial < 30; ++trial) {
    const int ch = bit(rng) ? 3 : 1;
    Raster r(dim(rng), dim(rng), ch);
    for (auto& v : r.data) v = static_cast<std::uint8_t>(val(rng));
    const auto checksum = std::accumulate(r.data.begin(), r.data.end(), std::uint64_t{0});
    for (const char* ext : {".png", ".pnm"}) {
      const auto path = dir_ / ("r" + std::to_string(trial) + (std::string(ext) == ".pnm" ? (ch == 1 ? ".pgm" : ".ppm") : ext));
      save_raster(r, path);
      const Raster back = load_raster(path);
      ASSERT_EQ(back, r) << path;
      EXPECT_EQ(std::accumulate(back.data.begin(), back.data.end(), std::uint64_t{0}), checksum);
    }
  }
}

TEST_F(RasterIoTest, UnwritableDirectoryIsIoFailure) {
  const Raster r(1, 1, 1);
  try {
    save_raster(r, dir_ / "no" / "such" / "dir" / "x.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoFailure);
  }
}

TEST_F(RasterIoTest, MaskThresholdIsStrictlyGreater) {
  write_bytes(dir_ / "m.pgm", "P5\n4 1\n255\n", {0, 255, 128, 127});
  const FovMask m = load_mask(dir_ / "m.pgm");
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 1, 1, 0}));

  write_bytes(dir_ / "z.pgm", "P5\n3 2\n255\n", std::vector<std::uint8_t>(6, 0));
  EXPECT_EQ(load_mask(dir_ / "z.pgm").count(), 0u);
}

TEST_F(RasterIoTest, GreyRgbMaskIsAcceptedButColouredIsNot) {
  write_bytes(dir_ / "g.ppm", "P6\n2 1\n255\n", {200, 200, 200, 3, 3, 3});
  EXPECT_EQ(load_mask(dir_ / "g.ppm").data, (std::vector<std::uint8_t>{1, 0}));
  write_bytes(dir_ / "c.ppm", "P6\n1 1\n255\n", {200, 0, 0});
  EXPECT_THROW(load_mask(dir_ / "c.ppm"), Error);
}
