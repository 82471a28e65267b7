#include "isd4l/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <vector>

#include <doctest.h>

#include "isd4l/errors.hpp"
#include "isd4l/rng.hpp"

using namespace isd4l;

namespace {

Raster random_raster(int w, int h, int c, std::uint64_t seed) {
  Raster img(w, h, c);
  Xoshiro256pp rng(seed);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST_CASE("png round trip is bitwise for RGB and grayscale") {
  for (int channels : {1, 3}) {
    const Raster img = random_raster(61, 47, channels, 100 + channels);
    const auto bytes = encode_png(img);
    const Raster back = decode_png(bytes.data(), bytes.size());
    CHECK(back == img);
  }
}

TEST_CASE("png encoding is deterministic") {
  const Raster img = random_raster(33, 21, 3, 5);
  CHECK(encode_png(img) == encode_png(img));
}

TEST_CASE("png file io round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "isd4l_png_test";
  std::filesystem::create_directories(dir);
  const Raster img = random_raster(20, 20, 3, 9);
  write_png(dir / "x.png", img);
  CHECK(read_png(dir / "x.png") == img);
  std::filesystem::remove_all(dir);
}

TEST_CASE("png decoder rejects garbage and missing files") {
  const std::uint8_t junk[16] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  CHECK_THROWS_AS(decode_png(junk, sizeof(junk)), IoError);
  CHECK_THROWS_AS(read_png("/nonexistent/isd4l.png"), MissingFile);
}

namespace {

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32be(out, static_cast<std::uint32_t>(
                     crc32(0L, out.data() + crc_start,
                           static_cast<uInt>(4 + data.size()))));
}

}  // namespace

TEST_CASE("png decoder handles Sub/Up/Average/Paeth filtered rows") {
  // 4x4 grayscale, each row under a different filter, built independently of
  // the library encoder
  const std::uint8_t pixels[4][4] = {
      {10, 20, 30, 40}, {15, 25, 35, 45}, {100, 90, 80, 70}, {1, 2, 3, 4}};

  std::vector<std::uint8_t> raw;
  // row 0: Sub
  raw.push_back(1);
  raw.push_back(pixels[0][0]);
  for (int x = 1; x < 4; ++x)
    raw.push_back(std::uint8_t(pixels[0][x] - pixels[0][x - 1]));
  // row 1: Up
  raw.push_back(2);
  for (int x = 0; x < 4; ++x) raw.push_back(std::uint8_t(pixels[1][x] - pixels[0][x]));
  // row 2: Average
  raw.push_back(3);
  for (int x = 0; x < 4; ++x) {
    const int left = x > 0 ? pixels[2][x - 1] : 0;
    raw.push_back(std::uint8_t(pixels[2][x] - (left + pixels[1][x]) / 2));
  }
  // row 3: Paeth (with a==left, b==up, c==upper-left all available for x>0)
  raw.push_back(4);
  for (int x = 0; x < 4; ++x) {
    const int a = x > 0 ? pixels[3][x - 1] : 0;
    const int b = pixels[2][x];
    const int c = x > 0 ? pixels[2][x - 1] : 0;
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    const int paeth = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
    raw.push_back(std::uint8_t(pixels[3][x] - paeth));
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  REQUIRE(compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()),
                    6) == Z_OK);
  comp.resize(comp_len);

  std::vector<std::uint8_t> file = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, 4);
  put_u32be(ihdr, 4);
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // depth 8, gray, no interlace
  put_chunk(file, "IHDR", ihdr);
  put_chunk(file, "IDAT", comp);
  put_chunk(file, "IEND", {});

  const Raster img = decode_png(file.data(), file.size());
  REQUIRE(img.width == 4);
  REQUIRE(img.height == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(img.at(x, y) == pixels[y][x]);
}
