#include "isd4l/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "isd4l/errors.hpp"

namespace isd4l {

namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::size_t len) {
  put_u32(out, static_cast<std::uint32_t>(len));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len > 0) out.insert(out.end(), data, data + len);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + len)));
  put_u32(out, crc);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& img) {
  if (img.channels != 1 && img.channels != 3)
    throw IoError("png", "only 1- or 3-channel rasters are supported");

  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * img.channels;
  std::vector<std::uint8_t> raw((row_bytes + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
    row[0] = 0;  // filter: none
    std::memcpy(row + 1, img.data.data() + static_cast<std::size_t>(y) * row_bytes,
                row_bytes);
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK)
    throw IoError("png", "deflate failed");
  comp.resize(comp_len);

  std::vector<std::uint8_t> out;
  out.reserve(comp.size() + 64);
  out.insert(out.end(), kSignature, kSignature + 8);

  std::uint8_t ihdr[13];
  ihdr[0] = std::uint8_t(img.width >> 24);
  ihdr[1] = std::uint8_t(img.width >> 16);
  ihdr[2] = std::uint8_t(img.width >> 8);
  ihdr[3] = std::uint8_t(img.width);
  ihdr[4] = std::uint8_t(img.height >> 24);
  ihdr[5] = std::uint8_t(img.height >> 16);
  ihdr[6] = std::uint8_t(img.height >> 8);
  ihdr[7] = std::uint8_t(img.height);
  ihdr[8] = 8;                                  // bit depth
  ihdr[9] = img.channels == 3 ? 2 : 0;          // color type: RGB / gray
  ihdr[10] = 0;                                 // compression
  ihdr[11] = 0;                                 // filter method
  ihdr[12] = 0;                                 // no interlace
  append_chunk(out, "IHDR", ihdr, sizeof(ihdr));
  append_chunk(out, "IDAT", comp.data(), comp.size());
  append_chunk(out, "IEND", nullptr, 0);
  return out;
}

Raster decode_png(const std::uint8_t* bytes, std::size_t len) {
  if (len < 8 || std::memcmp(bytes, kSignature, 8) != 0)
    throw IoError("png", "not a PNG stream");

  std::size_t pos = 8;
  int width = 0, height = 0, channels = 0;
  bool saw_ihdr = false;
  std::vector<std::uint8_t> idat;

  while (pos + 12 <= len) {
    const std::uint32_t chunk_len = get_u32(bytes + pos);
    const char* type = reinterpret_cast<const char*>(bytes + pos + 4);
    if (pos + 12 + chunk_len > len) throw IoError("png", "truncated chunk");
    const std::uint8_t* data = bytes + pos + 8;

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (chunk_len != 13) throw IoError("png", "bad IHDR");
      width = static_cast<int>(get_u32(data));
      height = static_cast<int>(get_u32(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
        throw IoError("png", "unsupported PNG variant (need 8-bit gray or RGB, "
                             "non-interlaced)");
      channels = color == 2 ? 3 : 1;
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + chunk_len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + chunk_len;
  }

  if (!saw_ihdr || width < 1 || height < 1) throw IoError("png", "missing IHDR");
  if (idat.empty()) throw IoError("png", "missing IDAT");

  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw((row_bytes + 1) * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) !=
          Z_OK ||
      raw_len != raw.size())
    throw IoError("png", "inflate failed");

  Raster img(width, height, channels);
  const int bpp = channels;  // bytes per pixel at depth 8
  std::vector<std::uint8_t> prior(row_bytes, 0);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
    const std::uint8_t filter = src[0];
    ++src;
    std::uint8_t* dst = img.data.data() + static_cast<std::size_t>(y) * row_bytes;
    for (std::size_t i = 0; i < row_bytes; ++i) {
      const int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
      const int b = prior[i];
      const int c = i >= static_cast<std::size_t>(bpp) ? prior[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("png", "bad filter type");
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xFF);
    }
    std::memcpy(prior.data(), dst, row_bytes);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Raster& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("png", "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("png", "short write to " + path.string());
}

Raster read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes.data(), bytes.size());
}

}  // namespace isd4l
