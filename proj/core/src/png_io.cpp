#include "vseg/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace vseg {
namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::size_t len) {
  put_u32_be(out, static_cast<std::uint32_t>(len));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  const auto crc = crc32(0, out.data() + crc_start, static_cast<uInt>(4 + len));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

// channels = 1 (gray) or 3 (rgb); pixels are interleaved row-major.
void write_png(const std::vector<std::uint8_t>& pixels, std::int64_t width,
               std::int64_t height, int channels, const std::string& path) {
  if (width <= 0 || height <= 0)
    throw ValidationError("png dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(width * height * channels))
    throw ValidationError("png pixel buffer size mismatch");

  // Raw scanlines, filter byte 0 (None) per row.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + width * channels));
  for (std::int64_t y = 0; y < height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = pixels.data() + y * width * channels;
    raw.insert(raw.end(), row, row + width * channels);
  }

  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK)
    throw RuntimeFailure("zlib compress failed");
  comp.resize(comp_cap);

  std::vector<std::uint8_t> out;
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.insert(out.end(), sig, sig + 8);

  std::uint8_t ihdr[13];
  ihdr[0] = static_cast<std::uint8_t>(width >> 24);
  ihdr[1] = static_cast<std::uint8_t>(width >> 16);
  ihdr[2] = static_cast<std::uint8_t>(width >> 8);
  ihdr[3] = static_cast<std::uint8_t>(width);
  ihdr[4] = static_cast<std::uint8_t>(height >> 24);
  ihdr[5] = static_cast<std::uint8_t>(height >> 16);
  ihdr[6] = static_cast<std::uint8_t>(height >> 8);
  ihdr[7] = static_cast<std::uint8_t>(height);
  ihdr[8] = 8;                                     // bit depth
  ihdr[9] = (channels == 1) ? 0 : 2;               // color type: gray / truecolor
  ihdr[10] = 0;                                    // compression
  ihdr[11] = 0;                                    // filter
  ihdr[12] = 0;                                    // interlace
  append_chunk(out, "IHDR", ihdr, 13);
  append_chunk(out, "IDAT", comp.data(), comp.size());
  append_chunk(out, "IEND", nullptr, 0);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("io-failure: cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw RuntimeFailure("io-failure: short write: " + path);
}

}  // namespace

std::uint8_t window_to_u8(float v, float lo, float hi) {
  double t = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo);
  t = std::min(1.0, std::max(0.0, t));
  const double scaled = std::floor(255.0 * t + 0.5);  // round-half-up
  return static_cast<std::uint8_t>(scaled);
}

void write_mip_png(const Image2D& img, const std::string& path, float lo, float hi) {
  if (!(lo < hi)) throw ValidationError("invalid-window: lo >= hi");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(img.width * img.height));
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = window_to_u8(img.pixels[i], lo, hi);
  write_png(px, img.width, img.height, 1, path);
}

void write_rgb_png(const std::vector<std::uint8_t>& rgb, std::int64_t width,
                   std::int64_t height, const std::string& path) {
  write_png(rgb, width, height, 3, path);
}

}  // namespace vseg
