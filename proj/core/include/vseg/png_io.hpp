#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

// Quantizes v into [0,255] with round-half-up:
// round(255 * clamp((v - lo) / (hi - lo), 0, 1)). Requires lo < hi.
std::uint8_t window_to_u8(float v, float lo, float hi);

// 8-bit grayscale PNG. Output bytes are deterministic for identical inputs
// (fixed zlib level, no ancillary chunks). Throws ValidationError on
// lo >= hi, RuntimeFailure on I/O errors.
void write_mip_png(const Image2D& img, const std::string& path, float lo, float hi);

// 8-bit RGB PNG from interleaved rgb (3 * width * height bytes).
void write_rgb_png(const std::vector<std::uint8_t>& rgb, std::int64_t width,
                   std::int64_t height, const std::string& path);

}  // namespace vseg
