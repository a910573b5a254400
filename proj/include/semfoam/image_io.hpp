#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semfoam {

/// 8-bit image, row-major, `channels` interleaved values per pixel.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> data;
};

/// Binary PPM (P6, maxval 255) and PGM (P5, maxval 255). Throw Io on failure.
void write_ppm(const std::string& path, const Image8& img);
void write_pgm(const std::string& path, const Image8& img);
Image8 read_ppm(const std::string& path);
Image8 read_pgm(const std::string& path);

/// Rounds a [0, 1] intensity to 8 bits (clamping outside the range).
uint8_t quantize(double v);

}  // namespace semfoam
