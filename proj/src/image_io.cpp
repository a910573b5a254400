#include "semfoam/image_io.hpp"

#include <cmath>
#include <cctype>
#include <fstream>

#include "semfoam/error.hpp"

namespace semfoam {

namespace {

void write_pnm(const std::string& path, const Image8& img, const char* magic, int channels) {
  if (img.channels != channels) throw FoamError(ErrorCode::InvalidArgument, "wrong channel count for " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FoamError(ErrorCode::Io, "cannot write " + path);
  out << magic << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw FoamError(ErrorCode::Io, "write failed: " + path);
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
  std::string t;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!t.empty()) break;
      continue;
    }
    t.push_back(static_cast<char>(c));
  }
  return t;
}

Image8 read_pnm(const std::string& path, const char* magic, int channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FoamError(ErrorCode::Io, "cannot open " + path);
  if (token(in) != magic) throw FoamError(ErrorCode::Io, path + ": expected " + magic);
  Image8 img;
  img.channels = channels;
  try {
    img.width = std::stoi(token(in));
    img.height = std::stoi(token(in));
    if (std::stoi(token(in)) != 255) throw FoamError(ErrorCode::Io, path + ": only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw FoamError(ErrorCode::Io, path + ": malformed header");
  }
  if (img.width <= 0 || img.height <= 0) throw FoamError(ErrorCode::Io, path + ": bad dimensions");
  img.data.resize(static_cast<size_t>(img.width) * static_cast<size_t>(img.height) * static_cast<size_t>(channels));
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw FoamError(ErrorCode::Truncated, path + ": pixel data truncated");
  return img;
}

}  // namespace

void write_ppm(const std::string& path, const Image8& img) { write_pnm(path, img, "P6", 3); }
void write_pgm(const std::string& path, const Image8& img) { write_pnm(path, img, "P5", 1); }
Image8 read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }
Image8 read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

uint8_t quantize(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

}  // namespace semfoam
