#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "grid.hpp"
#include "mask.hpp"

namespace editgrpo {

inline int to_byte(double intensity) {
  double v = std::round(intensity * 255.0);
  return static_cast<int>(std::min(255.0, std::max(0.0, v)));
}

// Binary PPM (P6), 8-bit.
inline void write_ppm(const std::string& path, const Grid& img) {
  if (img.channels != 3)
    throw std::invalid_argument("write_ppm: expects 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (int h = 0; h < img.height; ++h)
    for (int w = 0; w < img.width; ++w)
      for (int c = 0; c < 3; ++c)
        f.put(static_cast<char>(to_byte(img.at(h, w, c))));
}

inline Grid read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w < 1 || h < 1)
    throw std::runtime_error("read_ppm: unsupported format in " + path);
  f.get();  // single whitespace after header
  Grid img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        int byte = f.get();
        if (byte < 0) throw std::runtime_error("read_ppm: truncated " + path);
        img.at(y, x, c) = byte / 255.0;
      }
  return img;
}

// Binary PBM (P4): 1 = edit region.
inline void write_pbm(const std::string& path, const RegionMask& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pbm: cannot open " + path);
  f << "P4\n" << m.width << " " << m.height << "\n";
  for (int h = 0; h < m.height; ++h) {
    for (int w = 0; w < m.width; w += 8) {
      unsigned byte = 0;
      for (int b = 0; b < 8 && w + b < m.width; ++b)
        if (m.get(h, w + b)) byte |= 0x80u >> b;
      f.put(static_cast<char>(byte));
    }
  }
}

inline RegionMask read_pbm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pbm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  f >> magic >> w >> h;
  if (magic != "P4" || w < 1 || h < 1)
    throw std::runtime_error("read_pbm: unsupported format in " + path);
  f.get();
  RegionMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; x += 8) {
      int byte = f.get();
      if (byte < 0) throw std::runtime_error("read_pbm: truncated " + path);
      for (int b = 0; b < 8 && x + b < w; ++b)
        if (byte & (0x80 >> b)) m.set(y, x + b, true);
    }
  return m;
}

}  // namespace editgrpo
