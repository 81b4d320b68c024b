#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/phantom.hpp"
#include "mrrn/tensor.hpp"

namespace mrrn {

// Binary PGM (P5), 8-bit.
inline void write_pgm(const std::vector<std::uint8_t>& pixels, long w, long h,
                      const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

// Binary PPM (P6), 8-bit RGB.
inline void write_ppm(const std::vector<std::uint8_t>& rgb, long w, long h,
                      const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

// Label mask as a PGM with labels stretched over the gray range.
inline void write_mask_pgm(const LabelMask& mask, long batch, const std::string& path) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(mask.h * mask.w));
  for (long i = 0; i < mask.h * mask.w; ++i)
    px[i] = static_cast<std::uint8_t>(mask.labels[batch * mask.h * mask.w + i] * 51);
  write_pgm(px, mask.w, mask.h, path);
}

// Grayscale slice with prediction/ground-truth overlay: red = prediction
// only, green = ground truth only, yellow = overlap.
inline void write_overlay_ppm(const LabeledSlice& slice, const LabelMask& pred,
                              const std::string& path) {
  const long S = slice.size;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(S * S * 3));
  for (long i = 0; i < S * S; ++i) {
    const std::uint8_t gray = static_cast<std::uint8_t>(slice.image[i] * 255.f);
    const bool p = pred.labels[i] != 0;
    const bool g = slice.mask[i] != 0;
    std::uint8_t r = gray, gr = gray, b = gray;
    if (p && g) { r = 255; gr = 255; b = 0; }
    else if (p) { r = 255; gr = gray / 2; b = gray / 2; }
    else if (g) { r = gray / 2; gr = 255; b = gray / 2; }
    rgb[i * 3] = r;
    rgb[i * 3 + 1] = gr;
    rgb[i * 3 + 2] = b;
  }
  write_ppm(rgb, S, S, path);
}

}  // namespace mrrn
