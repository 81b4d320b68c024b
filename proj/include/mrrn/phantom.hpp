#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/rng.hpp"

namespace mrrn {

// Fixed label contract.
enum StructureLabel : std::uint8_t {
  kBackground = 0,
  kLeftLung = 1,
  kRightLung = 2,
  kHeart = 3,
  kEsophagus = 4,
  kSpinalCord = 5,
};

inline const std::vector<std::string>& structure_names() {
  static const std::vector<std::string> names = {"left_lung", "right_lung", "heart", "esophagus",
                                                 "spinal_cord"};
  return names;
}

struct LabeledSlice {
  long size = 0;
  std::vector<float> image;       // row-major, values in [0, 1]
  std::vector<std::uint8_t> mask;  // labels 0..5
  std::string slice_id;
};

struct PhantomParams {
  long size = 256;
  double noise_sigma = 0.03;

  // geometry as fractions of the image side, jitters included
  double lung_left_cx = 0.28, lung_left_cy = 0.36, lung_left_rx = 0.105, lung_left_ry = 0.19;
  double lung_right_cx = 0.70, lung_right_cy = 0.38, lung_right_rx = 0.125, lung_right_ry = 0.20;
  double heart_cx = 0.43, heart_cy = 0.56, heart_rx = 0.09, heart_ry = 0.10;
  double esoph_cx = 0.50, esoph_y0 = 0.69, esoph_y1 = 0.79;
  double cord_cx = 0.50, cord_cy = 0.875;
  double center_jitter = 0.015;  // fraction of S
  double radius_jitter = 0.008;
  long esoph_width_min = 2, esoph_width_max = 3;  // pixels (format supports 2..4)
  long cord_radius_min = 2, cord_radius_max = 3;  // pixels (format supports 2..5)

  // tissue intensity means
  double background_mean = 0.03;
  double body_mean = 0.55;
  double lung_left_mean = 0.15;
  double lung_right_mean = 0.26;
  double heart_mean = 0.70;
  double esoph_mean = 0.38;
  double cord_mean = 0.85;

  void validate() const {
    if (size < 32 || (size & (size - 1)) != 0)
      throw std::invalid_argument("PhantomParams: size must be a power of two >= 32");
    if (esoph_width_min < 2 || esoph_width_max > 4 || esoph_width_min > esoph_width_max)
      throw std::invalid_argument("PhantomParams: esophagus width must lie in [2,4] px");
    if (cord_radius_min < 2 || cord_radius_max > 5 || cord_radius_min > cord_radius_max)
      throw std::invalid_argument("PhantomParams: cord radius must lie in [2,5] px");
    if (noise_sigma < 0) throw std::invalid_argument("PhantomParams: noise_sigma must be >= 0");
  }
};

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

}  // namespace detail

// Deterministic function of (params, seed). Two lung ellipses (dark), a heart
// ellipse (bright), a thin vertical esophagus tube, a small cord disc, all
// inside a body ellipse; seeded Gaussian noise clipped to [0, 1].
inline LabeledSlice generate_phantom(const PhantomParams& params, std::uint64_t seed) {
  params.validate();
  const long S = params.size;
  const double Sd = static_cast<double>(S);
  Rng rng(derive_seed(seed, 0x70686e74ULL));

  LabeledSlice slice;
  slice.size = S;
  slice.image.assign(static_cast<std::size_t>(S * S), 0.f);
  slice.mask.assign(static_cast<std::size_t>(S * S), 0);

  const detail::Ellipse body{0.5 * Sd, 0.5 * Sd, 0.45 * Sd, 0.46 * Sd};

  const int kMaxAttempts = 64;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    auto jc = [&](double base) { return (base + rng.uniform(-params.center_jitter, params.center_jitter)) * Sd; };
    auto jr = [&](double base) { return (base + rng.uniform(-params.radius_jitter, params.radius_jitter)) * Sd; };

    detail::Ellipse llung{jc(params.lung_left_cx), jc(params.lung_left_cy),
                          jr(params.lung_left_rx), jr(params.lung_left_ry)};
    detail::Ellipse rlung{jc(params.lung_right_cx), jc(params.lung_right_cy),
                          jr(params.lung_right_rx), jr(params.lung_right_ry)};
    detail::Ellipse heart{jc(params.heart_cx), jc(params.heart_cy), jr(params.heart_rx),
                          jr(params.heart_ry)};
    const double ecx = jc(params.esoph_cx);
    const long ewidth = rng.uniform_int(params.esoph_width_min, params.esoph_width_max);
    const long ex0 = static_cast<long>(std::lround(ecx - ewidth / 2.0));
    const long ey0 = static_cast<long>(std::lround(jc(params.esoph_y0)));
    const long ey1 = static_cast<long>(std::lround(jc(params.esoph_y1)));
    const double ccx = jc(params.cord_cx), ccy = jc(params.cord_cy);
    const long crad = rng.uniform_int(params.cord_radius_min, params.cord_radius_max);

    std::fill(slice.mask.begin(), slice.mask.end(), 0);
    bool conflict = false;
    long counts[6] = {0, 0, 0, 0, 0, 0};

    auto paint = [&](long x, long y, std::uint8_t label) {
      if (x < 0 || x >= S || y < 0 || y >= S || !body.contains(x + 0.5, y + 0.5)) {
        conflict = true;
        return;
      }
      auto& cell = slice.mask[static_cast<std::size_t>(y * S + x)];
      if (cell != 0) {
        conflict = true;
        return;
      }
      cell = label;
      counts[label]++;
    };

    for (long y = 0; y < S && !conflict; ++y) {
      for (long x = 0; x < S; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (llung.contains(px, py)) paint(x, y, kLeftLung);
        else if (rlung.contains(px, py)) paint(x, y, kRightLung);
        else if (heart.contains(px, py)) paint(x, y, kHeart);
        if (conflict) break;
      }
    }
    for (long y = ey0; y <= ey1 && !conflict; ++y)
      for (long x = ex0; x < ex0 + ewidth && !conflict; ++x) paint(x, y, kEsophagus);
    for (long y = static_cast<long>(ccy) - crad; y <= static_cast<long>(ccy) + crad && !conflict; ++y) {
      for (long x = static_cast<long>(ccx) - crad; x <= static_cast<long>(ccx) + crad; ++x) {
        const double dx = x + 0.5 - ccx, dy = y + 0.5 - ccy;
        if (dx * dx + dy * dy <= static_cast<double>(crad * crad)) paint(x, y, kSpinalCord);
        if (conflict) break;
      }
    }

    for (int l = 1; l <= 5; ++l)
      if (counts[l] == 0) conflict = true;
    if (conflict) continue;

    const double means[6] = {params.background_mean, params.lung_left_mean, params.lung_right_mean,
                             params.heart_mean,      params.esoph_mean,     params.cord_mean};
    for (long y = 0; y < S; ++y) {
      for (long x = 0; x < S; ++x) {
        const std::size_t i = static_cast<std::size_t>(y * S + x);
        double v;
        if (slice.mask[i] != 0) v = means[slice.mask[i]];
        else if (body.contains(x + 0.5, y + 0.5)) v = params.body_mean;
        else v = params.background_mean;
        v += rng.normal() * params.noise_sigma;
        slice.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    return slice;
  }
  throw std::runtime_error("generate_phantom: infeasible geometry after " +
                           std::to_string(kMaxAttempts) + " attempts (seed " +
                           std::to_string(seed) + ")");
}

inline constexpr std::uint32_t kSliceFormatVersion = 1;

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// "MRSL" | version u32 | S u32 | image f32le S*S | mask u8 S*S
inline void write_slice(const LabeledSlice& slice, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_slice: cannot open " + path);
  os.write("MRSL", 4);
  detail::write_u32le(os, kSliceFormatVersion);
  detail::write_u32le(os, static_cast<std::uint32_t>(slice.size));
  os.write(reinterpret_cast<const char*>(slice.image.data()),
           static_cast<std::streamsize>(slice.image.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(slice.mask.data()),
           static_cast<std::streamsize>(slice.mask.size()));
  if (!os) throw std::runtime_error("write_slice: write failed: " + path);
}

inline LabeledSlice read_slice(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_slice: cannot open " + path);
  auto fail = [&](const std::string& what) {
    const auto off = is.tellg();
    throw std::runtime_error("read_slice: " + what + " in " + path + " at byte offset " +
                             std::to_string(off == std::streampos(-1) ? -1 : long(off)));
  };
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MRSL", 4) != 0) fail("bad magic");
  unsigned char vb[4];
  is.read(reinterpret_cast<char*>(vb), 4);
  if (!is) fail("truncated version");
  const std::uint32_t version = vb[0] | (vb[1] << 8) | (vb[2] << 16) | (std::uint32_t(vb[3]) << 24);
  if (version != kSliceFormatVersion) fail("unsupported version " + std::to_string(version));
  is.read(reinterpret_cast<char*>(vb), 4);
  if (!is) fail("truncated size");
  const std::uint32_t S = vb[0] | (vb[1] << 8) | (vb[2] << 16) | (std::uint32_t(vb[3]) << 24);

  LabeledSlice slice;
  slice.size = S;
  slice.image.resize(static_cast<std::size_t>(S) * S);
  slice.mask.resize(static_cast<std::size_t>(S) * S);
  is.read(reinterpret_cast<char*>(slice.image.data()),
          static_cast<std::streamsize>(slice.image.size() * sizeof(float)));
  if (!is) fail("truncated image data");
  is.read(reinterpret_cast<char*>(slice.mask.data()),
          static_cast<std::streamsize>(slice.mask.size()));
  if (!is) fail("truncated mask data");
  for (auto m : slice.mask)
    if (m > 5) fail("label " + std::to_string(int(m)) + " out of range");
  slice.slice_id = std::filesystem::path(path).stem().string();
  return slice;
}

struct ManifestEntry {
  std::string slice_id;
  std::string split;  // train / val / test
};

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& e : entries) os << e.slice_id << "\t" << e.split << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("read_manifest: malformed line '" + line + "' in " + path);
    entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return entries;
}

// Disjoint, exhaustive, seeded split assignment. Slice ids are zero-padded
// in generation order; split membership is a seeded shuffle.
inline std::vector<ManifestEntry> make_splits(long n_train, long n_val, long n_test,
                                              std::uint64_t seed) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw std::invalid_argument("make_splits: all split counts must be >= 1");
  const long total = n_train + n_val + n_test;
  std::vector<long> order(total);
  for (long i = 0; i < total; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x73706c74ULL));
  rng.shuffle(order.begin(), order.end());

  std::vector<ManifestEntry> entries(total);
  for (long pos = 0; pos < total; ++pos) {
    const long idx = order[pos];
    const char* split = pos < n_train ? "train" : (pos < n_train + n_val ? "val" : "test");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "slice_%05ld", idx);
    entries[idx] = {buf, split};
  }
  return entries;
}

// Writes one MRSL file per slice plus manifest.txt into `dir`.
inline void write_dataset(const std::vector<LabeledSlice>& slices,
                          const std::vector<ManifestEntry>& manifest, const std::string& dir) {
  if (slices.size() != manifest.size())
    throw std::invalid_argument("write_dataset: slice count does not match manifest");
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    LabeledSlice s = slices[i];
    write_slice(s, dir + "/" + manifest[i].slice_id + ".mrsl");
  }
  write_manifest(manifest, dir + "/manifest.txt");
}

struct Dataset {
  std::vector<LabeledSlice> train, val, test;
};

inline Dataset read_dataset(const std::string& dir) {
  Dataset ds;
  for (auto& e : read_manifest(dir + "/manifest.txt")) {
    auto slice = read_slice(dir + "/" + e.slice_id + ".mrsl");
    slice.slice_id = e.slice_id;
    if (e.split == "train") ds.train.push_back(std::move(slice));
    else if (e.split == "val") ds.val.push_back(std::move(slice));
    else if (e.split == "test") ds.test.push_back(std::move(slice));
    else throw std::runtime_error("read_dataset: unknown split '" + e.split + "'");
  }
  return ds;
}

}  // namespace mrrn
