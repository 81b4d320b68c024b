#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/arch.hpp"

namespace mrrn {

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename T>
constexpr const char* precision_tag() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "MRRN" | version u32 | config text (u32 length + bytes, includes
// kind and precision) | records in build order, each (u32 name length, name,
// four u32 shape dims, raw little-endian values).
template <typename T>
void save_checkpoint(Model<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write("MRRN", 4);
  detail::write_u32(os, kCheckpointVersion);
  std::string cfg = "kind=" + kind_name(model.kind()) + "\nprecision=" +
                    detail::precision_tag<T>() + "\n" + model.config().canonical_text();
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  auto write_record = [&](const std::string& name, Shape shape, const std::vector<T>& data) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(shape.n));
    detail::write_u32(os, static_cast<std::uint32_t>(shape.c));
    detail::write_u32(os, static_cast<std::uint32_t>(shape.h));
    detail::write_u32(os, static_cast<std::uint32_t>(shape.w));
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(T)));
  };

  for (auto& e : model.serialization_entries()) write_record(e.name, e.shape, *e.data);
  auto& states = model.bn_states();
  auto& names = model.bn_names();
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<T> cnt = {static_cast<T>(states[i]->update_count)};
    write_record(names[i] + ".update_count", {1, 1, 1, 1}, cnt);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MRRN", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t cfg_len = detail::read_u32(is, "config length");
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw std::runtime_error("checkpoint: truncated config text");

  std::string kind = "mrrn", precision;
  {
    std::istringstream cs(cfg_text);
    std::string line;
    while (std::getline(cs, line)) {
      if (line.rfind("kind=", 0) == 0) kind = line.substr(5);
      if (line.rfind("precision=", 0) == 0) precision = line.substr(10);
    }
  }
  if (precision != detail::precision_tag<T>())
    throw std::runtime_error("checkpoint: precision " + precision + " does not match build (" +
                             detail::precision_tag<T>() + ")");
  ArchConfig cfg = ArchConfig::from_text(cfg_text);
  Model<T> model = (kind == "unet") ? Model<T>::build_unet(cfg) : Model<T>::build_mrrn(cfg);

  auto entries = model.serialization_entries();
  std::size_t next = 0;
  auto& states = model.bn_states();
  auto& names = model.bn_names();

  auto read_record = [&](std::string& name, Shape& shape, std::vector<T>& data) {
    const std::uint32_t nlen = detail::read_u32(is, "name length");
    name.assign(nlen, '\0');
    is.read(name.data(), nlen);
    if (!is) throw std::runtime_error("checkpoint: truncated name");
    shape.n = detail::read_u32(is, "shape");
    shape.c = detail::read_u32(is, "shape");
    shape.h = detail::read_u32(is, "shape");
    shape.w = detail::read_u32(is, "shape");
    data.resize(static_cast<std::size_t>(shape.numel()));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!is) throw std::runtime_error("checkpoint: truncated values for " + name);
  };

  for (; next < entries.size(); ++next) {
    std::string name;
    Shape shape;
    std::vector<T> data;
    read_record(name, shape, data);
    if (name != entries[next].name)
      throw std::runtime_error("checkpoint: record '" + name + "' does not match expected '" +
                               entries[next].name + "'");
    if (!(shape == entries[next].shape))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    *entries[next].data = std::move(data);
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::string name;
    Shape shape;
    std::vector<T> data;
    read_record(name, shape, data);
    if (name != names[i] + ".update_count")
      throw std::runtime_error("checkpoint: unexpected record '" + name + "'");
    states[i]->update_count = static_cast<long>(data.at(0));
  }
  return model;
}

}  // namespace mrrn
