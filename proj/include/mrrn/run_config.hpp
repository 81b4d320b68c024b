#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/arch.hpp"
#include "mrrn/phantom.hpp"
#include "mrrn/training.hpp"

namespace mrrn {

// Flat key=value config with [section] headers. Keys are stored as
// "section.key"; keys before any section header have no prefix.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_text(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      lineno++;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::runtime_error("config: malformed section header at line " +
                                   std::to_string(lineno));
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: expected key=value at line " + std::to_string(lineno));
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      cfg.values_[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  long get_long(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stol(it->second);
  }
  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stod(it->second);
  }

  std::string serialize() const {
    // canonical: sorted by full key, section prefixes kept inline
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    return os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  std::map<std::string, std::string> values_;
};

// Resolved per-run configuration: architecture + training + data paths.
struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
  PhantomParams phantom;
  std::string data_dir;
  std::string out_dir;
  std::string precision = "f32";
  std::uint64_t seed = 0;
  std::string model_kind = "mrrn";

  static std::uint64_t default_seed() {
    const char* env = std::getenv("MRRN_SEED");
    return env ? std::strtoull(env, nullptr, 10) : 0;
  }

  static RunConfig from_config(const KeyValueConfig& kv) {
    RunConfig rc;
    rc.seed = static_cast<std::uint64_t>(kv.get_long("run.seed", static_cast<long>(default_seed())));
    rc.precision = kv.get("run.precision", "f32");
    rc.model_kind = kv.get("run.model", "mrrn");
    rc.data_dir = kv.get("data.dir", "");
    rc.out_dir = kv.get("run.out", "out");

    ArchConfig& a = rc.arch;
    a.num_streams = static_cast<int>(kv.get_long("arch.num_streams", a.num_streams));
    a.base_channels = static_cast<int>(kv.get_long("arch.base_channels", a.base_channels));
    if (kv.has("arch.channels")) {
      a.channels.clear();
      std::istringstream cs(kv.get("arch.channels", ""));
      std::string tok;
      while (std::getline(cs, tok, ',')) a.channels.push_back(std::stoi(tok));
    } else if (kv.has("arch.num_streams") || kv.has("arch.base_channels")) {
      a.channels.clear();  // re-derive from base/num_streams
    }
    a.rcus_per_block = static_cast<int>(kv.get_long("arch.rcus_per_block", a.rcus_per_block));
    a.cnn_blocks_per_rcu =
        static_cast<int>(kv.get_long("arch.cnn_blocks_per_rcu", a.cnn_blocks_per_rcu));
    a.input_size = static_cast<int>(kv.get_long("arch.input_size", a.input_size));
    a.num_classes = static_cast<int>(kv.get_long("arch.num_classes", a.num_classes));
    if (kv.has("arch.reference_param_target"))
      a.reference_param_target = kv.get_long("arch.reference_param_target", 0);
    a.finalize();
    a.validate();

    TrainConfig& t = rc.train;
    t.lr = kv.get_double("train.lr", t.lr);
    t.epochs = static_cast<int>(kv.get_long("train.epochs", t.epochs));
    t.batch_size = static_cast<int>(kv.get_long("train.batch_size", t.batch_size));
    t.val_every = static_cast<int>(kv.get_long("train.val_every", t.val_every));
    t.save_epoch_checkpoints = kv.get_long("train.save_epoch_checkpoints", 0) != 0;
    t.seed = rc.seed;
    t.validate();

    PhantomParams& p = rc.phantom;
    p.size = kv.get_long("data.size", a.input_size);
    p.noise_sigma = kv.get_double("data.noise_sigma", p.noise_sigma);
    p.validate();

    if (rc.precision != "f32" && rc.precision != "f64")
      throw std::runtime_error("config: precision must be f32 or f64, got " + rc.precision);
    if (rc.model_kind != "mrrn" && rc.model_kind != "unet")
      throw std::runtime_error("config: model must be mrrn or unet, got " + rc.model_kind);
    return rc;
  }

  // echoed to the output directory for provenance / exact re-runs
  std::string resolved_text() const {
    std::ostringstream os;
    os << "[run]\n";
    os << "seed=" << seed << "\n";
    os << "precision=" << precision << "\n";
    os << "model=" << model_kind << "\n";
    os << "out=" << out_dir << "\n";
    os << "[data]\n";
    os << "dir=" << data_dir << "\n";
    os << "size=" << phantom.size << "\n";
    os << "noise_sigma=" << phantom.noise_sigma << "\n";
    os << "[arch]\n";
    std::istringstream as(arch.canonical_text());
    std::string line;
    while (std::getline(as, line)) os << line << "\n";
    os << "[train]\n";
    os << "lr=" << train.lr << "\n";
    os << "epochs=" << train.epochs << "\n";
    os << "batch_size=" << train.batch_size << "\n";
    os << "val_every=" << train.val_every << "\n";
    os << "save_epoch_checkpoints=" << (train.save_epoch_checkpoints ? 1 : 0) << "\n";
    return os.str();
  }
};

}  // namespace mrrn
