#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/ops.hpp"
#include "mrrn/rng.hpp"
#include "mrrn/tape.hpp"
#include "mrrn/tensor.hpp"

namespace mrrn {

struct ArchConfig {
  int num_streams = 4;
  int base_channels = 32;
  std::vector<int> channels = {32, 64, 128, 256};
  int rcus_per_block = 2;       // sequential RCU-block passes per feature level
  int cnn_blocks_per_rcu = 2;   // CNN blocks inside each RCU
  int input_size = 256;
  int num_classes = 6;
  std::optional<long> reference_param_target;

  // Fills the channel schedule from base_channels when left empty.
  void finalize() {
    if (channels.empty()) {
      channels.resize(num_streams);
      for (int k = 0; k < num_streams; ++k) channels[k] = base_channels << k;
    }
  }

  void validate() const {
    std::vector<std::string> bad;
    if (num_streams < 2) bad.push_back("num_streams must be >= 2");
    if (static_cast<int>(channels.size()) != num_streams)
      bad.push_back("channel schedule length " + std::to_string(channels.size()) +
                    " must equal num_streams " + std::to_string(num_streams));
    for (int c : channels)
      if (c < 1) bad.push_back("channel counts must be positive");
    if (num_classes < 2) bad.push_back("num_classes must be >= 2");
    if (rcus_per_block < 1) bad.push_back("rcus_per_block must be >= 1");
    if (cnn_blocks_per_rcu < 1) bad.push_back("cnn_blocks_per_rcu must be >= 1");
    if (input_size < 2 || (input_size & (input_size - 1)) != 0)
      bad.push_back("input_size must be a power of two");
    if (input_size % (1 << (num_streams - 1)) != 0 ||
        input_size >> (num_streams - 1) < 1)
      bad.push_back("input_size must be divisible by 2^(num_streams-1)");
    if (!bad.empty()) {
      std::string msg = "invalid ArchConfig:";
      for (auto& b : bad) msg += "\n  - " + b;
      throw std::invalid_argument(msg);
    }
  }

  std::string canonical_text() const {
    std::ostringstream os;
    os << "num_streams=" << num_streams << "\n";
    os << "base_channels=" << base_channels << "\n";
    os << "channels=";
    for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
    os << "\n";
    os << "rcus_per_block=" << rcus_per_block << "\n";
    os << "cnn_blocks_per_rcu=" << cnn_blocks_per_rcu << "\n";
    os << "input_size=" << input_size << "\n";
    os << "num_classes=" << num_classes << "\n";
    if (reference_param_target) os << "reference_param_target=" << *reference_param_target << "\n";
    return os.str();
  }

  static ArchConfig from_text(const std::string& text) {
    ArchConfig cfg;
    cfg.channels.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      if (key == "num_streams") cfg.num_streams = std::stoi(val);
      else if (key == "base_channels") cfg.base_channels = std::stoi(val);
      else if (key == "channels") {
        std::istringstream vs(val);
        std::string tok;
        while (std::getline(vs, tok, ',')) cfg.channels.push_back(std::stoi(tok));
      } else if (key == "rcus_per_block") cfg.rcus_per_block = std::stoi(val);
      else if (key == "cnn_blocks_per_rcu") cfg.cnn_blocks_per_rcu = std::stoi(val);
      else if (key == "input_size") cfg.input_size = std::stoi(val);
      else if (key == "num_classes") cfg.num_classes = std::stoi(val);
      else if (key == "reference_param_target") cfg.reference_param_target = std::stol(val);
    }
    cfg.finalize();
    return cfg;
  }
};

inline ArchConfig tiny_arch_config() {
  ArchConfig cfg;
  cfg.num_streams = 2;
  cfg.base_channels = 4;
  cfg.channels = {4, 8};
  cfg.rcus_per_block = 1;
  cfg.cnn_blocks_per_rcu = 1;
  cfg.input_size = 16;
  cfg.num_classes = 2;
  return cfg;
}

inline ArchConfig reference_arch_config() {
  ArchConfig cfg;  // defaults above
  cfg.reference_param_target = 28941717;
  return cfg;
}

template <typename T>
struct ConvLayer {
  Var<T> w, b;
  long k = 3;
};

template <typename T>
struct BnLayer {
  Var<T> gamma, beta;
  BatchNormState<T> state;
};

// conv3x3 -> BN -> ReLU
template <typename T>
struct CnnBlock {
  ConvLayer<T> conv;
  BnLayer<T> bn;
};

// Residual connection unit: concat(downsampled stream, running features) ->
// CNN blocks -> regular output; residual output = upsampled 1x1 projection
// of the regular output, shaped like the source stream.
template <typename T>
struct RcuUnit {
  int source_stream = 0;
  int level = 0;
  std::vector<CnnBlock<T>> blocks;
  ConvLayer<T> proj;
};

enum class ModelKind { mrrn, unet };

inline std::string kind_name(ModelKind k) { return k == ModelKind::mrrn ? "mrrn" : "unet"; }

template <typename T>
class Model {
 public:
  static Model build_mrrn(const ArchConfig& cfg, std::uint64_t seed = 1);
  static Model build_unet(const ArchConfig& cfg, std::uint64_t seed = 1);

  Var<T> forward(Tape<T>* tape, const Var<T>& input);

  void set_training(bool t) { training_ = t; }
  bool training() const { return training_; }
  ModelKind kind() const { return kind_; }
  const ArchConfig& config() const { return cfg_; }

  std::vector<Var<T>>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return param_names_; }
  const std::vector<std::string>& bn_names() const { return bn_names_; }
  // recomputed on demand: cached pointers would dangle after a move
  std::vector<BatchNormState<T>*>& bn_states() {
    collect_bn_pointers();
    return bn_layers_;
  }

  long count_params() const {
    long total = 0;
    for (const auto& p : params_) total += p->numel();
    return total;
  }

  // Streams read by the RCU blocks at each level k >= 1 (graph metadata for
  // the all-streams-usage assertion).
  const std::vector<std::vector<int>>& streams_read_per_level() const { return streams_read_; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  // Serialization entries: trainable parameters followed by BN buffers, in
  // build order.
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<T>* data;
  };
  std::vector<Entry> serialization_entries();

  Model clone();

 private:
  Model() = default;

  ConvLayer<T> make_conv(const std::string& name, long c_in, long c_out, long k, Rng& rng,
                         bool zero_init = false) {
    ConvLayer<T> layer;
    layer.k = k;
    layer.w = make_var<T>({c_out, c_in, k, k}, true);
    layer.b = make_var<T>({1, c_out, 1, 1}, true);
    if (!zero_init) {
      const double std = std::sqrt(2.0 / static_cast<double>(c_in * k * k));
      for (auto& v : layer.w->data) v = static_cast<T>(rng.normal() * std);
    }
    reg(name + ".w", layer.w);
    reg(name + ".b", layer.b);
    return layer;
  }

  BnLayer<T> make_bn(const std::string& name, long c) {
    BnLayer<T> layer;
    layer.gamma = make_var<T>({1, c, 1, 1}, true);
    layer.beta = make_var<T>({1, c, 1, 1}, true);
    for (auto& v : layer.gamma->data) v = T(1);
    layer.state = BatchNormState<T>(c);
    reg(name + ".gamma", layer.gamma);
    reg(name + ".beta", layer.beta);
    bn_names_.push_back(name);
    bn_layers_.push_back(nullptr);  // patched after the owning struct settles
    return layer;
  }

  CnnBlock<T> make_cnn_block(const std::string& name, long c_in, long c_out, Rng& rng) {
    CnnBlock<T> blk;
    blk.conv = make_conv(name + ".conv", c_in, c_out, 3, rng);
    blk.bn = make_bn(name + ".bn", c_out);
    return blk;
  }

  void reg(const std::string& name, const Var<T>& p) {
    param_names_.push_back(name);
    params_.push_back(p);
  }

  Var<T> run_cnn_block(Tape<T>* tape, CnnBlock<T>& blk, const Var<T>& x) {
    auto y = conv2d(tape, x, blk.conv.w, blk.conv.b);
    y = batch_norm(tape, y, blk.bn.gamma, blk.bn.beta, blk.bn.state, training_);
    return relu(tape, y);
  }

  Var<T> forward_mrrn(Tape<T>* tape, const Var<T>& input);
  Var<T> forward_unet(Tape<T>* tape, const Var<T>& input);

  void collect_bn_pointers();

  ModelKind kind_ = ModelKind::mrrn;
  ArchConfig cfg_;
  bool training_ = true;

  std::vector<Var<T>> params_;
  std::vector<std::string> param_names_;
  std::vector<std::string> bn_names_;
  std::vector<BatchNormState<T>*> bn_layers_;

  // MRRN layers
  CnnBlock<T> stem_;
  std::vector<CnnBlock<T>> level_in_;                 // index k-1 for level k
  std::vector<std::vector<std::vector<RcuUnit<T>>>> rcu_;  // [level k-1][block][unit]
  std::vector<ConvLayer<T>> fusion_;                  // index j-1: stream j -> j-1
  ConvLayer<T> classifier_;

  // U-Net layers
  std::vector<std::vector<CnnBlock<T>>> enc_;
  std::vector<std::vector<CnnBlock<T>>> dec_;

  std::vector<std::vector<int>> streams_read_;
};

template <typename T>
Model<T> Model<T>::build_mrrn(const ArchConfig& cfg_in, std::uint64_t seed) {
  ArchConfig cfg = cfg_in;
  cfg.finalize();
  cfg.validate();
  Model m;
  m.kind_ = ModelKind::mrrn;
  m.cfg_ = cfg;
  Rng rng(derive_seed(seed, 0x6d72726eULL));

  const int L = cfg.num_streams;
  const auto& ch = cfg.channels;

  m.stem_ = m.make_cnn_block("stem", 1, ch[0], rng);
  m.streams_read_.assign(L, {});

  for (int k = 1; k < L; ++k) {
    const std::string lk = "level" + std::to_string(k);
    m.level_in_.push_back(m.make_cnn_block(lk + ".in", ch[k - 1], ch[k], rng));
    std::vector<std::vector<RcuUnit<T>>> blocks;
    for (int b = 0; b < cfg.rcus_per_block; ++b) {
      std::vector<RcuUnit<T>> units;
      for (int j = 0; j < k; ++j) {
        const std::string un = lk + ".block" + std::to_string(b) + ".rcu" + std::to_string(j);
        RcuUnit<T> u;
        u.source_stream = j;
        u.level = k;
        long cin = ch[j] + ch[k];
        for (int cb = 0; cb < cfg.cnn_blocks_per_rcu; ++cb) {
          u.blocks.push_back(m.make_cnn_block(un + ".cnn" + std::to_string(cb), cin, ch[k], rng));
          cin = ch[k];
        }
        u.proj = m.make_conv(un + ".proj", ch[k], ch[j], 1, rng);
        units.push_back(std::move(u));
        m.streams_read_[k].push_back(j);
      }
      blocks.push_back(std::move(units));
    }
    m.rcu_.push_back(std::move(blocks));
  }

  // Fold deeper streams back into R0 before classification so every stream
  // update contributes to the output.
  for (int j = L - 1; j >= 1; --j) {
    m.fusion_.push_back(
        m.make_conv("fusion.proj" + std::to_string(j), ch[j], ch[j - 1], 1, rng));
  }

  m.classifier_ = m.make_conv("classifier", ch[0], cfg.num_classes, 1, rng, /*zero_init=*/true);
  m.collect_bn_pointers();
  return m;
}

template <typename T>
Var<T> Model<T>::forward_mrrn(Tape<T>* tape, const Var<T>& input) {
  const int L = cfg_.num_streams;
  const long S = cfg_.input_size;

  auto check_stream = [&](int j, const Var<T>& s) {
    const long expect = S >> j;
    if (s->shape.h != expect || s->shape.w != expect)
      throw std::logic_error("stream R" + std::to_string(j) + " has spatial size " +
                             std::to_string(s->shape.h) + ", expected " + std::to_string(expect));
  };

  std::vector<Var<T>> streams(L);
  auto feat = run_cnn_block(tape, stem_, input);
  streams[0] = feat;

  for (int k = 1; k < L; ++k) {
    feat = maxpool2x2(tape, feat);
    feat = run_cnn_block(tape, level_in_[k - 1], feat);
    streams[k] = feat;
    for (auto& block : rcu_[k - 1]) {
      for (auto& unit : block) {
        const int j = unit.source_stream;
        auto down = streams[j];
        for (int d = j; d < k; ++d) down = maxpool2x2(tape, down);
        auto y = concat_channels(tape, down, feat);
        for (auto& cb : unit.blocks) y = run_cnn_block(tape, cb, y);
        auto residual = conv2d(tape, y, unit.proj.w, unit.proj.b);
        for (int d = j; d < k; ++d) residual = upsample_nearest2x(tape, residual);
        streams[j] = add(tape, streams[j], residual);
        feat = y;
      }
      for (int j = 0; j < L; ++j)
        if (streams[j]) check_stream(j, streams[j]);
    }
  }

  for (int j = L - 1; j >= 1; --j) {
    auto& proj = fusion_[L - 1 - j];
    auto folded = upsample_nearest2x(tape, conv2d(tape, streams[j], proj.w, proj.b));
    streams[j - 1] = add(tape, streams[j - 1], folded);
  }

  check_stream(0, streams[0]);
  return conv2d(tape, streams[0], classifier_.w, classifier_.b);
}

template <typename T>
Model<T> Model<T>::build_unet(const ArchConfig& cfg_in, std::uint64_t seed) {
  ArchConfig cfg = cfg_in;
  cfg.finalize();
  cfg.validate();
  Model m;
  m.kind_ = ModelKind::unet;
  m.cfg_ = cfg;
  Rng rng(derive_seed(seed, 0x756e6574ULL));

  const int L = cfg.num_streams;
  const auto& ch = cfg.channels;

  for (int k = 0; k < L; ++k) {
    const std::string nm = "enc" + std::to_string(k);
    std::vector<CnnBlock<T>> blocks;
    blocks.push_back(m.make_cnn_block(nm + ".cnn0", k == 0 ? 1 : ch[k - 1], ch[k], rng));
    blocks.push_back(m.make_cnn_block(nm + ".cnn1", ch[k], ch[k], rng));
    m.enc_.push_back(std::move(blocks));
  }
  for (int k = L - 2; k >= 0; --k) {
    const std::string nm = "dec" + std::to_string(k);
    std::vector<CnnBlock<T>> blocks;
    blocks.push_back(m.make_cnn_block(nm + ".cnn0", ch[k + 1] + ch[k], ch[k], rng));
    blocks.push_back(m.make_cnn_block(nm + ".cnn1", ch[k], ch[k], rng));
    m.dec_.push_back(std::move(blocks));
  }
  m.classifier_ = m.make_conv("classifier", ch[0], cfg.num_classes, 1, rng, /*zero_init=*/true);
  m.collect_bn_pointers();
  return m;
}

template <typename T>
Var<T> Model<T>::forward_unet(Tape<T>* tape, const Var<T>& input) {
  const int L = cfg_.num_streams;
  std::vector<Var<T>> skips;
  auto x = input;
  for (int k = 0; k < L; ++k) {
    if (k > 0) x = maxpool2x2(tape, x);
    for (auto& blk : enc_[k]) x = run_cnn_block(tape, blk, x);
    skips.push_back(x);
  }
  for (int i = 0; i < L - 1; ++i) {
    const int k = L - 2 - i;
    x = upsample_nearest2x(tape, x);
    x = concat_channels(tape, x, skips[k]);
    for (auto& blk : dec_[i]) x = run_cnn_block(tape, blk, x);
  }
  return conv2d(tape, x, classifier_.w, classifier_.b);
}

template <typename T>
Var<T> Model<T>::forward(Tape<T>* tape, const Var<T>& input) {
  if (input->shape.c != 1)
    shape_error("forward: expected single-channel input, got " + input->shape.str());
  if (input->shape.h != cfg_.input_size || input->shape.w != cfg_.input_size)
    shape_error("forward: input spatial size " + input->shape.str() + " does not match config size " +
                std::to_string(cfg_.input_size));
  return kind_ == ModelKind::mrrn ? forward_mrrn(tape, input) : forward_unet(tape, input);
}

template <typename T>
void Model<T>::collect_bn_pointers() {
  std::vector<BatchNormState<T>*> ptrs;
  auto grab = [&](CnnBlock<T>& b) { ptrs.push_back(&b.bn.state); };
  if (kind_ == ModelKind::mrrn) {
    grab(stem_);
    std::size_t li = 0;
    for (int k = 1; k < cfg_.num_streams; ++k) {
      grab(level_in_[li]);
      for (auto& block : rcu_[li])
        for (auto& unit : block)
          for (auto& cb : unit.blocks) grab(cb);
      li++;
    }
  } else {
    for (auto& lvl : enc_)
      for (auto& b : lvl) grab(b);
    for (auto& lvl : dec_)
      for (auto& b : lvl) grab(b);
  }
  bn_layers_ = ptrs;
}

template <typename T>
std::vector<typename Model<T>::Entry> Model<T>::serialization_entries() {
  collect_bn_pointers();
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < params_.size(); ++i)
    entries.push_back({param_names_[i], params_[i]->shape, &params_[i]->data});
  for (std::size_t i = 0; i < bn_layers_.size(); ++i) {
    auto* st = bn_layers_[i];
    const long c = static_cast<long>(st->running_mean.size());
    entries.push_back({bn_names_[i] + ".running_mean", {1, c, 1, 1}, &st->running_mean});
    entries.push_back({bn_names_[i] + ".running_var", {1, c, 1, 1}, &st->running_var});
  }
  return entries;
}

template <typename T>
Model<T> Model<T>::clone() {
  Model<T> m = (kind_ == ModelKind::mrrn) ? build_mrrn(cfg_) : build_unet(cfg_);
  m.training_ = training_;
  for (std::size_t i = 0; i < params_.size(); ++i) m.params_[i]->data = params_[i]->data;
  collect_bn_pointers();
  m.collect_bn_pointers();
  for (std::size_t i = 0; i < bn_layers_.size(); ++i) {
    m.bn_layers_[i]->running_mean = bn_layers_[i]->running_mean;
    m.bn_layers_[i]->running_var = bn_layers_[i]->running_var;
    m.bn_layers_[i]->update_count = bn_layers_[i]->update_count;
  }
  return m;
}

}  // namespace mrrn
