#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/adam.hpp"
#include "mrrn/arch.hpp"
#include "mrrn/checkpoint.hpp"
#include "mrrn/metrics.hpp"
#include "mrrn/ops.hpp"
#include "mrrn/phantom.hpp"
#include "mrrn/rng.hpp"

namespace mrrn {

struct TrainConfig {
  double lr = 1e-4;
  int epochs = 50;
  int batch_size = 10;
  std::uint64_t seed = 0;
  int val_every = 1;
  std::string checkpoint_dir;        // empty: keep checkpoints in memory only
  bool save_epoch_checkpoints = false;

  void validate() const {
    if (!(lr >= 0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (val_every < 1) throw std::invalid_argument("TrainConfig: val_every must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  std::array<double, 5> dsc{};  // structures 1..5
  double dsc_avg = 0;
};

template <typename T>
Var<T> slices_to_batch(const std::vector<const LabeledSlice*>& slices) {
  const long n = static_cast<long>(slices.size());
  const long S = slices[0]->size;
  auto batch = make_var<T>({n, 1, S, S});
  for (long b = 0; b < n; ++b)
    for (long i = 0; i < S * S; ++i)
      batch->data[b * S * S + i] = static_cast<T>(slices[b]->image[i]);
  return batch;
}

inline LabelMask slices_to_mask(const std::vector<const LabeledSlice*>& slices) {
  const long n = static_cast<long>(slices.size());
  const long S = slices[0]->size;
  LabelMask mask(n, S, S);
  for (long b = 0; b < n; ++b)
    std::copy(slices[b]->mask.begin(), slices[b]->mask.end(), mask.labels.begin() + b * S * S);
  return mask;
}

// Per-pixel argmax prediction for one slice; model must be in eval mode.
template <typename T>
LabelMask predict(Model<T>& model, const LabeledSlice& slice) {
  if (slice.size != model.config().input_size)
    shape_error("predict: slice size " + std::to_string(slice.size) +
                " does not match model input size " + std::to_string(model.config().input_size));
  std::vector<const LabeledSlice*> one = {&slice};
  auto logits = model.forward(nullptr, slices_to_batch<T>(one));
  return argmax_classes(*logits);
}

// Per-structure DSC over a whole split using global intersection/size sums
// (not per-slice averaging), plus the 5-structure mean. Eval mode, and the
// model is left untouched.
template <typename T>
EpochRecord validate(Model<T>& model, const std::vector<LabeledSlice>& val_set,
                     int batch_size = 8) {
  const bool was_training = model.training();
  model.set_training(false);
  std::array<long, 5> inter{}, npred{}, ngt{};
  for (std::size_t start = 0; start < val_set.size(); start += batch_size) {
    std::vector<const LabeledSlice*> chunk;
    for (std::size_t i = start; i < std::min(val_set.size(), start + batch_size); ++i)
      chunk.push_back(&val_set[i]);
    auto logits = model.forward(nullptr, slices_to_batch<T>(chunk));
    auto pred = argmax_classes(*logits);
    auto gt = slices_to_mask(chunk);
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
      const int p = pred.labels[i], g = gt.labels[i];
      if (p >= 1) npred[p - 1]++;
      if (g >= 1) ngt[g - 1]++;
      if (p >= 1 && p == g) inter[p - 1]++;
    }
  }
  model.set_training(was_training);

  EpochRecord rec;
  double sum = 0;
  for (int s = 0; s < 5; ++s) {
    const long denom = npred[s] + ngt[s];
    rec.dsc[s] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(inter[s]) / static_cast<double>(denom);
    sum += rec.dsc[s];
  }
  rec.dsc_avg = sum / 5.0;
  return rec;
}

template <typename T>
struct TrainResult {
  Model<T> best;
  int best_epoch = -1;
  double best_dsc_avg = -1;
  std::vector<EpochRecord> history;
};

// Cross-entropy training with ADAM; after each validation pass the model with
// the highest average DSC is retained (ties keep the earlier epoch).
template <typename T>
TrainResult<T> train(Model<T>& model, const std::vector<LabeledSlice>& train_set,
                     const std::vector<LabeledSlice>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");
  for (const auto& s : train_set)
    if (s.size != model.config().input_size)
      shape_error("train: slice size " + std::to_string(s.size) +
                  " does not match model input size " +
                  std::to_string(model.config().input_size));

  AdamState<T> opt;
  opt.lr = static_cast<T>(cfg.lr);
  opt.init(model.parameters());

  TrainResult<T> result{model.clone()};

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x45504f43ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    model.set_training(true);
    double loss_sum = 0;
    long seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      std::vector<const LabeledSlice*> chunk;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        chunk.push_back(&train_set[order[i]]);

      Tape<T> tape;
      auto logits = model.forward(&tape, slices_to_batch<T>(chunk));
      auto loss = softmax_ce_loss(&tape, logits, slices_to_mask(chunk));
      const double lv = static_cast<double>(loss->data[0]);
      if (!std::isfinite(lv))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index));
      model.zero_grad();
      tape.backward(*loss);
      adam_step(model.parameters(), opt);

      loss_sum += lv * static_cast<double>(chunk.size());
      seen += static_cast<long>(chunk.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    if (epoch % cfg.val_every == 0) {
      EpochRecord v = validate(model, val_set);
      rec.dsc = v.dsc;
      rec.dsc_avg = v.dsc_avg;
      if (rec.dsc_avg > result.best_dsc_avg) {
        result.best_dsc_avg = rec.dsc_avg;
        result.best_epoch = epoch;
        result.best = model.clone();
      }
    }
    result.history.push_back(rec);

    if (!cfg.checkpoint_dir.empty() && cfg.save_epoch_checkpoints) {
      auto snap = model.clone();
      save_checkpoint(snap, cfg.checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
    }
  }

  if (!cfg.checkpoint_dir.empty())
    save_checkpoint(result.best, cfg.checkpoint_dir + "/best.ckpt");
  return result;
}

inline void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_history_csv: cannot open " + path);
  os << "epoch,train_loss,dsc_1,dsc_2,dsc_3,dsc_4,dsc_5,dsc_avg\n";
  os << std::setprecision(17);
  for (const auto& r : history) {
    os << r.epoch << "," << r.train_loss;
    for (double d : r.dsc) os << "," << d;
    os << "," << r.dsc_avg << "\n";
  }
}

}  // namespace mrrn
