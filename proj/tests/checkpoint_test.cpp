#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mrrn/checkpoint.hpp"
#include "mrrn/rng.hpp"

using namespace mrrn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ckpt_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

template <typename T>
Model<T> trained_like_model(std::uint64_t seed) {
  auto model = Model<T>::build_mrrn(tiny_arch_config(), seed);
  Rng rng(seed + 1);
  for (auto& p : model.parameters())
    for (auto& v : p->data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  // one training pass to populate BN running statistics
  auto x = make_var<T>({2, 1, 16, 16});
  for (auto& v : x->data) v = static_cast<T>(rng.uniform(0.0, 1.0));
  model.set_training(true);
  (void)model.forward(nullptr, x);
  return model;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  TempDir tmp;
  const std::string path = (tmp.path / "model.ckpt").string();
  auto model = trained_like_model<double>(31);
  save_checkpoint(model, path);
  auto loaded = load_checkpoint<double>(path);

  EXPECT_EQ(loaded.kind(), model.kind());
  EXPECT_EQ(loaded.config().canonical_text(), model.config().canonical_text());
  ASSERT_EQ(loaded.parameters().size(), model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i)
    EXPECT_EQ(loaded.parameters()[i]->data, model.parameters()[i]->data)
        << model.parameter_names()[i];
  auto sa = model.bn_states();
  auto sb = loaded.bn_states();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i]->running_mean, sb[i]->running_mean);
    EXPECT_EQ(sa[i]->running_var, sb[i]->running_var);
    EXPECT_EQ(sa[i]->update_count, sb[i]->update_count);
  }

  // eval-mode forward agrees bit for bit
  model.set_training(false);
  loaded.set_training(false);
  Rng rng(7);
  auto x = make_var<double>({1, 1, 16, 16});
  for (auto& v : x->data) v = rng.uniform(0.0, 1.0);
  auto ya = model.forward(nullptr, x);
  auto yb = loaded.forward(nullptr, x);
  EXPECT_EQ(ya->data, yb->data);
}

TEST(Checkpoint, UnetRoundTripKeepsKind) {
  TempDir tmp;
  const std::string path = (tmp.path / "unet.ckpt").string();
  auto model = Model<float>::build_unet(tiny_arch_config(), 5);
  auto x = make_var<float>({2, 1, 16, 16});
  Rng rng(5);
  for (auto& v : x->data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  (void)model.forward(nullptr, x);
  save_checkpoint(model, path);
  auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(loaded.kind(), ModelKind::unet);
}

TEST(Checkpoint, BadMagicThrows) {
  TempDir tmp;
  const std::string path = (tmp.path / "bad.ckpt").string();
  std::ofstream(path, std::ios::binary) << "NOPE garbage";
  try {
    load_checkpoint<double>(path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Checkpoint, TruncationThrows) {
  TempDir tmp;
  const std::string full = (tmp.path / "full.ckpt").string();
  const std::string cut = (tmp.path / "cut.ckpt").string();
  auto model = trained_like_model<double>(8);
  save_checkpoint(model, full);
  const auto size = fs::file_size(full);
  std::ifstream in(full, std::ios::binary);
  std::vector<char> buf(size / 2);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  std::ofstream(cut, std::ios::binary).write(buf.data(), static_cast<std::streamsize>(buf.size()));
  try {
    load_checkpoint<double>(cut);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Checkpoint, PrecisionMismatchThrows) {
  TempDir tmp;
  const std::string path = (tmp.path / "f64.ckpt").string();
  auto model = trained_like_model<double>(10);
  save_checkpoint(model, path);
  try {
    load_checkpoint<float>(path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("precision"), std::string::npos);
  }
}

TEST(Checkpoint, MissingFileThrows) {
  EXPECT_THROW(load_checkpoint<double>("/nonexistent/dir/x.ckpt"), std::runtime_error);
}
