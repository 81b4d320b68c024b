// Command-line surface for the MRRN segmentation pipeline: phantom data
// generation, training, evaluation, prediction overlays, gradient checking,
// parameter accounting, and report rendering.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mrrn/arch.hpp"
#include "mrrn/checkpoint.hpp"
#include "mrrn/gradcheck_suite.hpp"
#include "mrrn/image_io.hpp"
#include "mrrn/metrics.hpp"
#include "mrrn/phantom.hpp"
#include "mrrn/run_config.hpp"
#include "mrrn/training.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::string precision;
  std::string model;
  long seed = -1;
  double lr = -1;
  int epochs = -1;
  int batch_size = -1;
  int threads = 1;
};

mrrn::RunConfig resolve(const CommonFlags& f) {
  mrrn::KeyValueConfig kv;
  if (!f.config_path.empty()) kv = mrrn::KeyValueConfig::parse_file(f.config_path);
  if (f.seed >= 0) kv.set("run.seed", std::to_string(f.seed));
  if (!f.precision.empty()) kv.set("run.precision", f.precision);
  if (!f.model.empty()) kv.set("run.model", f.model);
  if (!f.out_dir.empty()) kv.set("run.out", f.out_dir);
  if (!f.data_dir.empty()) kv.set("data.dir", f.data_dir);
  if (f.lr >= 0) kv.set("train.lr", std::to_string(f.lr));
  if (f.epochs >= 0) kv.set("train.epochs", std::to_string(f.epochs));
  if (f.batch_size >= 0) kv.set("train.batch_size", std::to_string(f.batch_size));
  return mrrn::RunConfig::from_config(kv);
}

void echo_config(const mrrn::RunConfig& rc) {
  fs::create_directories(rc.out_dir);
  std::ofstream os(rc.out_dir + "/config.resolved");
  os << rc.resolved_text();
}

const std::vector<mrrn::LabeledSlice>& pick_split(const mrrn::Dataset& ds,
                                                  const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw std::runtime_error("unknown split '" + split + "' (expected train|val|test)");
}

template <typename T>
int cmd_train(const mrrn::RunConfig& rc) {
  auto ds = mrrn::read_dataset(rc.data_dir);
  auto model = rc.model_kind == "unet" ? mrrn::Model<T>::build_unet(rc.arch, rc.seed)
                                       : mrrn::Model<T>::build_mrrn(rc.arch, rc.seed);
  mrrn::TrainConfig tc = rc.train;
  tc.checkpoint_dir = rc.out_dir;
  echo_config(rc);
  auto result = mrrn::train(model, ds.train, ds.val, tc);
  mrrn::write_history_csv(result.history, rc.out_dir + "/history.csv");
  std::cout << "best epoch " << result.best_epoch << " with validation DSC avg "
            << result.best_dsc_avg << "\n";
  std::cout << "wrote " << rc.out_dir << "/history.csv and " << rc.out_dir << "/best.ckpt\n";
  return 0;
}

template <typename T>
int cmd_eval(const mrrn::RunConfig& rc, const std::string& ckpt, const std::string& split,
             const std::string& method) {
  auto ds = mrrn::read_dataset(rc.data_dir);
  const auto& slices = pick_split(ds, split);
  if (slices.empty()) throw std::runtime_error("split '" + split + "' is empty");
  auto model = mrrn::load_checkpoint<T>(ckpt);
  model.set_training(false);

  std::map<std::string, std::vector<double>> per_case;
  for (const auto& slice : slices) {
    auto pred = mrrn::predict(model, slice);
    mrrn::LabelMask gt(1, slice.size, slice.size);
    gt.labels = slice.mask;
    for (int label = 1; label <= 5; ++label)
      per_case[mrrn::structure_names()[label - 1]].push_back(mrrn::dsc(pred, gt, label));
  }
  mrrn::MethodStats stats;
  for (auto& [name, values] : per_case) stats[name] = mrrn::aggregate(values);

  echo_config(rc);
  std::ofstream os(rc.out_dir + "/eval.csv");
  os << mrrn::emit_table({{method, stats}}, mrrn::TableFormat::csv);
  std::cout << mrrn::emit_table({{method, stats}}, mrrn::TableFormat::text);
  std::cout << "wrote " << rc.out_dir << "/eval.csv\n";
  return 0;
}

template <typename T>
int cmd_predict(const mrrn::RunConfig& rc, const std::string& ckpt, const std::string& split) {
  auto ds = mrrn::read_dataset(rc.data_dir);
  const auto& slices = pick_split(ds, split);
  if (slices.empty()) throw std::runtime_error("split '" + split + "' is empty");
  auto model = mrrn::load_checkpoint<T>(ckpt);
  model.set_training(false);
  echo_config(rc);
  for (const auto& slice : slices) {
    auto pred = mrrn::predict(model, slice);
    mrrn::write_mask_pgm(pred, 0, rc.out_dir + "/" + slice.slice_id + "_pred.pgm");
    mrrn::write_overlay_ppm(slice, pred, rc.out_dir + "/" + slice.slice_id + "_overlay.ppm");
  }
  std::cout << "wrote " << slices.size() << " prediction/overlay pairs to " << rc.out_dir << "\n";
  return 0;
}

template <typename T>
int cmd_gradcheck(int instances) {
  auto reports = mrrn::run_gradcheck_suite<T>(instances);
  bool ok = true;
  for (const auto& r : reports) {
    std::cout << (r.passed() ? "PASS" : "FAIL") << "  " << r.op << "  max relative error "
              << r.max_rel_err << " (tolerance " << r.tolerance << ", " << r.instances
              << " instances)\n";
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

int cmd_param_count(const mrrn::RunConfig& rc) {
  auto model = rc.model_kind == "unet" ? mrrn::Model<float>::build_unet(rc.arch)
                                       : mrrn::Model<float>::build_mrrn(rc.arch);
  const long count = model.count_params();
  std::cout << "trainable parameters: " << count << "\n";
  if (rc.arch.reference_param_target) {
    std::cout << "reference target: " << *rc.arch.reference_param_target << " (delta "
              << count - *rc.arch.reference_param_target << ")\n";
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_path) {
  std::vector<std::pair<std::string, mrrn::MethodStats>> methods;
  for (const auto& path : csv_paths) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("report: cannot open " + path);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string method, structure, field;
      std::getline(ls, method, ',');
      std::getline(ls, structure, ',');
      mrrn::DSCStats st;
      std::getline(ls, field, ',');
      st.values.resize(std::stoul(field));
      std::getline(ls, field, ',');
      st.mean = std::stod(field);
      std::getline(ls, field, ',');
      st.stddev = std::stod(field);
      std::getline(ls, field, ',');
      st.median = std::stod(field);
      std::getline(ls, field, ',');
      st.q1 = std::stod(field);
      std::getline(ls, field, ',');
      st.q3 = std::stod(field);
      auto it = std::find_if(methods.begin(), methods.end(),
                             [&](auto& m) { return m.first == method; });
      if (it == methods.end()) {
        methods.push_back({method, {}});
        it = methods.end() - 1;
      }
      it->second[structure] = std::move(st);
    }
  }
  const std::string table = mrrn::emit_table(methods, mrrn::TableFormat::text);
  std::cout << table;
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << table;
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_generate(const mrrn::RunConfig& rc, long n_train, long n_val, long n_test) {
  auto manifest = mrrn::make_splits(n_train, n_val, n_test, rc.seed);
  std::vector<mrrn::LabeledSlice> slices;
  slices.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto s = mrrn::generate_phantom(rc.phantom, mrrn::derive_seed(rc.seed, i));
    s.slice_id = manifest[i].slice_id;
    slices.push_back(std::move(s));
  }
  fs::create_directories(rc.data_dir.empty() ? rc.out_dir : rc.data_dir);
  const std::string dir = rc.data_dir.empty() ? rc.out_dir : rc.data_dir;
  mrrn::write_dataset(slices, manifest, dir);
  std::cout << "wrote " << slices.size() << " slices (" << n_train << "/" << n_val << "/"
            << n_test << " train/val/test) to " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MRRN thoracic segmentation pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--config", flags.config_path, "key=value config file");
  app.add_option("--out", flags.out_dir, "output directory");
  app.add_option("--data", flags.data_dir, "dataset directory");
  app.add_option("--precision", flags.precision, "f32 or f64");
  app.add_option("--model", flags.model, "mrrn or unet");
  app.add_option("--seed", flags.seed, "RNG seed (default: MRRN_SEED env or 0)");
  app.add_option("--lr", flags.lr, "learning rate override");
  app.add_option("--epochs", flags.epochs, "epoch count override");
  app.add_option("--batch-size", flags.batch_size, "batch size override");
  app.add_option("--threads", flags.threads, "worker threads (1 = deterministic mode)");

  auto* gen = app.add_subcommand("generate-data", "generate a synthetic phantom corpus");
  long n_train = 200, n_val = 35, n_test = 50, gen_size = -1;
  gen->add_option("--train", n_train, "training slices");
  gen->add_option("--val", n_val, "validation slices");
  gen->add_option("--test", n_test, "test slices");
  gen->add_option("--size", gen_size, "slice size (power of two)");

  auto* tr = app.add_subcommand("train", "train a model and keep the best-validation checkpoint");

  auto* ev = app.add_subcommand("eval", "per-case DSC statistics for a checkpoint on a split");
  std::string ckpt, split = "test", method = "MRRN";
  ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ev->add_option("--split", split, "train|val|test");
  ev->add_option("--method", method, "method name used in the emitted table");

  auto* pr = app.add_subcommand("predict", "write predicted masks and overlay images");
  std::string pr_ckpt, pr_split = "test";
  pr->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
  pr->add_option("--split", pr_split, "train|val|test");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_instances = 20;
  gc->add_option("--instances", gc_instances, "random instances per op");

  auto* pc = app.add_subcommand("param-count", "trainable parameter count for a config");
  bool pc_reference = false;
  pc->add_flag("--reference", pc_reference, "use the reference architecture defaults");

  auto* rp = app.add_subcommand("report", "render a summary table from eval CSVs");
  std::vector<std::string> rp_inputs;
  std::string rp_out;
  rp->add_option("--in", rp_inputs, "eval.csv files")->required();
  rp->add_option("--out-file", rp_out, "write the table here as well");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (gen_size > 0) {
        mrrn::KeyValueConfig kv;
        // size flows through the resolved config so provenance captures it
        if (!flags.config_path.empty()) kv = mrrn::KeyValueConfig::parse_file(flags.config_path);
        kv.set("data.size", std::to_string(gen_size));
        kv.set("arch.input_size", std::to_string(gen_size));
        if (flags.seed >= 0) kv.set("run.seed", std::to_string(flags.seed));
        if (!flags.out_dir.empty()) kv.set("run.out", flags.out_dir);
        if (!flags.data_dir.empty()) kv.set("data.dir", flags.data_dir);
        return cmd_generate(mrrn::RunConfig::from_config(kv), n_train, n_val, n_test);
      }
      return cmd_generate(resolve(flags), n_train, n_val, n_test);
    }
    const mrrn::RunConfig rc = resolve(flags);
    const bool f64 = rc.precision == "f64";
    if (tr->parsed()) return f64 ? cmd_train<double>(rc) : cmd_train<float>(rc);
    if (ev->parsed()) return f64 ? cmd_eval<double>(rc, ckpt, split, method)
                                 : cmd_eval<float>(rc, ckpt, split, method);
    if (pr->parsed()) return f64 ? cmd_predict<double>(rc, pr_ckpt, pr_split)
                                 : cmd_predict<float>(rc, pr_ckpt, pr_split);
    if (gc->parsed()) return f64 ? cmd_gradcheck<double>(gc_instances)
                                 : cmd_gradcheck<float>(gc_instances);
    if (pc->parsed()) {
      if (pc_reference) {
        mrrn::RunConfig ref = rc;
        ref.arch = mrrn::reference_arch_config();
        return cmd_param_count(ref);
      }
      return cmd_param_count(rc);
    }
    if (rp->parsed()) return cmd_report(rp_inputs, rp_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
