#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "mvi/experiment.hpp"
#include "mvi/metrics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mvi;

namespace {

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw exp::SchemaError("config", "cannot open " + path);
  try {
    return json::parse(f);
  } catch (const std::exception& e) {
    throw exp::SchemaError("config", std::string("parse error: ") + e.what());
  }
}

std::string cache_root_for(const std::string& out) {
  if (const char* env = std::getenv(exp::kCacheEnvVar)) return env;
  return out.empty() ? std::string("datasets") : out + "/datasets";
}

int cmd_dataset_build(const std::string& config, const std::string& out,
                      std::optional<uint64_t> seed, std::optional<int> folds) {
  json cfg = load_config(config);
  json dcfg = cfg.contains("dataset") ? cfg["dataset"] : cfg;
  if (seed) dcfg["seed"] = *seed;
  if (folds) dcfg["folds"] = *folds;
  data::TwoViewData d = exp::build_dataset(dcfg, cache_root_for(out));
  std::cout << "dataset '" << d.name << "': " << d.train.pair_count()
            << " train pairs, " << d.test.pair_count() << " test pairs, "
            << d.train.folds.k << " folds\n";
  return 0;
}

int cmd_run(const std::string& config, const std::string& out,
            std::optional<uint64_t> seed, std::optional<int> folds,
            bool resume) {
  exp::RunOptions opt;
  opt.output_dir = out;
  opt.seed = seed;
  opt.folds = folds;
  opt.resume = resume;
  std::string dir = exp::run_experiment(config, opt);
  std::cout << "results in " << dir << "\n";
  return 0;
}

int cmd_report(const std::string& out) {
  exp::emit_report(out);
  std::cout << "report in " << out << "/report\n";
  return 0;
}

// Standalone CKA between two checkpointed encoders on a dataset's test set.
// Config: {checkpoint_a, checkpoint_b, sub_a?, sub_b?, dataset{...},
//          batch_size?, seed?, sample_count?, layers?}.
int cmd_cka(const std::string& config, const std::string& out,
            std::optional<uint64_t> seed) {
  json cfg = load_config(config);
  data::TwoViewData d =
      exp::build_dataset(cfg.at("dataset"), cache_root_for(out));
  int class_count = d.train.view_a.class_count;

  exp::LoadedModels ma =
      exp::load_models(cfg.at("checkpoint_a").get<std::string>(), class_count);
  exp::LoadedModels mb =
      exp::load_models(cfg.at("checkpoint_b").get<std::string>(), class_count);
  char sa = cfg.value("sub_a", std::string("a"))[0];
  char sb = cfg.value("sub_b", std::string("b"))[0];

  eval::CkaConfig cc;
  cc.batch_size = cfg.value("batch_size", 8);
  cc.seed = seed ? *seed : cfg.value("seed", 0);
  int64_t sample_count = cfg.value("sample_count", 200);

  std::vector<int64_t> idx(static_cast<size_t>(d.test.pair_count()));
  std::iota(idx.begin(), idx.end(), 0);
  if (sample_count > 0 && sample_count < d.test.pair_count()) {
    Rng rng(cc.seed);
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(sample_count));
    std::sort(idx.begin(), idx.end());
  }
  std::vector<int64_t> rows_a, rows_b;
  for (int64_t pi : idx) {
    rows_a.push_back(d.test.pairs[static_cast<size_t>(pi)][0]);
    rows_b.push_back(d.test.pairs[static_cast<size_t>(pi)][1]);
  }
  nn::Encoder& ea = ma.encoder(sa);
  nn::Encoder& eb = mb.encoder(sb);
  Tensor imgs_a = train::gather_images(
      ma.trained_view(sa) == 'b' ? d.test.view_b : d.test.view_a,
      ma.trained_view(sa) == 'b' ? rows_b : rows_a);
  Tensor imgs_b = train::gather_images(
      mb.trained_view(sb) == 'b' ? d.test.view_b : d.test.view_a,
      mb.trained_view(sb) == 'b' ? rows_b : rows_a);

  std::vector<int> layers(static_cast<size_t>(ea.layer_count()));
  std::iota(layers.begin(), layers.end(), 0);
  if (cfg.contains("layers")) layers = cfg["layers"].get<std::vector<int>>();

  eval::CkaMatrix m = eval::cka_matrix(ea, eb, imgs_a, imgs_b, layers, layers, cc);

  std::ostream* os = &std::cout;
  std::ofstream fout;
  if (!out.empty()) {
    fs::create_directories(fs::path(out).parent_path().empty()
                               ? "."
                               : fs::path(out).parent_path().string());
    fout.open(out);
    os = &fout;
  }
  *os << "layer";
  for (int q : m.layers_b) *os << ",b" << q;
  *os << "\n";
  for (size_t p = 0; p < m.layers_a.size(); ++p) {
    *os << "a" << m.layers_a[p];
    for (size_t q = 0; q < m.layers_b.size(); ++q)
      *os << "," << m.values.data[p * m.layers_b.size() + q];
    *os << "\n";
  }
  return 0;
}

// Frozen-encoder transfer probe from a checkpoint onto a dataset view.
// Config: {checkpoint, sub?, dataset{...}, view?, train_cap?}.
int cmd_probe(const std::string& config, const std::string& out,
              std::optional<uint64_t> seed) {
  json cfg = load_config(config);
  data::TwoViewData d =
      exp::build_dataset(cfg.at("dataset"), cache_root_for(out));
  int class_count = d.train.view_a.class_count;

  exp::LoadedModels m =
      exp::load_models(cfg.at("checkpoint").get<std::string>(), class_count);
  char sub = cfg.value("sub", std::string("a"))[0];
  char view = cfg.value("view", std::string("b"))[0];
  int64_t cap = cfg.value("train_cap", 5000);

  std::vector<int64_t> train_pairs(static_cast<size_t>(d.train.pair_count()));
  std::iota(train_pairs.begin(), train_pairs.end(), 0);
  train::ViewSplit tr = train::gather_view(d.train, view, train_pairs, true);
  if (cap > 0 && tr.size() > cap)
    tr.image_indices.resize(static_cast<size_t>(cap));
  std::vector<int64_t> test_pairs(static_cast<size_t>(d.test.pair_count()));
  std::iota(test_pairs.begin(), test_pairs.end(), 0);
  train::ViewSplit te = train::gather_view(d.test, view, test_pairs, true);

  eval::ProbeResult pr = eval::linear_probe_transfer(
      m.encoder(sub), train::gather_images(tr.set(), tr.image_indices),
      tr.labels(), train::gather_images(te.set(), te.image_indices),
      te.labels(), class_count, seed ? *seed : 7);

  json r = {{"test_accuracy", pr.test_accuracy},
            {"encoder_hash_unchanged",
             pr.encoder_hash_before == pr.encoder_hash_after}};
  if (!out.empty()) {
    std::ofstream f(out);
    f << r.dump(2) << "\n";
  }
  std::cout << r.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view invariance trainer and analyzer"};
  app.set_version_flag("--version", std::string(exp::kVersion));
  app.require_subcommand(1);

  std::string config, out;
  std::optional<uint64_t> seed;
  std::optional<int> folds;
  bool resume = true;

  auto add_common = [&](CLI::App* c, bool need_config) {
    auto* copt = c->add_option("--config", config, "Config file (json)");
    if (need_config) copt->required();
    c->add_option("--out", out, "Output directory / file");
    c->add_option("--seed", seed, "Seed override");
    c->add_option("--folds", folds, "Fold-count override");
  };

  auto* ds = app.add_subcommand("dataset", "Dataset operations");
  ds->require_subcommand(1);
  auto* ds_build = ds->add_subcommand("build", "Build and cache a dataset");
  add_common(ds_build, true);

  auto* run = app.add_subcommand("run", "Run an experiment config");
  add_common(run, true);
  run->add_flag("--resume,!--no-resume", resume,
                "Reuse completed folds (default on)");

  auto* report = app.add_subcommand("report", "Emit report tables");
  report->add_option("--out", out, "Results directory")->required();

  auto* cka = app.add_subcommand("cka", "CKA between two checkpoints");
  add_common(cka, true);

  auto* probe = app.add_subcommand("probe", "Frozen-encoder transfer probe");
  add_common(probe, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ds_build->parsed()) return cmd_dataset_build(config, out, seed, folds);
    if (run->parsed()) return cmd_run(config, out, seed, folds, resume);
    if (report->parsed()) return cmd_report(out);
    if (cka->parsed()) return cmd_cka(config, out, seed);
    if (probe->parsed()) return cmd_probe(config, out, seed);
  } catch (const exp::SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nn::SpecError& e) {
    std::cerr << "config error (layer " << e.layer_index << "): " << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
