#include "mvi/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "mvi/metrics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mvi::exp {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

const json& require(const json& j, const std::string& key,
                    const std::string& path) {
  if (!j.contains(key)) throw SchemaError(path + "." + key, "missing field");
  return j[key];
}

data::TransformSpec parse_transform(const json& j, const std::string& path) {
  data::TransformSpec t;
  t.name = require(j, "name", path).get<std::string>();
  for (auto& [k, v] : j.items()) {
    if (k == "name") continue;
    if (k == "distribution")
      t.noise_distribution = v.get<std::string>();
    else if (v.is_number())
      t.params[k] = v.get<double>();
    else
      throw SchemaError(path + "." + k, "expected a number");
  }
  return t;
}

}  // namespace

data::TwoViewData build_dataset(const json& dcfg, const std::string& cache_root) {
  std::string kind = require(dcfg, "kind", "dataset").get<std::string>();
  std::string cache_dir =
      cache_root + "/" + kind + "_" + hex64(fnv1a(dcfg.dump()));
  if (fs::exists(cache_dir + "/manifest.json"))
    return data::load_two_view(cache_dir);

  uint64_t seed = dcfg.value("seed", 1);
  int folds = dcfg.value("folds", 5);
  double subsample_fraction = dcfg.value("subsample", 1.0);

  data::TwoViewData d;
  if (kind == "two_view_mnist" || kind == "mnist_svhn") {
    std::string mnist_dir = dcfg.value("mnist_dir", "data/mnist");
    data::LabeledImageSet train = data::load_idx(
        mnist_dir + "/train-images-idx3-ubyte.gz",
        mnist_dir + "/train-labels-idx1-ubyte.gz");
    data::LabeledImageSet test =
        data::load_idx(mnist_dir + "/t10k-images-idx3-ubyte.gz",
                       mnist_dir + "/t10k-labels-idx1-ubyte.gz");
    if (subsample_fraction < 1.0) {
      train = data::subsample(train, subsample_fraction, seed ^ 0xa5a5);
      test = data::subsample(test, subsample_fraction, seed ^ 0x5a5a);
    }
    if (kind == "two_view_mnist") {
      d = data::make_two_view_mnist(train, test, seed, folds);
    } else {
      std::string svhn_train_path =
          require(dcfg, "svhn_train", "dataset").get<std::string>();
      std::string svhn_test_path =
          require(dcfg, "svhn_test", "dataset").get<std::string>();
      data::LabeledImageSet svhn_train = data::load_svhn_mat(svhn_train_path);
      data::LabeledImageSet svhn_test = data::load_svhn_mat(svhn_test_path);
      if (subsample_fraction < 1.0) {
        svhn_train = data::subsample(svhn_train, subsample_fraction, seed ^ 0x33);
        svhn_test = data::subsample(svhn_test, subsample_fraction, seed ^ 0x44);
      }
      d = data::make_mnist_svhn(train, test, svhn_train, svhn_test,
                                dcfg.value("pairs_per_instance", 20), seed,
                                folds);
    }
  } else if (kind == "synthetic") {
    int per_class = dcfg.value("per_class", 100);
    int classes = dcfg.value("classes", 10);
    int side = dcfg.value("side", 32);
    double noise_sd = dcfg.value("noise_sd", 0.15);
    data::LabeledImageSet corpus = data::make_synthetic_corpus(
        per_class, classes, side, seed ^ 0xc0ffee, noise_sd);
    const json& tj = require(dcfg, "transforms", "dataset");
    if (!tj.is_array() || tj.size() < 2)
      throw SchemaError("dataset.transforms", "need at least 2 transforms");
    std::vector<data::TransformSpec> specs;
    for (size_t i = 0; i < tj.size(); ++i)
      specs.push_back(parse_transform(tj[i], "dataset.transforms[" +
                                                std::to_string(i) + "]"));
    auto views = data::synthetic_pipeline_views(corpus, specs, seed);
    int va = 0, vb = 1;
    if (dcfg.contains("view_pair")) {
      va = dcfg["view_pair"][0];
      vb = dcfg["view_pair"][1];
    }
    d = data::pair_views(views[static_cast<size_t>(va)],
                         views[static_cast<size_t>(vb)], seed, folds,
                         dcfg.value("test_fraction", 0.2));
  } else {
    throw SchemaError("dataset.kind", "unknown dataset kind " + kind);
  }
  data::save_two_view(cache_dir, d);
  return d;
}

// --- checkpoint loading ---------------------------------------------------

nn::Encoder& LoadedModels::encoder(char sub) {
  if (pxl) return sub == 'b' ? pxl->model_b.encoder : pxl->model_a.encoder;
  return single->encoder;
}

char LoadedModels::trained_view(char sub) const {
  std::string paradigm = config.value("paradigm", "upsl");
  if (paradigm == "pxl") return sub;
  if (paradigm == "mpsl") return sub;  // one encoder, either view applies
  return config.value("view", std::string("a"))[0];
}

LoadedModels load_models(const std::string& checkpoint_path, int class_count) {
  // Peek at the header to learn the paradigm, then rebuild and load.
  std::ifstream f(checkpoint_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + checkpoint_path);
  char magic[8];
  uint64_t hlen;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  json cfg = json::parse(hs).at("metadata");
  f.close();

  LoadedModels out;
  out.config = cfg;
  nn::EncoderSpec spec = nn::EncoderSpec::from_json(cfg.at("encoder"));
  nn::EncoderSpec spec_b =
      cfg.contains("encoder_b") ? nn::EncoderSpec::from_json(cfg["encoder_b"])
                                : spec;
  Rng rng(0);
  if (cfg.value("paradigm", "upsl") == "pxl") {
    obj::ObjectiveConfig oc = obj::ObjectiveConfig::from_json(cfg.at("objective"));
    out.pxl.emplace(spec, spec_b, class_count, oc.projection_head, rng);
    nn::load_checkpoint(checkpoint_path, out.pxl->state_tensors());
  } else {
    out.single.emplace(spec, class_count, rng);
    nn::load_checkpoint(checkpoint_path, out.single->state_tensors());
  }
  return out;
}

// --- experiment runner ----------------------------------------------------

namespace {

struct ModelRef {
  std::string run;
  char sub = 'a';
};

ModelRef parse_model_ref(const std::string& s, const std::string& path) {
  ModelRef r;
  auto pos = s.find(':');
  r.run = s.substr(0, pos);
  if (pos != std::string::npos) {
    std::string sub = s.substr(pos + 1);
    if (sub != "a" && sub != "b")
      throw SchemaError(path, "model sub must be 'a' or 'b' in " + s);
    r.sub = sub[0];
  }
  return r;
}

// Row-aligned test image subset for CKA: a seeded choice of pairs, rows in
// ascending pair order so every model sees the same samples.
std::vector<int64_t> cka_pair_subset(const data::MultiViewDataset& test,
                                     int64_t count, uint64_t seed) {
  std::vector<int64_t> idx(static_cast<size_t>(test.pair_count()));
  std::iota(idx.begin(), idx.end(), 0);
  if (count > 0 && count < test.pair_count()) {
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(count));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

void write_cka_csv(const std::string& path, const eval::CkaMatrix& m) {
  std::ofstream f(path);
  f << "layer";
  for (int q : m.layers_b) f << ",b" << q;
  f << "\n";
  for (size_t p = 0; p < m.layers_a.size(); ++p) {
    f << "a" << m.layers_a[p];
    for (size_t q = 0; q < m.layers_b.size(); ++q)
      f << "," << m.values.data[p * m.layers_b.size() + q];
    f << "\n";
  }
}

train::TrainConfig parse_run(const json& rj, const std::string& path,
                             int64_t in_channels_a, int64_t in_channels_b) {
  train::TrainConfig cfg;
  cfg.paradigm = require(rj, "paradigm", path).get<std::string>();
  cfg.epochs = rj.value("epochs", 200);
  cfg.batch_size = rj.value("batch_size", 64);
  cfg.learning_rate = rj.value("learning_rate", 4e-4);
  cfg.optimizer = rj.value("optimizer", "radam");
  cfg.seed = rj.value("seed", 0);
  cfg.view = rj.value("view", std::string("a"))[0];
  int64_t own_channels = cfg.view == 'b' ? in_channels_b : in_channels_a;
  if (rj.contains("encoder") && rj["encoder"].is_object() &&
      rj["encoder"].contains("layers"))
    cfg.encoder = nn::EncoderSpec::from_json(rj["encoder"]);
  else
    cfg.encoder = nn::EncoderSpec::dcgan(
        cfg.paradigm == "pxl" ? in_channels_a : own_channels);
  if (cfg.paradigm == "pxl") {
    if (rj.contains("encoder_b"))
      cfg.encoder_b = nn::EncoderSpec::from_json(rj["encoder_b"]);
    else if (in_channels_b != in_channels_a)
      cfg.encoder_b = nn::EncoderSpec::dcgan(in_channels_b);
  }
  if (cfg.paradigm == "pxl") {
    if (rj.contains("objective"))
      cfg.objective = obj::ObjectiveConfig::from_json(rj["objective"]);
    if (rj.contains("lambda")) cfg.objective.lambda = rj["lambda"].get<double>();
    try {
      cfg.objective.validate();
    } catch (const std::exception& e) {
      throw SchemaError(path + ".objective", e.what());
    }
  }
  cfg.best_validation_checkpoint = rj.value("best_validation_checkpoint", false);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw SchemaError(path, e.what());
  }
  return cfg;
}

}  // namespace

std::string run_experiment(const std::string& config_path,
                           const RunOptions& options) {
  std::ifstream cf(config_path);
  if (!cf) throw SchemaError("config", "cannot open " + config_path);
  json cfg;
  try {
    cfg = json::parse(cf);
  } catch (const std::exception& e) {
    throw SchemaError("config", std::string("parse error: ") + e.what());
  }

  std::string name = require(cfg, "name", "").get<std::string>();
  json dcfg = require(cfg, "dataset", "");
  const json& runs = require(cfg, "runs", "");
  if (!runs.is_array() || runs.empty())
    throw SchemaError("runs", "need a non-empty array");

  std::string out =
      !options.output_dir.empty()
          ? options.output_dir
          : require(cfg, "output_dir", "").get<std::string>();
  fs::create_directories(out);

  if (!options.resume) {
    fs::remove(out + "/experiment_complete.json");
    for (const auto& e : fs::directory_iterator(out))
      if (e.is_directory() && e.path().filename().string().rfind("run_", 0) == 0)
        fs::remove_all(e.path());
  } else if (fs::exists(out + "/experiment_complete.json")) {
    std::cout << "experiment already complete in " << out << "\n";
    return out;
  }

  if (options.seed) dcfg["seed"] = *options.seed;
  if (options.folds) dcfg["folds"] = *options.folds;

  std::string cache_root;
  if (const char* env = std::getenv(kCacheEnvVar))
    cache_root = env;
  else
    cache_root = out + "/datasets";

  std::string started = timestamp();
  data::TwoViewData d = build_dataset(dcfg, cache_root);
  int class_count = d.train.view_a.class_count;
  int64_t in_channels_a = d.train.view_a.images.dim(1);
  int64_t in_channels_b = d.train.view_b.images.dim(1);

  json manifest;
  manifest["name"] = name;
  manifest["version"] = kVersion;
  manifest["started"] = started;
  manifest["config"] = cfg;
  manifest["config_hash"] = hex64(fnv1a(cfg.dump()));
  manifest["dataset_fingerprint"] = hex64(fnv1a(dcfg.dump()));
  manifest["dataset_cache_root"] = cache_root;
  manifest["outputs"] = json::array();

  // Cross-validation runs.
  std::map<std::string, train::ResultTable> tables;
  std::map<std::string, train::TrainConfig> run_cfgs;
  std::set<std::string> run_names;
  json results;
  for (size_t ri = 0; ri < runs.size(); ++ri) {
    std::string path = "runs[" + std::to_string(ri) + "]";
    std::string rname = require(runs[ri], "name", path).get<std::string>();
    if (!run_names.insert(rname).second)
      throw SchemaError(path + ".name", "duplicate run name " + rname);
    train::TrainConfig tc =
        parse_run(runs[ri], path, in_channels_a, in_channels_b);
    if (options.seed) tc.seed = *options.seed + tc.seed;
    std::string run_dir = out + "/run_" + rname;
    std::cout << "[run " << rname << "] paradigm=" << tc.paradigm
              << " epochs=" << tc.epochs << " folds=" << d.train.folds.k
              << "\n";
    train::ResultTable t =
        train::cross_validate(d, tc, run_dir, runs[ri].value("max_folds", 0));
    json agg;
    for (auto& [metric, mv] : t.aggregate()) {
      agg[metric]["mean"] = mv.first;
      if (mv.second)
        agg[metric]["std"] = *mv.second;
      else
        agg[metric]["std"] = nullptr;  // single fold: absent, not zero
    }
    results[rname] = agg;
    manifest["outputs"].push_back(run_dir);
    run_cfgs.emplace(rname, tc);
    tables.emplace(rname, std::move(t));
  }

  // CKA evaluation.
  json eval_cfg = cfg.value("evaluation", json::object());
  if (eval_cfg.contains("cka") && eval_cfg["cka"].value("enabled", true)) {
    const json& cj = eval_cfg["cka"];
    eval::CkaConfig cc;
    cc.batch_size = cj.value("batch_size", 8);
    cc.seed = cj.value("seed", 0);
    int64_t sample_count = cj.value("sample_count", 200);
    fs::create_directories(out + "/cka");
    json cka_summary;

    auto subset = cka_pair_subset(d.test, sample_count, cc.seed);
    std::vector<int64_t> rows_a, rows_b;
    for (int64_t pi : subset) {
      rows_a.push_back(d.test.pairs[static_cast<size_t>(pi)][0]);
      rows_b.push_back(d.test.pairs[static_cast<size_t>(pi)][1]);
    }
    Tensor imgs_a = train::gather_images(d.test.view_a, rows_a);
    Tensor imgs_b = train::gather_images(d.test.view_b, rows_b);

    for (const auto& pj : cj.value("pairs", json::array())) {
      ModelRef ra = parse_model_ref(pj.at("a"), "evaluation.cka.pairs.a");
      ModelRef rb = parse_model_ref(pj.at("b"), "evaluation.cka.pairs.b");
      std::string tag = std::string(pj.value("tag", ra.run + "_" +
                                                        std::string(1, ra.sub) +
                                                        "__" + rb.run + "_" +
                                                        std::string(1, rb.sub)));
      if (!tables.count(ra.run))
        throw SchemaError("evaluation.cka.pairs.a", "unknown run " + ra.run);
      if (!tables.count(rb.run))
        throw SchemaError("evaluation.cka.pairs.b", "unknown run " + rb.run);
      const auto& ta = tables.at(ra.run);
      const auto& tb = tables.at(rb.run);
      for (size_t fi = 0; fi < ta.folds.size(); ++fi) {
        LoadedModels ma = load_models(ta.folds[fi].checkpoints.at(0), class_count);
        LoadedModels mb = load_models(tb.folds[fi].checkpoints.at(0), class_count);
        nn::Encoder& ea = ma.encoder(ra.sub);
        nn::Encoder& eb = mb.encoder(rb.sub);
        std::vector<int> layers(static_cast<size_t>(ea.layer_count()));
        std::iota(layers.begin(), layers.end(), 0);
        if (cj.contains("layers")) layers = cj["layers"].get<std::vector<int>>();
        char va = ma.trained_view(ra.sub), vb = mb.trained_view(rb.sub);
        const Tensor& ia = va == 'b' ? imgs_b : imgs_a;
        const Tensor& ib = vb == 'b' ? imgs_b : imgs_a;
        eval::CkaMatrix m = eval::cka_matrix(ea, eb, ia, ib, layers, layers, cc);
        std::string csv =
            out + "/cka/" + tag + "_fold" + std::to_string(fi) + ".csv";
        write_cka_csv(csv, m);
        cka_summary[tag]["fold" + std::to_string(fi)]["final_layer"] =
            m.values.data[m.values.numel() - 1];
        manifest["outputs"].push_back(csv);
      }
    }
    results["cka"] = cka_summary;
  }

  // Transfer probe.
  if (eval_cfg.contains("probe") && eval_cfg["probe"].value("enabled", true)) {
    const json& pj = eval_cfg["probe"];
    ModelRef ref = parse_model_ref(
        require(pj, "encoder", "evaluation.probe").get<std::string>(),
        "evaluation.probe.encoder");
    char probe_view = pj.value("view", std::string("b"))[0];
    int64_t cap = pj.value("train_cap", 5000);
    if (!tables.count(ref.run))
      throw SchemaError("evaluation.probe.encoder", "unknown run " + ref.run);
    const auto& t = tables.at(ref.run);
    json probe_results;
    for (size_t fi = 0; fi < t.folds.size(); ++fi) {
      LoadedModels m = load_models(t.folds[fi].checkpoints.at(0), class_count);
      std::vector<int64_t> all_pairs(static_cast<size_t>(d.train.pair_count()));
      std::iota(all_pairs.begin(), all_pairs.end(), 0);
      train::ViewSplit tr = train::gather_view(d.train, probe_view, all_pairs, true);
      if (cap > 0 && tr.size() > cap) tr.image_indices.resize(static_cast<size_t>(cap));
      std::vector<int64_t> test_pairs(static_cast<size_t>(d.test.pair_count()));
      std::iota(test_pairs.begin(), test_pairs.end(), 0);
      train::ViewSplit te = train::gather_view(d.test, probe_view, test_pairs, true);
      eval::ProbeResult pr = eval::linear_probe_transfer(
          m.encoder(ref.sub), train::gather_images(tr.set(), tr.image_indices),
          tr.labels(), train::gather_images(te.set(), te.image_indices),
          te.labels(), class_count);
      probe_results["fold" + std::to_string(fi)] = {
          {"test_accuracy", pr.test_accuracy},
          {"encoder_hash_unchanged",
           pr.encoder_hash_before == pr.encoder_hash_after}};
    }
    results["probe"] = probe_results;
  }

  manifest["finished"] = timestamp();
  {
    std::ofstream f(out + "/experiment_manifest.json");
    f << manifest.dump(2) << "\n";
  }
  {
    std::ofstream f(out + "/results.json");
    f << results.dump(2) << "\n";
  }
  {
    std::ofstream f(out + "/experiment_complete.json");
    f << json{{"finished", timestamp()}}.dump(2) << "\n";
  }
  return out;
}

// --- report ---------------------------------------------------------------

void emit_report(const std::string& results_dir) {
  if (!fs::exists(results_dir + "/results.json"))
    throw std::runtime_error("no results.json in " + results_dir +
                             " (directory empty or experiment incomplete)");
  std::ifstream rf(results_dir + "/results.json");
  json results = json::parse(rf);

  fs::create_directories(results_dir + "/report");

  // Per-metric aggregate table; std left blank for single-fold runs.
  {
    std::ofstream f(results_dir + "/report/summary.csv");
    f << "run,metric,mean,std\n";
    for (auto& [run, metrics] : results.items()) {
      if (run == "cka" || run == "probe") continue;
      for (auto& [metric, mv] : metrics.items()) {
        f << run << "," << metric << "," << mv["mean"].get<double>() << ",";
        if (!mv["std"].is_null()) f << mv["std"].get<double>();
        f << "\n";
      }
    }
  }

  // Side-by-side comparison of test accuracies across runs.
  {
    std::set<std::string> metrics;
    for (auto& [run, ms] : results.items()) {
      if (run == "cka" || run == "probe") continue;
      for (auto& [metric, mv] : ms.items())
        if (metric.rfind("test_accuracy", 0) == 0 ||
            metric == "mutual_agreement")
          metrics.insert(metric);
    }
    std::ofstream f(results_dir + "/report/comparison.csv");
    f << "run";
    for (const auto& m : metrics) f << "," << m;
    f << "\n";
    for (auto& [run, ms] : results.items()) {
      if (run == "cka" || run == "probe") continue;
      f << run;
      for (const auto& m : metrics) {
        f << ",";
        if (ms.contains(m)) f << ms[m]["mean"].get<double>();
      }
      f << "\n";
    }
  }

  // Lambda sweep series from the experiment config, when present.
  if (fs::exists(results_dir + "/experiment_manifest.json")) {
    std::ifstream mf(results_dir + "/experiment_manifest.json");
    json manifest = json::parse(mf);
    const json& runs = manifest["config"]["runs"];
    std::vector<std::pair<double, std::string>> lambdas;
    for (const auto& r : runs)
      if (r.value("paradigm", "") == "pxl" && r.contains("lambda"))
        lambdas.push_back({r["lambda"].get<double>(), r["name"]});
    if (lambdas.size() >= 2) {
      std::sort(lambdas.begin(), lambdas.end());
      std::ofstream f(results_dir + "/report/lambda_sweep.csv");
      f << "lambda,test_accuracy_a,test_accuracy_b,final_layer_cka\n";
      for (auto& [lambda, rname] : lambdas) {
        f << lambda;
        for (const char* m : {"test_accuracy_a", "test_accuracy_b"}) {
          f << ",";
          if (results.contains(rname) && results[rname].contains(m))
            f << results[rname][m]["mean"].get<double>();
        }
        f << ",";
        if (results.contains("cka")) {
          // mean final-layer CKA across folds of any tag mentioning the run
          double sum = 0.0;
          int cnt = 0;
          for (auto& [tag, folds] : results["cka"].items()) {
            if (tag.find(rname) == std::string::npos) continue;
            for (auto& [fk, fv] : folds.items()) {
              sum += fv["final_layer"].get<double>();
              ++cnt;
            }
          }
          if (cnt > 0) f << sum / cnt;
        }
        f << "\n";
      }
    }
  }
}

}  // namespace mvi::exp
