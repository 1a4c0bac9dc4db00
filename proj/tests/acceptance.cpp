// Acceptance suite: one pass/fail line per criterion. Training-based checks
// run reduced presets sized for a single CPU core; the pure-math suites run
// at full strength.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "mvi/experiment.hpp"
#include "mvi/metrics.hpp"

using namespace mvi;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void note(const std::string& name, const std::string& detail) {
  std::printf("SKIP %s: %s\n", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

Tensor randn(std::vector<int64_t> shape, Rng& rng, float sd = 1.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = sd * static_cast<float>(rng.normal());
  return t;
}

Tensor gram(const Tensor& x) {
  int64_t n = x.dim(0), d = x.dim(1);
  Tensor k({n, n});
  for (int64_t a = 0; a < n; ++a)
    for (int64_t b = 0; b < n; ++b) {
      double s = 0.0;
      for (int64_t j = 0; j < d; ++j)
        s += double(x.data[size_t(a * d + j)]) * x.data[size_t(b * d + j)];
      k.data[size_t(a * n + b)] = float(s);
    }
  return k;
}

double hsic_naive(const Tensor& kin, const Tensor& lin) {
  int64_t n = kin.dim(0);
  std::vector<double> K(size_t(n * n)), L(size_t(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      K[size_t(i * n + j)] = i == j ? 0.0 : kin.data[size_t(i * n + j)];
      L[size_t(i * n + j)] = i == j ? 0.0 : lin.data[size_t(i * n + j)];
    }
  double trKL = 0.0, sK = 0.0, sL = 0.0, oneKL1 = 0.0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      trKL += K[size_t(i * n + j)] * L[size_t(j * n + i)];
      sK += K[size_t(i * n + j)];
      sL += L[size_t(i * n + j)];
    }
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t m = 0; m < n; ++m)
        oneKL1 += K[size_t(i * n + j)] * L[size_t(j * n + m)];
  double nn_ = double(n);
  return (trKL + sK * sL / ((nn_ - 1) * (nn_ - 2)) -
          2.0 / (nn_ - 2) * oneKL1) /
         (nn_ * (nn_ - 3));
}

// --- shared reduced two-view digit data ------------------------------------

data::TwoViewData small_two_view(double fraction, uint64_t seed, int folds) {
  data::LabeledImageSet train =
      data::load_idx(std::string(MNIST_DIR) + "/train-images-idx3-ubyte.gz",
                     std::string(MNIST_DIR) + "/train-labels-idx1-ubyte.gz");
  data::LabeledImageSet test =
      data::load_idx(std::string(MNIST_DIR) + "/t10k-images-idx3-ubyte.gz",
                     std::string(MNIST_DIR) + "/t10k-labels-idx1-ubyte.gz");
  train = data::subsample(train, fraction, seed ^ 0xa5a5);
  test = data::subsample(test, fraction, seed ^ 0x5a5a);
  return data::make_two_view_mnist(train, test, seed, folds);
}

struct TrainedTriple {
  train::ClassifierModel upsl_a, upsl_b;
  train::PxlModelPair pxl;
};

train::TrainConfig reduced_cfg(const std::string& paradigm, uint64_t seed,
                               int epochs) {
  train::TrainConfig cfg;
  cfg.paradigm = paradigm;
  cfg.epochs = epochs;
  cfg.batch_size = 64;
  cfg.learning_rate = 4e-4;
  cfg.optimizer = "radam";
  cfg.seed = seed;
  cfg.encoder = nn::EncoderSpec::dcgan(1);
  return cfg;
}

double final_layer_cka(nn::Encoder& ea, nn::Encoder& eb,
                       const data::TwoViewData& d, int64_t samples,
                       uint64_t seed) {
  std::vector<int64_t> idx(size_t(d.test.pair_count()));
  std::iota(idx.begin(), idx.end(), 0);
  if (samples < d.test.pair_count()) {
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(size_t(samples));
    std::sort(idx.begin(), idx.end());
  }
  std::vector<int64_t> rows_a, rows_b;
  for (int64_t pi : idx) {
    rows_a.push_back(d.test.pairs[size_t(pi)][0]);
    rows_b.push_back(d.test.pairs[size_t(pi)][1]);
  }
  Tensor ia = train::gather_images(d.test.view_a, rows_a);
  Tensor ib = train::gather_images(d.test.view_b, rows_b);
  int last = ea.layer_count() - 1;
  eval::CkaConfig cc;
  cc.batch_size = 8;
  cc.seed = seed;
  eval::CkaMatrix m = eval::cka_matrix(ea, eb, ia, ib, {last}, {last}, cc);
  return m.values.data[0];
}

// --- criterion 1 ------------------------------------------------------------

void criterion_1() {
  const std::string name = "criterion 1 (Table reproduction, reduced preset)";
  try {
    std::string out = (fs::temp_directory_path() / "mvi_acc_c1").string();
    fs::remove_all(out);
    exp::RunOptions opt;
    opt.output_dir = out;
    exp::run_experiment(std::string(CONFIG_DIR) + "/two_view_mnist_reduced.json",
                        opt);
    std::ifstream rf(out + "/results.json");
    json r = json::parse(rf);
    double ua = r["upsl_a"]["test_accuracy"]["mean"];
    double ub = r["upsl_b"]["test_accuracy"]["mean"];
    double pa = r["pxl"]["test_accuracy_a"]["mean"];
    double pb = r["pxl"]["test_accuracy_b"]["mean"];
    bool ok = ua >= 0.95 && ub >= 0.95 && pa >= 0.95 && pb >= 0.95;
    report(name, ok,
           "upsl_a=" + fmt(ua) + " upsl_b=" + fmt(ub) + " pxl_a=" + fmt(pa) +
               " pxl_b=" + fmt(pb) + " (threshold 0.95)");
    fs::remove_all(out);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }

  const std::string svhn_name = "criterion 1 (two-domain reduced preset)";
  if (!fs::exists(std::string(SVHN_DIR) + "/train_32x32.mat")) {
    note(svhn_name,
         "cropped-digit corpus not present; place train_32x32.mat and "
         "test_32x32.mat under data/svhn/ and rerun (loader is covered by "
         "the in-repo MAT fixture tests)");
    return;
  }
  try {
    std::string out = (fs::temp_directory_path() / "mvi_acc_c1_svhn").string();
    fs::remove_all(out);
    exp::RunOptions opt;
    opt.output_dir = out;
    exp::run_experiment(std::string(CONFIG_DIR) + "/mnist_svhn_reduced.json",
                        opt);
    std::ifstream rf(out + "/results.json");
    json r = json::parse(rf);
    double um = r["upsl_mnist"]["test_accuracy"]["mean"];
    double us = r["upsl_svhn"]["test_accuracy"]["mean"];
    double ps = r["pxl"]["test_accuracy_b"]["mean"];
    bool ok = um >= 0.95 && us >= 0.70 && ps >= us - 0.01;
    report(svhn_name, ok,
           "upsl_mnist=" + fmt(um) + " upsl_svhn=" + fmt(us) +
               " pxl_svhn=" + fmt(ps));
    fs::remove_all(out);
  } catch (const std::exception& e) {
    report(svhn_name, false, std::string("exception: ") + e.what());
  }
}

// --- criteria 2 and 3 -------------------------------------------------------

void criteria_2_and_3() {
  try {
    data::TwoViewData d = small_two_view(0.02, 11, 5);
    auto tr_idx = d.train.folds.complement_indices(0);
    auto va_idx = d.train.folds.fold_indices(0);
    const int epochs = 8;

    // Criterion 2: between-view CKA of the jointly trained pair beats the
    // independently trained pair, per seed.
    std::vector<double> cka_upsl, cka_pxl;
    bool all_ordered = true;
    std::string detail;
    for (uint64_t seed : {21u, 22u, 23u}) {
      train::RunRecord ra, rb, rp;
      train::TrainConfig ca = reduced_cfg("upsl", seed, epochs);
      ca.view = 'a';
      train::ViewSplit tra = train::gather_view(d.train, 'a', tr_idx, true);
      train::ViewSplit vaa = train::gather_view(d.train, 'a', va_idx, true);
      train::ClassifierModel ma = train::train_upsl(tra, vaa, ca, 10, ra);

      train::TrainConfig cb = reduced_cfg("upsl", seed, epochs);
      cb.view = 'b';
      // Independently trained baseline: a distinct seed so the two UPSL
      // encoders do not share an initialization (shared init inflates their
      // between-view CKA).
      cb.seed = seed ^ 0x9e3779b9ull;
      train::ViewSplit trb = train::gather_view(d.train, 'b', tr_idx, true);
      train::ViewSplit vab = train::gather_view(d.train, 'b', va_idx, true);
      train::ClassifierModel mb = train::train_upsl(trb, vab, cb, 10, rb);

      train::TrainConfig cp = reduced_cfg("pxl", seed, epochs);
      train::PxlModelPair pair =
          train::train_pxl(train::gather_pairs(d.train, tr_idx),
                           train::gather_pairs(d.train, va_idx), cp, 10, rp);

      double cu = final_layer_cka(ma.encoder, mb.encoder, d, 200, seed);
      double cp_ = final_layer_cka(pair.model_a.encoder, pair.model_b.encoder,
                                   d, 200, seed);
      cka_upsl.push_back(cu);
      cka_pxl.push_back(cp_);
      all_ordered &= cp_ > cu;
      detail += "seed" + std::to_string(seed) + ": pxl=" + fmt(cp_) +
                " upsl=" + fmt(cu) + "  ";
    }
    report("criterion 2 (between-view CKA ordering)", all_ordered, detail);

    // Criterion 3: lambda sweep trend, one seed. The lambda=0 side needs
    // enough data that the contrastive representation generalizes to held-out
    // pairs (on tiny subsamples it overfits and its test-pair CKA collapses),
    // so this sweep runs on a 50% subsample with a short epoch budget.
    data::TwoViewData d3 = small_two_view(0.50, 11, 5);
    auto tr3_idx = d3.train.folds.complement_indices(0);
    auto va3_idx = d3.train.folds.fold_indices(0);
    double cka_l0 = 0, cka_l1 = 0, acc_l0 = 0, acc_l1 = 0;
    for (double lambda : {0.0, 0.5, 1.0}) {
      train::TrainConfig cp = reduced_cfg("pxl", 31, 10);
      cp.objective.lambda = lambda;
      train::RunRecord rec;
      train::PxlModelPair pair =
          train::train_pxl(train::gather_pairs(d3.train, tr3_idx),
                           train::gather_pairs(d3.train, va3_idx), cp, 10, rec);
      double cka = final_layer_cka(pair.model_a.encoder, pair.model_b.encoder,
                                   d3, 200, 31);
      std::vector<int64_t> test_idx(size_t(d3.test.pair_count()));
      std::iota(test_idx.begin(), test_idx.end(), 0);
      train::ViewSplit tea = train::gather_view(d3.test, 'a', test_idx, true);
      train::ViewSplit teb = train::gather_view(d3.test, 'b', test_idx, true);
      double acc =
          0.5 *
          (eval::accuracy(pair.model_a.predict(
               train::gather_images(tea.set(), tea.image_indices),
               tea.labels(), "a")) +
           eval::accuracy(pair.model_b.predict(
               train::gather_images(teb.set(), teb.image_indices),
               teb.labels(), "b")));
      if (lambda == 0.0) {
        cka_l0 = cka;
        acc_l0 = acc;
      } else if (lambda == 1.0) {
        cka_l1 = cka;
        acc_l1 = acc;
      }
    }
    bool ok = cka_l0 > cka_l1 && acc_l1 > acc_l0;
    report("criterion 3 (lambda sweep trend)", ok,
           "cka(l=0)=" + fmt(cka_l0) + " cka(l=1)=" + fmt(cka_l1) +
               " acc(l=0)=" + fmt(acc_l0) + " acc(l=1)=" + fmt(acc_l1));
  } catch (const std::exception& e) {
    report("criteria 2/3", false, std::string("exception: ") + e.what());
  }
}

// --- criterion 4 ------------------------------------------------------------

void criterion_4() {
  Rng rng(41);
  double worst_hsic = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int64_t n = 4 + rng.below(9);
    Tensor k = gram(randn({n, 3}, rng));
    Tensor l = gram(randn({n, 4}, rng));
    worst_hsic = std::max(
        worst_hsic, std::fabs(eval::unbiased_hsic(k, l) - hsic_naive(k, l)));
  }
  bool hsic_ok = worst_hsic < 1e-10;

  double worst_cka = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    int64_t n = 4 + rng.below(7);
    Tensor x = randn({n, 5}, rng), y = randn({n, 6}, rng);
    Tensor kx = gram(x), ky = gram(y);
    double brute = hsic_naive(kx, ky) /
                   std::sqrt(hsic_naive(kx, kx) * hsic_naive(ky, ky));
    worst_cka =
        std::max(worst_cka, std::fabs(eval::minibatch_cka(x, y, n, 9) - brute));
  }
  bool cka_ok = worst_cka < 1e-10;

  Tensor x = randn({64, 6}, rng);
  bool self_ok = std::fabs(eval::minibatch_cka(x, x, 8, 7) - 1.0) < 1e-6;

  Tensor y = randn({64, 6}, rng);
  double base = eval::minibatch_cka(x, y, 8, 7);
  Tensor xs = x;
  for (float& v : xs.data) v *= 2.5f;
  bool scale_ok = std::fabs(eval::minibatch_cka(xs, y, 8, 7) - base) < 1e-5;
  Tensor xr = x;
  const float ct = std::cos(0.8f), st = std::sin(0.8f);
  for (int64_t i = 0; i < 64; ++i) {
    float a = x.data[size_t(i * 6)], b = x.data[size_t(i * 6 + 2)];
    xr.data[size_t(i * 6)] = ct * a - st * b;
    xr.data[size_t(i * 6 + 2)] = st * a + ct * b;
  }
  bool rot_ok = std::fabs(eval::minibatch_cka(xr, y, 8, 7) - base) < 1e-5;

  Tensor yc = x;
  Rng noise(42);
  for (float& v : yc.data) v += 0.5f * float(noise.normal());
  auto mean_cka = [&](int64_t bs) {
    double s = 0.0;
    for (int r = 0; r < 200; ++r) s += eval::minibatch_cka(x, yc, bs, uint64_t(r));
    return s / 200.0;
  };
  double diff = std::fabs(mean_cka(8) - mean_cka(16));
  bool batch_ok = diff < 0.02;

  report("criterion 4 (math oracle suite)",
         hsic_ok && cka_ok && self_ok && scale_ok && rot_ok && batch_ok,
         "hsic_max_err=" + std::to_string(worst_hsic) +
             " cka_max_err=" + std::to_string(worst_cka) +
             " self=" + (self_ok ? "ok" : "bad") +
             " scale=" + (scale_ok ? "ok" : "bad") +
             " rot=" + (rot_ok ? "ok" : "bad") +
             " batch_mean_gap=" + fmt(diff));
}

// --- criterion 5 ------------------------------------------------------------

void criterion_5() {
  Rng rng(51);
  double worst = 0.0;
  const float eps = 3e-3f;
  for (int trial = 0; trial < 50; ++trial) {
    int64_t n = 3 + rng.below(4);  // 3..6 samples
    int64_t ddim = 4 + rng.below(5);
    int classes = 3;
    bool include = trial % 2 == 0;
    double lambda = (trial % 5) * 0.25;

    obj::ObjectiveConfig oc;
    oc.include_positive_in_denominator = include;

    Tensor li = randn({n, classes}, rng, 0.7f);
    Tensor lj = randn({n, classes}, rng, 0.7f);
    std::vector<int32_t> y;
    for (int64_t i = 0; i < n; ++i) y.push_back(int32_t(rng.below(classes)));
    Tensor hi = randn({n, ddim}, rng, 0.7f);
    Tensor hj = randn({n, ddim}, rng, 0.7f);

    Tensor dli, dlj, dhi(hi.shape), dhj(hj.shape);
    double sup = obj::supervised_loss(li, lj, y, &dli, &dlj);
    double con = obj::contrastive_loss(hi, hj, oc, &dhi, &dhj);
    (void)obj::pxl_objective(sup, con, lambda);

    // The combined objective's gradient w.r.t. each input block.
    auto combined = [&]() {
      double s = obj::supervised_loss(li, lj, y);
      double c = obj::contrastive_loss(hi, hj, oc);
      return obj::pxl_objective(s, c, lambda);
    };
    auto check_block = [&](Tensor& t, const Tensor& grad, double factor) {
      double num2 = 0.0, diff2 = 0.0;
      for (int64_t i = 0; i < t.numel(); ++i) {
        float orig = t.data[size_t(i)];
        t.data[size_t(i)] = orig + eps;
        double lp = combined();
        t.data[size_t(i)] = orig - eps;
        double lm = combined();
        t.data[size_t(i)] = orig;
        double numg = (lp - lm) / (2 * double(eps));
        double ana = factor * grad.data[size_t(i)];
        num2 += numg * numg;
        diff2 += (ana - numg) * (ana - numg);
      }
      worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(num2), 1.0));
    };
    check_block(li, dli, lambda);
    check_block(lj, dlj, lambda);
    check_block(hi, dhi, 1.0 - lambda);
    check_block(hj, dhj, 1.0 - lambda);
  }
  report("criterion 5 (gradient suite)", worst < 1e-4,
         "worst relative error " + std::to_string(worst) +
             " over 50 instances (both denominator variants)");
}

// --- criterion 6 ------------------------------------------------------------

void criterion_6() {
  Rng rng(61);
  bool ok = true;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    int n = 2 + int(rng.below(60));
    int classes = 2 + int(rng.below(6));
    eval::PredictionSet a, b;
    a.model_id = "a";
    b.model_id = "b";
    int ca = 0, cb = 0, cboth = 0;
    for (int i = 0; i < n; ++i) {
      int32_t t = int32_t(rng.below(classes));
      a.sample_ids.push_back(i);
      b.sample_ids.push_back(i);
      a.truth.push_back(t);
      b.truth.push_back(t);
      a.predicted.push_back(int32_t(rng.below(classes)));
      b.predicted.push_back(int32_t(rng.below(classes)));
      bool oka = a.predicted.back() == t, okb = b.predicted.back() == t;
      ca += oka;
      cb += okb;
      cboth += oka && okb;
    }
    ok &= eval::accuracy(a) == double(ca) / n;
    ok &= eval::accuracy(b) == double(cb) / n;
    double agree = eval::mutual_agreement(a, b);
    ok &= agree == double(cboth) / n;
    ok &= agree <= std::min(eval::accuracy(a), eval::accuracy(b)) + 1e-15;
  }
  report("criterion 6 (metric oracles)", ok,
         ok ? "1000 random prediction sets matched exhaustive counts"
            : "mismatch against exhaustive counting oracle");
}

// --- criterion 7 ------------------------------------------------------------

void criterion_7() {
  Rng rng(71);
  nn::Encoder enc(nn::EncoderSpec::dcgan(1), rng);
  Tensor imgs({20, 1, 32, 32});
  std::vector<int32_t> labels;
  for (int i = 0; i < 20; ++i) {
    labels.push_back(int32_t(i % 4));
    for (int64_t p = 0; p < 1024; ++p)
      imgs.data[size_t(i * 1024 + p)] = float(rng.uniform());
  }
  eval::ProbeResult pr =
      eval::linear_probe_transfer(enc, imgs, labels, imgs, labels, 4);
  bool frozen = pr.encoder_hash_before == pr.encoder_hash_after;

  const int n = 80, c = 8;
  Tensor z({n, c});
  std::vector<int32_t> y;
  for (int i = 0; i < n; ++i) {
    y.push_back(int32_t(i % c));
    z.data[size_t(i * c + i % c)] = 1.0f;
  }
  double acc = eval::fit_eval_logistic_probe(z, y, z, y, c);
  report("criterion 7 (frozen-probe contract)", frozen && acc == 1.0,
         std::string("hash ") + (frozen ? "unchanged" : "CHANGED") +
             ", one-hot probe accuracy " + fmt(acc));
}

// --- synthetic agreement gap -------------------------------------------------

void agreement_gap() {
  try {
    int wins = 0, seeds = 5;
    std::string detail;
    for (uint64_t seed = 81; seed < 81 + uint64_t(seeds); ++seed) {
      data::LabeledImageSet corpus =
          data::make_synthetic_corpus(40, 6, 32, seed, 0.45);
      std::vector<data::TransformSpec> specs(2);
      specs[0].name = "identity";
      specs[1].name = "gaussian_smooth";
      specs[1].params["sigma"] = 3.0;
      auto views = data::synthetic_pipeline_views(corpus, specs, seed);
      data::TwoViewData d = data::pair_views(views[0], views[1], seed, 4, 0.25);
      auto tr_idx = d.train.folds.complement_indices(0);
      auto va_idx = d.train.folds.fold_indices(0);

      train::TrainConfig base = reduced_cfg("upsl", seed, 11);
      base.batch_size = 32;
      base.learning_rate = 1e-3;
      base.optimizer = "adam";

      train::RunRecord ra, rb, rp;
      train::TrainConfig ca = base;
      ca.view = 'a';
      auto ma = train::train_upsl(train::gather_view(d.train, 'a', tr_idx, true),
                                  train::gather_view(d.train, 'a', va_idx, true),
                                  ca, 6, ra);
      train::TrainConfig cb = base;
      cb.view = 'b';
      auto mb = train::train_upsl(train::gather_view(d.train, 'b', tr_idx, true),
                                  train::gather_view(d.train, 'b', va_idx, true),
                                  cb, 6, rb);
      train::TrainConfig cp = base;
      cp.paradigm = "pxl";
      cp.objective.lambda = 0.75;
      auto pair = train::train_pxl(train::gather_pairs(d.train, tr_idx),
                                   train::gather_pairs(d.train, va_idx), cp, 6,
                                   rp);

      std::vector<int64_t> test_idx(size_t(d.test.pair_count()));
      std::iota(test_idx.begin(), test_idx.end(), 0);
      train::ViewSplit tea = train::gather_view(d.test, 'a', test_idx, true);
      train::ViewSplit teb = train::gather_view(d.test, 'b', test_idx, true);
      Tensor ia = train::gather_images(tea.set(), tea.image_indices);
      Tensor ib = train::gather_images(teb.set(), teb.image_indices);

      double agree_upsl = eval::mutual_agreement(
          ma.predict(ia, tea.labels(), "upsl_a"),
          mb.predict(ib, teb.labels(), "upsl_b"));
      double agree_pxl = eval::mutual_agreement(
          pair.model_a.predict(ia, tea.labels(), "pxl_a"),
          pair.model_b.predict(ib, teb.labels(), "pxl_b"));
      wins += agree_pxl >= agree_upsl;
      detail += "seed" + std::to_string(seed) + ": pxl=" + fmt(agree_pxl) +
                " upsl=" + fmt(agree_upsl) + "  ";
    }
    report("synthetic agreement gap (pxl vs upsl)", wins * 2 > seeds,
           detail + "(" + std::to_string(wins) + "/" + std::to_string(seeds) +
               " seeds)");
  } catch (const std::exception& e) {
    report("synthetic agreement gap", false,
           std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  agreement_gap();
  criteria_2_and_3();
  criterion_1();
  std::printf("%s (%d failure%s)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
              g_failures, g_failures == 1 ? "" : "s");
  return g_failures == 0 ? 0 : 1;
}
