#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "mvi/dataset.hpp"
#include "mvi/tensor.hpp"

using namespace mvi;
using namespace mvi::data;

namespace {

const std::string kMnistDir = MNIST_DIR;
const std::string kTestData = TEST_DATA_DIR;

LabeledImageSet tiny_corpus(int per_class, int classes, uint64_t seed) {
  return make_synthetic_corpus(per_class, classes, 16, seed, 0.1);
}

}  // namespace

TEST_CASE("idx loader reads the canonical digit test corpus") {
  LabeledImageSet s = load_idx(kMnistDir + "/t10k-images-idx3-ubyte.gz",
                               kMnistDir + "/t10k-labels-idx1-ubyte.gz");
  REQUIRE(s.count() == 10000);
  CHECK(s.images.shape == std::vector<int64_t>{10000, 1, 28, 28});
  CHECK(s.class_count == 10);
  // First five labels of the published test split.
  CHECK(s.labels[0] == 7);
  CHECK(s.labels[1] == 2);
  CHECK(s.labels[2] == 1);
  CHECK(s.labels[3] == 0);
  CHECK(s.labels[4] == 4);
  for (float v : s.images.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  s.validate();
}

TEST_CASE("svhn mat loader matches an independently written reference") {
  LabeledImageSet s = load_svhn_mat(kTestData + "/svhn_fixture.mat");
  REQUIRE(s.count() == 40);
  REQUIRE(s.images.shape == std::vector<int64_t>{40, 3, 8, 8});
  // Reference arrays were dumped by the tool that wrote the .mat file.
  Tensor ref = load_npy(kTestData + "/svhn_fixture_X.npy");  // (H, W, C, N)
  for (int64_t n = 0; n < 40; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t h = 0; h < 8; ++h)
        for (int64_t w = 0; w < 8; ++w) {
          float got = s.images.data[size_t(((n * 3 + c) * 8 + h) * 8 + w)];
          float want = ref.data[size_t(((h * 8 + w) * 3 + c) * 40 + n)];
          REQUIRE(got == doctest::Approx(want));
        }
  // Stored labels cycle 1..10; 10 means digit zero.
  CHECK(s.labels[0] == 1);
  CHECK(s.labels[9] == 0);
  CHECK(s.class_count == 10);
}

TEST_CASE("stratified k-fold balances every class") {
  std::vector<int32_t> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10 + c; ++i) labels.push_back(c);
  FoldAssignment f = stratified_kfold_split(labels, 4, 11);
  REQUIRE(f.fold_of_sample.size() == labels.size());

  std::map<int32_t, std::map<int32_t, int>> counts;
  for (size_t i = 0; i < labels.size(); ++i)
    ++counts[labels[i]][f.fold_of_sample[i]];
  for (auto& [cls, per_fold] : counts) {
    int lo = 1 << 30, hi = 0;
    for (int k = 0; k < 4; ++k) {
      lo = std::min(lo, per_fold[k]);
      hi = std::max(hi, per_fold[k]);
    }
    CHECK(hi - lo <= 1);
  }

  FoldAssignment g = stratified_kfold_split(labels, 4, 11);
  CHECK(g.fold_of_sample == f.fold_of_sample);
  FoldAssignment h = stratified_kfold_split(labels, 4, 12);
  CHECK(h.fold_of_sample != f.fold_of_sample);

  auto inside = f.fold_indices(0);
  auto outside = f.complement_indices(0);
  CHECK(inside.size() + outside.size() == labels.size());

  CHECK_THROWS(stratified_kfold_split(labels, 1, 0));
  CHECK_THROWS(stratified_kfold_split({0, 0, 1}, 2, 0));  // class 1 too small
}

TEST_CASE("stratified subsample keeps class proportions") {
  LabeledImageSet s = tiny_corpus(40, 5, 3);
  LabeledImageSet t = subsample(s, 0.25, 9);
  CHECK(t.count() == 50);
  std::map<int32_t, int> per;
  for (int32_t l : t.labels) ++per[l];
  for (auto& [cls, n] : per) CHECK(n == 10);
  t.validate();
  LabeledImageSet t2 = subsample(s, 0.25, 9);
  CHECK(t2.labels == t.labels);
  CHECK(t2.images.data == t.images.data);
}

TEST_CASE("two-view digit construction meets its contract") {
  LabeledImageSet train = tiny_corpus(20, 4, 5);
  LabeledImageSet test = tiny_corpus(5, 4, 6);
  TwoViewData d = make_two_view_mnist(train, test, 42, 4);

  CHECK(d.train.view_a.images.shape ==
        std::vector<int64_t>{80, 1, 32, 32});
  CHECK(d.train.pair_count() == 80);
  CHECK(d.test.pair_count() == 20);
  CHECK(d.train.folds.k == 4);
  CHECK(d.test.folds.k == 0);
  d.train.validate();
  d.test.validate();

  // Pairs are by-subject: pair i references sample i in both views.
  for (int64_t i = 0; i < d.train.pair_count(); ++i) {
    CHECK(d.train.pairs[size_t(i)][0] == i);
    CHECK(d.train.pairs[size_t(i)][1] == i);
  }

  // Rotation angles recorded and inside [-pi/4, pi/4].
  REQUIRE(d.train.metadata.count("rotation_angle"));
  const auto& angles = d.train.metadata.at("rotation_angle");
  REQUIRE(angles.size() == 80);
  bool some_nonzero = false;
  for (float a : angles) {
    CHECK(std::fabs(a) <= float(M_PI) / 4 + 1e-6f);
    some_nonzero |= std::fabs(a) > 1e-4f;
  }
  CHECK(some_nonzero);

  // Both views stay in the unit interval; the views differ.
  for (float v : d.train.view_b.images.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  CHECK(d.train.view_a.images.data != d.train.view_b.images.data);

  // Determinism in the seed.
  TwoViewData d2 = make_two_view_mnist(train, test, 42, 4);
  CHECK(d2.train.view_b.images.data == d.train.view_b.images.data);
  TwoViewData d3 = make_two_view_mnist(train, test, 43, 4);
  CHECK(d3.train.view_b.images.data != d.train.view_b.images.data);
}

TEST_CASE("label pairing zips classes the documented number of times") {
  LabeledImageSet a_train = tiny_corpus(12, 3, 7);
  LabeledImageSet a_test = tiny_corpus(4, 3, 8);
  LabeledImageSet b_train = make_synthetic_corpus(9, 3, 8, 9, 0.1);
  LabeledImageSet b_test = make_synthetic_corpus(3, 3, 8, 10, 0.1);

  TwoViewData d = make_mnist_svhn(a_train, a_test, b_train, b_test, 4, 1, 3);
  // Per class min(12, 9) = 9 instances, zipped 4 times.
  CHECK(d.train.pair_count() == 3 * 9 * 4);
  CHECK(d.train.pairing_mode == PairingMode::by_label);
  d.train.validate();

  // Every pair joins same-label samples.
  for (size_t p = 0; p < d.train.pairs.size(); ++p) {
    int32_t la = d.train.view_a.labels[size_t(d.train.pairs[p][0])];
    int32_t lb = d.train.view_b.labels[size_t(d.train.pairs[p][1])];
    CHECK(la == lb);
    CHECK(la == d.train.labels[p]);
  }

  // Each smaller-side sample appears exactly pairs_per_instance times.
  std::map<int64_t, int> uses;
  for (auto& pr : d.train.pairs) ++uses[pr[1]];
  std::map<int32_t, std::set<int64_t>> used_by_class;
  for (auto& [idx, n] : uses) {
    CHECK(n == 4);
    used_by_class[d.train.view_b.labels[size_t(idx)]].insert(idx);
  }
  for (auto& [cls, idxs] : used_by_class) CHECK(idxs.size() == 9);
}

TEST_CASE("pipeline views apply each descriptor deterministically") {
  LabeledImageSet corpus = tiny_corpus(6, 3, 21);
  std::vector<TransformSpec> specs(2);
  specs[0].name = "identity";
  specs[1].name = "gaussian_smooth";
  specs[1].params["sigma"] = 1.2;

  auto views = synthetic_pipeline_views(corpus, specs, 77);
  REQUIRE(views.size() == 2);
  CHECK(views[0].images.data == corpus.images.data);
  CHECK(views[1].images.data != corpus.images.data);

  auto again = synthetic_pipeline_views(corpus, specs, 77);
  CHECK(again[1].images.data == views[1].images.data);

  std::vector<TransformSpec> bad(2);
  bad[0].name = "identity";
  bad[1].name = "mystery";
  CHECK_THROWS(synthetic_pipeline_views(corpus, bad, 0));
}

TEST_CASE("view pairing splits off a stratified test set") {
  LabeledImageSet corpus = tiny_corpus(20, 3, 31);
  std::vector<TransformSpec> specs(2);
  specs[0].name = "identity";
  specs[1].name = "additive_noise";
  specs[1].params["scale"] = 0.2;
  auto views = synthetic_pipeline_views(corpus, specs, 5);

  TwoViewData d = pair_views(views[0], views[1], 3, 4, 0.25);
  CHECK(d.train.pair_count() == 45);
  CHECK(d.test.pair_count() == 15);
  CHECK(d.train.folds.k == 4);
  d.train.validate();
  d.test.validate();

  std::map<int32_t, int> per;
  for (int32_t l : d.test.labels) ++per[l];
  for (auto& [cls, n] : per) CHECK(n == 5);
}

TEST_CASE("disk round trip preserves a two-view dataset") {
  LabeledImageSet train = tiny_corpus(8, 3, 41);
  LabeledImageSet test = tiny_corpus(3, 3, 42);
  TwoViewData d = make_two_view_mnist(train, test, 1, 3);

  std::string dir =
      (std::filesystem::temp_directory_path() / "mvi_two_view_rt").string();
  std::filesystem::remove_all(dir);
  save_two_view(dir, d);
  TwoViewData e = load_two_view(dir);

  CHECK(e.train.view_a.images.data == d.train.view_a.images.data);
  CHECK(e.train.view_b.images.data == d.train.view_b.images.data);
  CHECK(e.train.labels == d.train.labels);
  CHECK(e.train.pairs == d.train.pairs);
  CHECK(e.train.folds.fold_of_sample == d.train.folds.fold_of_sample);
  CHECK(e.train.folds.k == d.train.folds.k);
  CHECK(e.train.metadata.at("rotation_angle") ==
        d.train.metadata.at("rotation_angle"));
  CHECK(e.test.labels == d.test.labels);
  CHECK(e.name == d.name);
  std::filesystem::remove_all(dir);
}
