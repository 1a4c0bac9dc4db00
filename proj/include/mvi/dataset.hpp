#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "mvi/rng.hpp"
#include "mvi/tensor.hpp"

namespace mvi::data {

struct LabeledImageSet {
  Tensor images;  // (N, C, H, W), intensities in [0, 1]
  std::vector<int32_t> labels;
  int class_count = 0;

  int64_t count() const { return images.ndim() ? images.dim(0) : 0; }
  // Copy of sample i as a (C, H, W) tensor.
  Tensor image(int64_t i) const;
  void set_image(int64_t i, const Tensor& img);
  void validate() const;  // invariant check, throws on violation
};

struct FoldAssignment {
  std::vector<int32_t> fold_of_sample;
  int k = 0;
  uint64_t seed = 0;

  std::vector<int64_t> fold_indices(int fold) const;
  std::vector<int64_t> complement_indices(int fold) const;
};

// Per-class fold counts differ by at most one; deterministic in seed.
// Throws if any class has fewer than k members or k < 2.
FoldAssignment stratified_kfold_split(const std::vector<int32_t>& labels, int k,
                                      uint64_t seed);

enum class PairingMode { by_subject, by_label };

struct MultiViewDataset {
  LabeledImageSet view_a, view_b;
  std::vector<std::array<int64_t, 2>> pairs;  // (index into a, index into b)
  std::vector<int32_t> labels;                // one label per pair
  PairingMode pairing_mode = PairingMode::by_subject;
  FoldAssignment folds;  // over pairs; empty k==0 for held-out sets
  // Construction-time per-pair metadata (e.g. rotation angles).
  std::map<std::string, std::vector<float>> metadata;

  int64_t pair_count() const { return static_cast<int64_t>(pairs.size()); }
  void validate() const;
};

// Cross-validation portion plus the held-out test portion of one benchmark.
struct TwoViewData {
  MultiViewDataset train;  // with fold assignment
  MultiViewDataset test;
  uint64_t seed = 0;
  std::string name;
};

// --- corpus loaders -------------------------------------------------------

// IDX image/label archive pair (the standard digit-corpus distribution
// format), gzipped or raw. Intensities are rescaled to [0, 1].
LabeledImageSet load_idx(const std::string& images_path,
                         const std::string& labels_path);

// SVHN cropped-digit MAT file (v5 container with X: 32x32x3xN uint8 and
// y: Nx1 labels, label 10 meaning digit 0).
LabeledImageSet load_svhn_mat(const std::string& path);

// Deterministic stratified subsample keeping `fraction` of each class.
LabeledImageSet subsample(const LabeledImageSet& corpus, double fraction,
                          uint64_t seed);

// --- multi-view builders --------------------------------------------------

// View 1: random rotation in [-pi/4, pi/4] (angle stored in metadata
// "rotation_angle"); view 2: per-pixel U[0,1] additive noise followed by a
// second rescale to the unit interval. Images are first rescaled and resized
// to 32x32. Stratified k-fold over the training corpus; test corpus becomes
// the held-out set with the same view transforms.
TwoViewData make_two_view_mnist(const LabeledImageSet& train_corpus,
                                const LabeledImageSet& test_corpus,
                                uint64_t seed, int k_folds = 5);

// Label-paired two-domain dataset: per class, both corpora are shuffled and
// zipped pairs_per_instance times over the first min(count_a, count_b)
// entries, so every instance on the smaller side of each class appears in
// exactly pairs_per_instance pairs. View a is resized to 32x32. Folds are
// stratified over the pairing labels.
TwoViewData make_mnist_svhn(const LabeledImageSet& mnist_train,
                            const LabeledImageSet& mnist_test,
                            const LabeledImageSet& svhn_train,
                            const LabeledImageSet& svhn_test,
                            int pairs_per_instance, uint64_t seed,
                            int k_folds = 5);

// Procedural classification corpus (class-specific blob patterns with
// per-sample jitter and noise); used where a real corpus is unnecessary.
LabeledImageSet make_synthetic_corpus(int per_class, int class_count,
                                      int64_t side, uint64_t seed,
                                      double noise_sd = 0.15);

// --- synthetic pipeline views ---------------------------------------------

struct TransformSpec {
  std::string name;  // identity | gaussian_smooth | affine_warp |
                     // intensity_bias | additive_noise
  std::map<std::string, double> params;
  std::string noise_distribution = "uniform";  // additive_noise only
};

// One deterministic-given-seed view of every sample per descriptor.
std::vector<LabeledImageSet> synthetic_pipeline_views(
    const LabeledImageSet& corpus, const std::vector<TransformSpec>& specs,
    uint64_t seed);

// By-subject pairing of two already-constructed views of the same corpus.
TwoViewData pair_views(const LabeledImageSet& view_a,
                       const LabeledImageSet& view_b, uint64_t seed,
                       int k_folds, double test_fraction = 0.2);

// --- disk cache -----------------------------------------------------------

void save_two_view(const std::string& dir, const TwoViewData& d);
TwoViewData load_two_view(const std::string& dir);

}  // namespace mvi::data
