#pragma once

#include <string>
#include <vector>

#include "mvi/encoder.hpp"
#include "mvi/rng.hpp"
#include "mvi/tensor.hpp"

namespace mvi::eval {

struct PredictionSet {
  std::vector<int64_t> sample_ids;
  std::vector<int32_t> predicted;
  std::vector<int32_t> truth;
  std::string model_id;

  void check_aligned() const;
};

struct ActivationMatrix {
  Tensor values;  // m x u
  int layer_id = 0;
  std::vector<int64_t> sample_ids;
};

// Fraction of predictions equal to ground truth.
double accuracy(const PredictionSet& preds);

// Fraction of samples where both models predict the true label.
// Throws if the two sets disagree on sample ids or ground truth.
double mutual_agreement(const PredictionSet& a, const PredictionSet& b);

// (m, c, spatial...) -> (m, c * prod(spatial)), row-major (c outermost).
Tensor flatten_activations(const Tensor& t);

// Unbiased HSIC estimator on two n x n Gram matrices (diagonals zeroed
// internally). Requires n >= 4.
double unbiased_hsic(const Tensor& k, const Tensor& l);

// Minibatch CKA over seeded random batches of size n; remainder rows after
// the shuffle are dropped. Throws a diagnostic error if a denominator HSIC
// mean is negative (no silent clamping).
double minibatch_cka(const Tensor& x, const Tensor& y, int64_t n,
                     uint64_t seed);

struct CkaConfig {
  int64_t batch_size = 8;
  uint64_t seed = 0;
};

struct CkaMatrix {
  Tensor values;  // L_a x L_b
  std::vector<int> layers_a, layers_b;
  int64_t batch_size = 8;
  uint64_t seed = 0;
};

// Post-nonlinearity activations of the requested layers over `images`,
// rows in ascending sample order (the canonical ordering shared across
// models). Runs in eval mode.
std::vector<ActivationMatrix> extract_activations(nn::Encoder& encoder,
                                                  const Tensor& images,
                                                  const std::vector<int>& layers,
                                                  int64_t batch_size = 256);

// Entry (p, q) = minibatch CKA between flattened activations of layer p of
// encoder a and layer q of encoder b on the same row-aligned image set.
CkaMatrix cka_matrix(nn::Encoder& enc_a, nn::Encoder& enc_b,
                     const Tensor& images_a, const Tensor& images_b,
                     const std::vector<int>& layers_a,
                     const std::vector<int>& layers_b, const CkaConfig& cfg);

struct ProbeResult {
  double test_accuracy = 0.0;
  uint64_t encoder_hash_before = 0;
  uint64_t encoder_hash_after = 0;
};

// Frozen-encoder transfer probe: representations are extracted for both
// splits, an L2-regularized multinomial logistic regression (strength 1.0,
// up to 1000 iterations, per-feature standardization from train statistics)
// is fit on the train split, and test accuracy returned. The encoder is
// never mutated; the result carries its parameter hash before and after.
ProbeResult linear_probe_transfer(nn::Encoder& encoder,
                                  const Tensor& train_images,
                                  const std::vector<int32_t>& train_labels,
                                  const Tensor& test_images,
                                  const std::vector<int32_t>& test_labels,
                                  int class_count, uint64_t seed = 7);

// Probe on precomputed feature matrices (used directly by tests and by
// linear_probe_transfer).
double fit_eval_logistic_probe(const Tensor& z_train,
                               const std::vector<int32_t>& train_labels,
                               const Tensor& z_test,
                               const std::vector<int32_t>& test_labels,
                               int class_count, uint64_t seed = 7);

}  // namespace mvi::eval
