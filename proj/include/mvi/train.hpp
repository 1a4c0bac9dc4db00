#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvi/dataset.hpp"
#include "mvi/encoder.hpp"
#include "mvi/metrics.hpp"
#include "mvi/objectives.hpp"

namespace mvi::train {

struct TrainConfig {
  std::string paradigm = "upsl";  // upsl | mpsl | pxl
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 4e-4;
  std::string optimizer = "radam";  // adam | radam
  uint64_t seed = 0;
  int fold = 0;
  char view = 'a';  // upsl only: which view to train on
  nn::EncoderSpec encoder;
  // pxl only: view-b encoder when the views differ in shape; defaults to
  // `encoder` when absent.
  std::optional<nn::EncoderSpec> encoder_b;
  obj::ObjectiveConfig objective;  // pxl only
  bool best_validation_checkpoint = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // Stable hash of the serialized config; keys checkpoint resumability.
  std::string hash() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0, train_accuracy = 0.0;
  double val_loss = 0.0, val_accuracy = 0.0;
  // pxl loss components
  double supervised = 0.0, contrastive = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;
  double wall_seconds = 0.0;
  std::string config_hash;

  void save_csv(const std::string& path) const;
};

// Adam / RAdam over a flat parameter list.
class Optimizer {
 public:
  Optimizer(std::vector<nn::Param*> params, const std::string& kind, double lr);
  void zero_grad();
  void step();

 private:
  std::vector<nn::Param*> params_;
  std::vector<Tensor> m_, v_;
  bool radam_ = false;
  double lr_;
  int64_t t_ = 0;
};

// Encoder plus linear classification head.
struct ClassifierModel {
  nn::Encoder encoder;
  nn::Linear head;

  ClassifierModel(const nn::EncoderSpec& spec, int class_count, Rng& rng);
  // (z, logits); caches for backward.
  std::pair<Tensor, Tensor> forward(const Tensor& batch, bool training);
  std::vector<nn::Param*> params();
  std::vector<Tensor*> state_tensors();

  eval::PredictionSet predict(const Tensor& images,
                              const std::vector<int32_t>& truth,
                              const std::string& model_id,
                              int64_t batch_size = 256);
};

struct PxlModelPair {
  ClassifierModel model_a, model_b;
  nn::Mlp proj_a, proj_b;

  PxlModelPair(const nn::EncoderSpec& spec_a, const nn::EncoderSpec& spec_b,
               int class_count, const obj::ProjectionHeadSpec& head, Rng& rng);
  std::vector<Tensor*> state_tensors();
};

// Index-based splits; image batches are materialized per minibatch so the
// large full-scale sets are never copied wholesale.
struct ViewSplit {
  const data::MultiViewDataset* d = nullptr;
  char view = 'a';
  std::vector<int64_t> image_indices;

  const data::LabeledImageSet& set() const {
    return view == 'a' ? d->view_a : d->view_b;
  }
  int64_t size() const { return static_cast<int64_t>(image_indices.size()); }
  std::vector<int32_t> labels() const;
};
// Images a set of pairs references in one view; duplicates collapse when
// dedupe is on (by-label pairings reference images many times).
ViewSplit gather_view(const data::MultiViewDataset& d, char view,
                      const std::vector<int64_t>& pair_indices, bool dedupe);

struct PairSplit {
  const data::MultiViewDataset* d = nullptr;
  std::vector<int64_t> pair_indices;

  int64_t size() const { return static_cast<int64_t>(pair_indices.size()); }
};
PairSplit gather_pairs(const data::MultiViewDataset& d,
                       const std::vector<int64_t>& pair_indices);

// Rows `idx` of a (N, C, H, W) image set as one batch tensor.
Tensor gather_images(const data::LabeledImageSet& set,
                     const std::vector<int64_t>& idx);

// Single-view supervised training (cross-entropy).
ClassifierModel train_upsl(const ViewSplit& train, const ViewSplit& val,
                           const TrainConfig& cfg, int class_count,
                           RunRecord& record);

// One encoder on the shuffled union of both views.
ClassifierModel train_mpsl(const PairSplit& train, const PairSplit& val,
                           const TrainConfig& cfg, int class_count,
                           RunRecord& record);

// Joint two-encoder training on the lambda-weighted objective.
PxlModelPair train_pxl(const PairSplit& train, const PairSplit& val,
                       const TrainConfig& cfg, int class_count,
                       RunRecord& record);

struct FoldResult {
  int fold = 0;
  std::map<std::string, double> metrics;
  std::vector<std::string> checkpoints;
};

struct ResultTable {
  std::vector<FoldResult> folds;
  // metric -> (mean, std over folds); std absent (nullopt) for one fold.
  std::map<std::string, std::pair<double, std::optional<double>>> aggregate() const;
};

// Runs cfg across every fold of d.train (or the first max_folds of them when
// max_folds > 0), evaluating within-sample accuracy (and mutual agreement for
// pxl) on the held-out test set. Checkpoints and per-epoch CSVs land in
// out_dir; folds whose checkpoint already exists with a matching config hash
// are skipped.
ResultTable cross_validate(const data::TwoViewData& d, const TrainConfig& cfg,
                           const std::string& out_dir, int max_folds = 0);

}  // namespace mvi::train
