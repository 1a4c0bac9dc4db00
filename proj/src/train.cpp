#include "mvi/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mvi::train {

// --- TrainConfig ----------------------------------------------------------

void TrainConfig::validate() const {
  if (paradigm != "upsl" && paradigm != "mpsl" && paradigm != "pxl")
    throw std::invalid_argument("train config: unknown paradigm " + paradigm);
  if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0.0)
    throw std::invalid_argument("train config: epochs/batch/lr must be positive");
  if (optimizer != "adam" && optimizer != "radam")
    throw std::invalid_argument("train config: unknown optimizer " + optimizer);
  if (view != 'a' && view != 'b')
    throw std::invalid_argument("train config: view must be 'a' or 'b'");
  if (paradigm == "pxl") objective.validate();
}

json TrainConfig::to_json() const {
  json j;
  j["paradigm"] = paradigm;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["optimizer"] = optimizer;
  j["seed"] = seed;
  j["fold"] = fold;
  j["view"] = std::string(1, view);
  j["encoder"] = encoder.to_json();
  if (encoder_b) j["encoder_b"] = encoder_b->to_json();
  if (paradigm == "pxl") j["objective"] = objective.to_json();
  j["best_validation_checkpoint"] = best_validation_checkpoint;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.paradigm = j.value("paradigm", c.paradigm);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.seed = j.value("seed", c.seed);
  c.fold = j.value("fold", c.fold);
  c.view = j.value("view", std::string("a"))[0];
  if (j.contains("encoder")) c.encoder = nn::EncoderSpec::from_json(j["encoder"]);
  if (j.contains("encoder_b"))
    c.encoder_b = nn::EncoderSpec::from_json(j["encoder_b"]);
  if (j.contains("objective"))
    c.objective = obj::ObjectiveConfig::from_json(j["objective"]);
  c.best_validation_checkpoint = j.value("best_validation_checkpoint", false);
  c.validate();
  return c;
}

std::string TrainConfig::hash() const {
  // FNV-1a over the canonical serialization (fold excluded so one hash names
  // the whole cross-validation family; fold is in the file name).
  json j = to_json();
  j.erase("fold");
  std::string s = j.dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void RunRecord::save_csv(const std::string& path) const {
  std::ofstream f(path);
  f << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,supervised,"
       "contrastive\n";
  for (const auto& e : epochs)
    f << e.epoch << "," << e.train_loss << "," << e.train_accuracy << ","
      << e.val_loss << "," << e.val_accuracy << "," << e.supervised << ","
      << e.contrastive << "\n";
}

// --- Optimizer ------------------------------------------------------------

Optimizer::Optimizer(std::vector<nn::Param*> params, const std::string& kind,
                     double lr)
    : params_(std::move(params)), radam_(kind == "radam"), lr_(lr) {
  if (kind != "adam" && kind != "radam")
    throw std::invalid_argument("optimizer: unknown kind " + kind);
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Optimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Optimizer::step() {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  double b1t = std::pow(b1, static_cast<double>(t_));
  double b2t = std::pow(b2, static_cast<double>(t_));
  // RAdam variance rectification (Liu et al. schedule).
  double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  double rho_t = rho_inf - 2.0 * t_ * b2t / (1.0 - b2t);
  bool rectified = !radam_ || rho_t > 4.0;
  double r_t = 1.0;
  if (radam_ && rectified)
    r_t = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                    ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

  for (size_t pi = 0; pi < params_.size(); ++pi) {
    nn::Param* p = params_[pi];
    float* m = m_[pi].ptr();
    float* v = v_[pi].ptr();
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double g = p->grad.data[i];
      m[i] = static_cast<float>(b1 * m[i] + (1 - b1) * g);
      v[i] = static_cast<float>(b2 * v[i] + (1 - b2) * g * g);
      double mh = m[i] / (1 - b1t);
      double update;
      if (!radam_) {
        double vh = v[i] / (1 - b2t);
        update = mh / (std::sqrt(vh) + eps);
      } else if (rectified) {
        double vh = std::sqrt(v[i] / (1 - b2t));
        update = r_t * mh / (vh + eps);
      } else {
        update = mh;
      }
      p->value.data[i] -= static_cast<float>(lr_ * update);
    }
  }
}

// --- models ---------------------------------------------------------------

ClassifierModel::ClassifierModel(const nn::EncoderSpec& spec, int class_count,
                                 Rng& rng)
    : encoder(spec, rng), head(spec.representation_dim, class_count, rng) {}

std::pair<Tensor, Tensor> ClassifierModel::forward(const Tensor& batch,
                                                   bool training) {
  Tensor z = encoder.forward(batch, training);
  Tensor logits = head.forward(z);
  return {std::move(z), std::move(logits)};
}

std::vector<nn::Param*> ClassifierModel::params() {
  auto out = encoder.params();
  for (auto* p : head.params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> ClassifierModel::state_tensors() {
  auto out = encoder.state_tensors();
  for (auto* t : head.state_tensors()) out.push_back(t);
  return out;
}

eval::PredictionSet ClassifierModel::predict(const Tensor& images,
                                             const std::vector<int32_t>& truth,
                                             const std::string& model_id,
                                             int64_t batch_size) {
  int64_t m = images.dim(0), chw = images.numel() / m;
  eval::PredictionSet ps;
  ps.model_id = model_id;
  ps.truth = truth;
  ps.sample_ids.resize(static_cast<size_t>(m));
  std::iota(ps.sample_ids.begin(), ps.sample_ids.end(), 0);
  ps.predicted.resize(static_cast<size_t>(m));
  int64_t k = head.out_dim();
  for (int64_t start = 0; start < m; start += batch_size) {
    int64_t bn = std::min(batch_size, m - start);
    Tensor batch({bn, images.dim(1), images.dim(2), images.dim(3)});
    std::copy(images.ptr() + start * chw, images.ptr() + (start + bn) * chw,
              batch.ptr());
    auto [z, logits] = forward(batch, /*training=*/false);
    for (int64_t i = 0; i < bn; ++i) {
      const float* row = logits.ptr() + i * k;
      int best = 0;
      for (int64_t c = 1; c < k; ++c)
        if (row[c] > row[best]) best = static_cast<int>(c);
      ps.predicted[static_cast<size_t>(start + i)] = best;
    }
  }
  return ps;
}

PxlModelPair::PxlModelPair(const nn::EncoderSpec& spec_a,
                           const nn::EncoderSpec& spec_b, int class_count,
                           const obj::ProjectionHeadSpec& head, Rng& rng)
    : model_a(spec_a, class_count, rng),
      model_b(spec_b, class_count, rng),
      proj_a(obj::make_projection_head(head, spec_a.representation_dim, rng)),
      proj_b(obj::make_projection_head(head, spec_b.representation_dim, rng)) {}

std::vector<Tensor*> PxlModelPair::state_tensors() {
  std::vector<Tensor*> out = model_a.state_tensors();
  for (auto* t : model_b.state_tensors()) out.push_back(t);
  for (auto* t : proj_a.state_tensors()) out.push_back(t);
  for (auto* t : proj_b.state_tensors()) out.push_back(t);
  return out;
}

// --- splits ---------------------------------------------------------------

std::vector<int32_t> ViewSplit::labels() const {
  const auto& s = set();
  std::vector<int32_t> out(image_indices.size());
  for (size_t i = 0; i < image_indices.size(); ++i)
    out[i] = s.labels[static_cast<size_t>(image_indices[i])];
  return out;
}

ViewSplit gather_view(const data::MultiViewDataset& d, char view,
                      const std::vector<int64_t>& pair_indices, bool dedupe) {
  ViewSplit s;
  s.d = &d;
  s.view = view;
  std::set<int64_t> seen;
  for (int64_t pi : pair_indices) {
    int64_t idx = view == 'a' ? d.pairs[static_cast<size_t>(pi)][0]
                              : d.pairs[static_cast<size_t>(pi)][1];
    if (dedupe) {
      if (!seen.insert(idx).second) continue;
    }
    s.image_indices.push_back(idx);
  }
  if (dedupe) std::sort(s.image_indices.begin(), s.image_indices.end());
  return s;
}

PairSplit gather_pairs(const data::MultiViewDataset& d,
                       const std::vector<int64_t>& pair_indices) {
  return PairSplit{&d, pair_indices};
}

Tensor gather_images(const data::LabeledImageSet& set,
                     const std::vector<int64_t>& idx) {
  int64_t chw = set.images.numel() / set.count();
  Tensor out({static_cast<int64_t>(idx.size()), set.images.dim(1),
              set.images.dim(2), set.images.dim(3)});
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(set.images.ptr() + idx[i] * chw,
              set.images.ptr() + (idx[i] + 1) * chw,
              out.ptr() + static_cast<int64_t>(i) * chw);
  return out;
}

// --- shared loop pieces ---------------------------------------------------

namespace {

void check_finite(double loss, const char* paradigm, int epoch, int step) {
  if (!std::isfinite(loss))
    throw std::runtime_error(std::string("training aborted: non-finite loss in ") +
                             paradigm + " at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step));
}

int64_t argmax_correct(const Tensor& logits, const std::vector<int32_t>& labels) {
  int64_t n = logits.dim(0), k = logits.dim(1);
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    const float* row = logits.ptr() + i * k;
    int64_t best = 0;
    for (int64_t c = 1; c < k; ++c)
      if (row[c] > row[best]) best = c;
    if (best == labels[static_cast<size_t>(i)]) ++correct;
  }
  return correct;
}

// Validation pass for a single-view classifier.
std::pair<double, double> eval_view(ClassifierModel& model, const ViewSplit& split,
                                    int64_t batch_size) {
  const auto& set = split.set();
  double loss = 0.0;
  int64_t correct = 0, total = split.size();
  for (int64_t start = 0; start < total; start += batch_size) {
    int64_t bn = std::min(batch_size, total - start);
    std::vector<int64_t> idx(split.image_indices.begin() + start,
                             split.image_indices.begin() + start + bn);
    Tensor batch = gather_images(set, idx);
    std::vector<int32_t> labels(idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
      labels[i] = set.labels[static_cast<size_t>(idx[i])];
    auto [z, logits] = model.forward(batch, /*training=*/false);
    loss += obj::cross_entropy(logits, labels) * bn;
    correct += argmax_correct(logits, labels);
  }
  return {loss / total, static_cast<double>(correct) / total};
}

}  // namespace

// --- trainers -------------------------------------------------------------

ClassifierModel train_upsl(const ViewSplit& train, const ViewSplit& val,
                           const TrainConfig& cfg, int class_count,
                           RunRecord& record) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  Rng init_rng(cfg.seed);
  ClassifierModel model(cfg.encoder, class_count, init_rng);
  Optimizer opt(model.params(), cfg.optimizer, cfg.learning_rate);
  Rng shuffle_rng = init_rng.fork(17);

  const auto& set = train.set();
  std::vector<int64_t> order = train.image_indices;

  std::vector<Tensor> best_state;
  double best_val = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double ep_loss = 0.0;
    int64_t ep_correct = 0;
    int step = 0;
    for (int64_t start = 0; start < static_cast<int64_t>(order.size());
         start += cfg.batch_size, ++step) {
      int64_t bn = std::min<int64_t>(cfg.batch_size,
                                     static_cast<int64_t>(order.size()) - start);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + start + bn);
      Tensor batch = gather_images(set, idx);
      std::vector<int32_t> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i)
        labels[i] = set.labels[static_cast<size_t>(idx[i])];

      opt.zero_grad();
      auto [z, logits] = model.forward(batch, /*training=*/true);
      Tensor dlogits;
      double loss = obj::cross_entropy(logits, labels, &dlogits);
      check_finite(loss, "upsl", epoch, step);
      Tensor dz = model.head.backward(dlogits);
      model.encoder.backward(dz);
      opt.step();

      ep_loss += loss * bn;
      ep_correct += argmax_correct(logits, labels);
    }

    EpochStats s;
    s.epoch = epoch;
    s.train_loss = ep_loss / static_cast<double>(order.size());
    s.train_accuracy = ep_correct / static_cast<double>(order.size());
    if (val.size() > 0)
      std::tie(s.val_loss, s.val_accuracy) = eval_view(model, val, 256);
    record.epochs.push_back(s);

    if (cfg.best_validation_checkpoint && s.val_accuracy > best_val) {
      best_val = s.val_accuracy;
      best_state.clear();
      for (Tensor* t : model.state_tensors()) best_state.push_back(*t);
    }
  }
  if (cfg.best_validation_checkpoint && !best_state.empty()) {
    auto tensors = model.state_tensors();
    for (size_t i = 0; i < tensors.size(); ++i) *tensors[i] = best_state[i];
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record.config_hash = cfg.hash();
  return model;
}

ClassifierModel train_mpsl(const PairSplit& train, const PairSplit& val,
                           const TrainConfig& cfg, int class_count,
                           RunRecord& record) {
  const data::MultiViewDataset& d = *train.d;
  if (d.view_a.images.dim(1) != d.view_b.images.dim(1) ||
      d.view_a.images.dim(2) != d.view_b.images.dim(2) ||
      d.view_a.images.dim(3) != d.view_b.images.dim(3))
    throw std::invalid_argument(
        "mpsl: views have different image shapes; a single encoder cannot "
        "take their union");

  // Union of both views as one single-view problem over a merged dataset.
  ViewSplit va = gather_view(d, 'a', train.pair_indices, /*dedupe=*/true);
  ViewSplit vb = gather_view(d, 'b', train.pair_indices, /*dedupe=*/true);

  data::MultiViewDataset merged;
  merged.view_a.class_count = d.view_a.class_count;
  std::vector<int64_t> all_a = va.image_indices, all_b = vb.image_indices;
  int64_t chw = d.view_a.images.numel() / d.view_a.count();
  merged.view_a.images =
      Tensor({static_cast<int64_t>(all_a.size() + all_b.size()),
              d.view_a.images.dim(1), d.view_a.images.dim(2),
              d.view_a.images.dim(3)});
  for (size_t i = 0; i < all_a.size(); ++i) {
    std::copy(d.view_a.images.ptr() + all_a[i] * chw,
              d.view_a.images.ptr() + (all_a[i] + 1) * chw,
              merged.view_a.images.ptr() + static_cast<int64_t>(i) * chw);
    merged.view_a.labels.push_back(d.view_a.labels[static_cast<size_t>(all_a[i])]);
  }
  for (size_t i = 0; i < all_b.size(); ++i) {
    std::copy(d.view_b.images.ptr() + all_b[i] * chw,
              d.view_b.images.ptr() + (all_b[i] + 1) * chw,
              merged.view_a.images.ptr() +
                  static_cast<int64_t>(all_a.size() + i) * chw);
    merged.view_a.labels.push_back(d.view_b.labels[static_cast<size_t>(all_b[i])]);
  }

  ViewSplit mtrain;
  mtrain.d = &merged;
  mtrain.view = 'a';
  mtrain.image_indices.resize(merged.view_a.labels.size());
  std::iota(mtrain.image_indices.begin(), mtrain.image_indices.end(), 0);

  // Validation on view a of the validation pairs (within-sample contract is
  // checked on the test set downstream).
  ViewSplit mval;
  if (val.size() > 0)
    mval = gather_view(*val.d, 'a', val.pair_indices, /*dedupe=*/true);
  return train_upsl(mtrain, mval, cfg, class_count, record);
}

PxlModelPair train_pxl(const PairSplit& train, const PairSplit& val,
                       const TrainConfig& cfg, int class_count,
                       RunRecord& record) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  const data::MultiViewDataset& d = *train.d;
  obj::ObjectiveConfig oc = cfg.objective;
  double lambda = oc.lambda;

  Rng init_rng(cfg.seed);
  PxlModelPair pair(cfg.encoder, cfg.encoder_b ? *cfg.encoder_b : cfg.encoder,
                    class_count, oc.projection_head, init_rng);
  std::vector<nn::Param*> all_params = pair.model_a.params();
  for (auto* p : pair.model_b.params()) all_params.push_back(p);
  for (auto* p : pair.proj_a.params()) all_params.push_back(p);
  for (auto* p : pair.proj_b.params()) all_params.push_back(p);
  Optimizer opt(all_params, cfg.optimizer, cfg.learning_rate);
  Rng shuffle_rng = init_rng.fork(17);

  std::vector<int64_t> order = train.pair_indices;
  bool full_set = oc.nce_scope == obj::ObjectiveConfig::NceScope::full_set;
  int64_t batch = full_set ? static_cast<int64_t>(order.size()) : cfg.batch_size;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double ep_loss = 0.0, ep_sup = 0.0, ep_con = 0.0;
    int64_t ep_correct = 0, counted = 0;
    int step = 0;
    for (int64_t start = 0; start < static_cast<int64_t>(order.size());
         start += batch, ++step) {
      int64_t bn = std::min<int64_t>(batch, static_cast<int64_t>(order.size()) - start);
      if (bn < 2) continue;  // contrastive term needs at least one negative
      std::vector<int64_t> ia(static_cast<size_t>(bn)), ib(static_cast<size_t>(bn));
      std::vector<int32_t> labels(static_cast<size_t>(bn));
      for (int64_t i = 0; i < bn; ++i) {
        int64_t pi = order[static_cast<size_t>(start + i)];
        ia[static_cast<size_t>(i)] = d.pairs[static_cast<size_t>(pi)][0];
        ib[static_cast<size_t>(i)] = d.pairs[static_cast<size_t>(pi)][1];
        labels[static_cast<size_t>(i)] = d.labels[static_cast<size_t>(pi)];
      }
      Tensor batch_a = gather_images(d.view_a, ia);
      Tensor batch_b = gather_images(d.view_b, ib);

      opt.zero_grad();
      auto [za, logits_a] = pair.model_a.forward(batch_a, /*training=*/true);
      auto [zb, logits_b] = pair.model_b.forward(batch_b, /*training=*/true);
      Tensor ha = pair.proj_a.empty() ? za : pair.proj_a.forward(za);
      Tensor hb = pair.proj_b.empty() ? zb : pair.proj_b.forward(zb);

      Tensor dlogits_a, dlogits_b, dha, dhb;
      double sup = obj::supervised_loss(logits_a, logits_b, labels, &dlogits_a,
                                        &dlogits_b);
      double con = obj::contrastive_loss(ha, hb, oc, &dha, &dhb);
      double loss = obj::pxl_objective(sup, con, lambda);
      check_finite(loss, "pxl", epoch, step);

      // d objective / d z through both heads.
      for (auto& v : dlogits_a.data) v *= static_cast<float>(lambda);
      for (auto& v : dlogits_b.data) v *= static_cast<float>(lambda);
      for (auto& v : dha.data) v *= static_cast<float>(1.0 - lambda);
      for (auto& v : dhb.data) v *= static_cast<float>(1.0 - lambda);

      Tensor dza = pair.model_a.head.backward(dlogits_a);
      Tensor dzb = pair.model_b.head.backward(dlogits_b);
      Tensor dza_con = pair.proj_a.empty() ? dha : pair.proj_a.backward(dha);
      Tensor dzb_con = pair.proj_b.empty() ? dhb : pair.proj_b.backward(dhb);
      for (int64_t i = 0; i < dza.numel(); ++i) dza.data[i] += dza_con.data[i];
      for (int64_t i = 0; i < dzb.numel(); ++i) dzb.data[i] += dzb_con.data[i];
      pair.model_a.encoder.backward(dza);
      pair.model_b.encoder.backward(dzb);
      opt.step();

      ep_loss += loss * bn;
      ep_sup += sup * bn;
      ep_con += con * bn;
      ep_correct += argmax_correct(logits_a, labels) +
                    argmax_correct(logits_b, labels);
      counted += bn;
    }

    EpochStats s;
    s.epoch = epoch;
    s.train_loss = ep_loss / std::max<int64_t>(1, counted);
    s.supervised = ep_sup / std::max<int64_t>(1, counted);
    s.contrastive = ep_con / std::max<int64_t>(1, counted);
    s.train_accuracy = ep_correct / (2.0 * std::max<int64_t>(1, counted));
    if (val.size() > 0) {
      ViewSplit wa = gather_view(*val.d, 'a', val.pair_indices, true);
      ViewSplit wb = gather_view(*val.d, 'b', val.pair_indices, true);
      auto [la, aa] = eval_view(pair.model_a, wa, 256);
      auto [lb, ab] = eval_view(pair.model_b, wb, 256);
      s.val_loss = (la + lb) / 2.0;
      s.val_accuracy = (aa + ab) / 2.0;
    }
    record.epochs.push_back(s);
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record.config_hash = cfg.hash();
  return pair;
}

// --- cross-validation -----------------------------------------------------

std::map<std::string, std::pair<double, std::optional<double>>>
ResultTable::aggregate() const {
  std::map<std::string, std::vector<double>> by_metric;
  for (const auto& f : folds)
    for (const auto& [k, v] : f.metrics) by_metric[k].push_back(v);
  std::map<std::string, std::pair<double, std::optional<double>>> out;
  for (const auto& [k, vs] : by_metric) {
    double mean = std::accumulate(vs.begin(), vs.end(), 0.0) / vs.size();
    std::optional<double> sd;
    if (vs.size() > 1) {
      double acc = 0.0;
      for (double v : vs) acc += (v - mean) * (v - mean);
      sd = std::sqrt(acc / (vs.size() - 1));
    }
    out[k] = {mean, sd};
  }
  return out;
}

ResultTable cross_validate(const data::TwoViewData& d, const TrainConfig& base,
                           const std::string& out_dir, int max_folds) {
  if (d.train.folds.k <= 0)
    throw std::invalid_argument("cross_validate: dataset has no fold assignment");
  if (static_cast<int64_t>(d.train.folds.fold_of_sample.size()) !=
      d.train.pair_count())
    throw std::runtime_error("cross_validate: fold assignment does not match dataset");
  fs::create_directories(out_dir);
  int class_count = d.train.view_a.class_count;
  int fold_count = d.train.folds.k;
  if (max_folds > 0) fold_count = std::min(fold_count, max_folds);

  ResultTable table;
  for (int fold = 0; fold < fold_count; ++fold) {
    TrainConfig cfg = base;
    cfg.fold = fold;
    cfg.seed = base.seed + static_cast<uint64_t>(fold) * 1000003ULL;
    std::string stem = out_dir + "/fold" + std::to_string(fold) + "_" + cfg.hash();

    FoldResult fr;
    fr.fold = fold;
    if (fs::exists(stem + ".json")) {
      std::ifstream f(stem + ".json");
      json j = json::parse(f);
      for (auto& [k, v] : j.at("metrics").items()) fr.metrics[k] = v;
      for (auto& c : j.at("checkpoints")) fr.checkpoints.push_back(c);
      table.folds.push_back(std::move(fr));
      continue;  // completed fold, skip retraining
    }

    std::vector<int64_t> train_idx = d.train.folds.complement_indices(fold);
    std::vector<int64_t> val_idx = d.train.folds.fold_indices(fold);
    std::vector<int64_t> test_idx(static_cast<size_t>(d.test.pair_count()));
    std::iota(test_idx.begin(), test_idx.end(), 0);

    RunRecord record;
    if (cfg.paradigm == "upsl") {
      ViewSplit tr = gather_view(d.train, cfg.view, train_idx, true);
      ViewSplit va = gather_view(d.train, cfg.view, val_idx, true);
      ClassifierModel model = train_upsl(tr, va, cfg, class_count, record);
      ViewSplit te = gather_view(d.test, cfg.view, test_idx, true);
      auto preds = model.predict(gather_images(te.set(), te.image_indices),
                                 te.labels(), "upsl_" + std::string(1, cfg.view));
      fr.metrics["test_accuracy"] = eval::accuracy(preds);
      nn::save_checkpoint(stem + ".ckpt", cfg.to_json(), model.state_tensors());
      fr.checkpoints = {stem + ".ckpt"};
    } else if (cfg.paradigm == "mpsl") {
      PairSplit tr = gather_pairs(d.train, train_idx);
      PairSplit va = gather_pairs(d.train, val_idx);
      ClassifierModel model = train_mpsl(tr, va, cfg, class_count, record);
      for (char v : {'a', 'b'}) {
        ViewSplit te = gather_view(d.test, v, test_idx, true);
        auto preds = model.predict(gather_images(te.set(), te.image_indices),
                                   te.labels(), std::string("mpsl_") + v);
        fr.metrics[std::string("test_accuracy_") + v] = eval::accuracy(preds);
      }
      nn::save_checkpoint(stem + ".ckpt", cfg.to_json(), model.state_tensors());
      fr.checkpoints = {stem + ".ckpt"};
    } else {  // pxl
      PairSplit tr = gather_pairs(d.train, train_idx);
      PairSplit va = gather_pairs(d.train, val_idx);
      PxlModelPair pair = train_pxl(tr, va, cfg, class_count, record);
      ViewSplit tea = gather_view(d.test, 'a', test_idx, true);
      ViewSplit teb = gather_view(d.test, 'b', test_idx, true);
      auto pa = pair.model_a.predict(gather_images(tea.set(), tea.image_indices),
                                     tea.labels(), "pxl_a");
      auto pb = pair.model_b.predict(gather_images(teb.set(), teb.image_indices),
                                     teb.labels(), "pxl_b");
      fr.metrics["test_accuracy_a"] = eval::accuracy(pa);
      fr.metrics["test_accuracy_b"] = eval::accuracy(pb);
      // Agreement over test pairs, mapping each pair to its per-view
      // prediction (views are deduped, so look predictions up by index).
      {
        std::map<int64_t, size_t> pos_a, pos_b;
        for (size_t i = 0; i < tea.image_indices.size(); ++i)
          pos_a[tea.image_indices[i]] = i;
        for (size_t i = 0; i < teb.image_indices.size(); ++i)
          pos_b[teb.image_indices[i]] = i;
        int64_t both = 0;
        for (int64_t pi : test_idx) {
          auto [ai, bi] = d.test.pairs[static_cast<size_t>(pi)];
          int32_t y = d.test.labels[static_cast<size_t>(pi)];
          if (pa.predicted[pos_a[ai]] == y && pb.predicted[pos_b[bi]] == y)
            ++both;
        }
        fr.metrics["mutual_agreement"] =
            static_cast<double>(both) / static_cast<double>(test_idx.size());
      }
      nn::save_checkpoint(stem + ".ckpt", cfg.to_json(), pair.state_tensors());
      fr.checkpoints = {stem + ".ckpt"};
    }
    if (!record.epochs.empty()) {
      fr.metrics["final_val_accuracy"] = record.epochs.back().val_accuracy;
      fr.metrics["final_train_loss"] = record.epochs.back().train_loss;
    }
    record.save_csv(stem + ".csv");

    json j;
    j["config"] = cfg.to_json();
    j["metrics"] = fr.metrics;
    j["checkpoints"] = fr.checkpoints;
    j["wall_seconds"] = record.wall_seconds;
    std::ofstream f(stem + ".json");
    f << j.dump(2) << "\n";
    table.folds.push_back(std::move(fr));
  }
  return table;
}

}  // namespace mvi::train
