#include "mvi/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mvi/objectives.hpp"

namespace mvi::eval {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void PredictionSet::check_aligned() const {
  if (sample_ids.size() != predicted.size() ||
      sample_ids.size() != truth.size())
    throw std::invalid_argument("prediction set: misaligned lengths");
}

double accuracy(const PredictionSet& preds) {
  preds.check_aligned();
  if (preds.sample_ids.empty())
    throw std::invalid_argument("accuracy: empty prediction set");
  int64_t correct = 0;
  for (size_t i = 0; i < preds.predicted.size(); ++i)
    if (preds.predicted[i] == preds.truth[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.predicted.size());
}

double mutual_agreement(const PredictionSet& a, const PredictionSet& b) {
  a.check_aligned();
  b.check_aligned();
  if (a.sample_ids != b.sample_ids || a.truth != b.truth)
    throw std::invalid_argument("mutual_agreement: prediction sets not aligned");
  if (a.sample_ids.empty())
    throw std::invalid_argument("mutual_agreement: empty prediction sets");
  int64_t both = 0;
  for (size_t i = 0; i < a.predicted.size(); ++i)
    if (a.predicted[i] == a.truth[i] && b.predicted[i] == b.truth[i]) ++both;
  return static_cast<double>(both) / static_cast<double>(a.predicted.size());
}

Tensor flatten_activations(const Tensor& t) {
  if (t.ndim() < 2)
    throw std::invalid_argument("flatten_activations: need (m, c, ...) input");
  int64_t m = t.dim(0);
  Tensor out = t;
  out.reshape({m, t.numel() / m});
  return out;
}

double unbiased_hsic(const Tensor& k, const Tensor& l) {
  if (k.ndim() != 2 || k.dim(0) != k.dim(1) || l.ndim() != 2 ||
      l.dim(0) != l.dim(1) || k.dim(0) != l.dim(0))
    throw std::invalid_argument("unbiased_hsic: need matching square matrices");
  int64_t n = k.dim(0);
  if (n < 4)
    throw std::invalid_argument("unbiased_hsic: needs n >= 4");

  MatrixXd kt(n, n), lt(n, n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      kt(i, j) = i == j ? 0.0 : k.data[i * n + j];
      lt(i, j) = i == j ? 0.0 : l.data[i * n + j];
    }
  double tr = (kt.array() * lt.transpose().array()).sum();
  double sk = kt.sum(), sl = lt.sum();
  double cross = (VectorXd::Ones(n).transpose() * kt * lt * VectorXd::Ones(n))(0);
  double nn = static_cast<double>(n);
  return (tr + sk * sl / ((nn - 1.0) * (nn - 2.0)) - 2.0 / (nn - 2.0) * cross) /
         (nn * (nn - 3.0));
}

namespace {

Tensor gram(const Tensor& x, const std::vector<int64_t>& rows) {
  int64_t n = static_cast<int64_t>(rows.size());
  int64_t u = x.dim(1);
  Tensor g({n, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i; j < n; ++j) {
      const float* a = x.ptr() + rows[static_cast<size_t>(i)] * u;
      const float* b = x.ptr() + rows[static_cast<size_t>(j)] * u;
      double s = 0.0;
      for (int64_t t = 0; t < u; ++t) s += static_cast<double>(a[t]) * b[t];
      g.data[i * n + j] = static_cast<float>(s);
      g.data[j * n + i] = static_cast<float>(s);
    }
  return g;
}

}  // namespace

double minibatch_cka(const Tensor& x, const Tensor& y, int64_t n,
                     uint64_t seed) {
  if (x.ndim() != 2 || y.ndim() != 2 || x.dim(0) != y.dim(0))
    throw std::invalid_argument("minibatch_cka: row-misaligned inputs");
  int64_t m = x.dim(0);
  if (n < 4) throw std::invalid_argument("minibatch_cka: batch size >= 4");
  if (m < n) throw std::invalid_argument("minibatch_cka: fewer rows than batch size");

  std::vector<int64_t> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  int64_t k = m / n;  // remainder dropped

  double num = 0.0, den_x = 0.0, den_y = 0.0;
  for (int64_t b = 0; b < k; ++b) {
    std::vector<int64_t> rows(order.begin() + b * n,
                              order.begin() + (b + 1) * n);
    Tensor gk = gram(x, rows), gl = gram(y, rows);
    num += unbiased_hsic(gk, gl);
    den_x += unbiased_hsic(gk, gk);
    den_y += unbiased_hsic(gl, gl);
  }
  num /= k;
  den_x /= k;
  den_y /= k;
  if (den_x < 0.0 || den_y < 0.0)
    throw std::runtime_error(
        "minibatch_cka: negative mean self-HSIC (near-constant activations); "
        "den_x=" + std::to_string(den_x) + " den_y=" + std::to_string(den_y));
  return num / (std::sqrt(den_x) * std::sqrt(den_y));
}

std::vector<ActivationMatrix> extract_activations(nn::Encoder& encoder,
                                                  const Tensor& images,
                                                  const std::vector<int>& layers,
                                                  int64_t batch_size) {
  int64_t m = images.dim(0);
  int64_t chw = images.numel() / m;
  std::vector<ActivationMatrix> out(layers.size());
  for (size_t li = 0; li < layers.size(); ++li) {
    out[li].layer_id = layers[li];
    out[li].sample_ids.resize(static_cast<size_t>(m));
    std::iota(out[li].sample_ids.begin(), out[li].sample_ids.end(), 0);
  }
  for (int64_t start = 0; start < m; start += batch_size) {
    int64_t bn = std::min(batch_size, m - start);
    Tensor batch({bn, images.dim(1), images.dim(2), images.dim(3)});
    std::copy(images.ptr() + start * chw, images.ptr() + (start + bn) * chw,
              batch.ptr());
    encoder.forward(batch, /*training=*/false, /*capture=*/true);
    for (size_t li = 0; li < layers.size(); ++li) {
      Tensor flat = flatten_activations(encoder.activation(layers[li]));
      if (start == 0)
        out[li].values = Tensor({m, flat.dim(1)});
      std::copy(flat.data.begin(), flat.data.end(),
                out[li].values.ptr() + start * flat.dim(1));
    }
  }
  return out;
}

CkaMatrix cka_matrix(nn::Encoder& enc_a, nn::Encoder& enc_b,
                     const Tensor& images_a, const Tensor& images_b,
                     const std::vector<int>& layers_a,
                     const std::vector<int>& layers_b, const CkaConfig& cfg) {
  if (images_a.dim(0) != images_b.dim(0))
    throw std::invalid_argument("cka_matrix: sample misalignment");
  auto acts_a = extract_activations(enc_a, images_a, layers_a);
  auto acts_b = extract_activations(enc_b, images_b, layers_b);

  CkaMatrix m;
  m.layers_a = layers_a;
  m.layers_b = layers_b;
  m.batch_size = cfg.batch_size;
  m.seed = cfg.seed;
  m.values = Tensor({static_cast<int64_t>(layers_a.size()),
                     static_cast<int64_t>(layers_b.size())});
  for (size_t p = 0; p < layers_a.size(); ++p)
    for (size_t q = 0; q < layers_b.size(); ++q)
      m.values.data[p * layers_b.size() + q] = static_cast<float>(minibatch_cka(
          acts_a[p].values, acts_b[q].values, cfg.batch_size, cfg.seed));
  return m;
}

double fit_eval_logistic_probe(const Tensor& z_train,
                               const std::vector<int32_t>& train_labels,
                               const Tensor& z_test,
                               const std::vector<int32_t>& test_labels,
                               int class_count, uint64_t seed) {
  int64_t n = z_train.dim(0), d = z_train.dim(1);
  {
    std::vector<bool> seen(static_cast<size_t>(class_count), false);
    int distinct = 0;
    for (int32_t l : train_labels)
      if (!seen[static_cast<size_t>(l)]) {
        seen[static_cast<size_t>(l)] = true;
        ++distinct;
      }
    if (distinct < 2)
      throw std::invalid_argument("linear probe: degenerate single-class train split");
  }

  // Per-feature standardization from train statistics.
  std::vector<double> mean(static_cast<size_t>(d), 0.0), sd(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += z_train.data[i * d + j];
  for (auto& v : mean) v /= n;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double c = z_train.data[i * d + j] - mean[static_cast<size_t>(j)];
      sd[static_cast<size_t>(j)] += c * c;
    }
  for (auto& v : sd) v = std::sqrt(v / n) + 1e-8;

  auto standardize = [&](const Tensor& z) {
    Tensor out(z.shape);
    for (int64_t i = 0; i < z.dim(0); ++i)
      for (int64_t j = 0; j < d; ++j)
        out.data[i * d + j] = static_cast<float>(
            (z.data[i * d + j] - mean[static_cast<size_t>(j)]) / sd[static_cast<size_t>(j)]);
    return out;
  };
  Tensor xtr = standardize(z_train), xte = standardize(z_test);

  // Multinomial logistic regression, L2 strength 1.0, Adam full-batch.
  const double reg = 1.0;
  const int max_iter = 1000;
  Rng rng(seed);
  nn::Linear lin(d, class_count, rng, 0.0f);
  std::vector<nn::Param*> ps = lin.params();
  std::vector<Tensor> m1, m2;
  for (auto* p : ps) {
    m1.emplace_back(p->value.shape);
    m2.emplace_back(p->value.shape);
  }
  double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int it = 1; it <= max_iter; ++it) {
    for (auto* p : ps) p->zero_grad();
    Tensor logits = lin.forward(xtr);
    Tensor dlogits;
    obj::cross_entropy(logits, train_labels, &dlogits);
    lin.backward(dlogits);
    // sklearn-style penalty: (1/(2C)) * ||W||^2 added to the summed loss,
    // here applied to the mean loss, so scaled by 1/n. Bias unpenalized.
    nn::Param* w = ps[0];
    for (int64_t i = 0; i < w->value.numel(); ++i)
      w->grad.data[i] += static_cast<float>(reg / n) * w->value.data[i];
    for (size_t pi = 0; pi < ps.size(); ++pi) {
      nn::Param* p = ps[pi];
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        double g = p->grad.data[i];
        double mm = m1[pi].data[i] = b1 * m1[pi].data[i] + (1 - b1) * g;
        double vv = m2[pi].data[i] = static_cast<float>(b2 * m2[pi].data[i] + (1 - b2) * g * g);
        double mh = mm / (1 - std::pow(b1, it));
        double vh = vv / (1 - std::pow(b2, it));
        p->value.data[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }

  Tensor logits = lin.forward(xte);
  int64_t correct = 0;
  int64_t nt = xte.dim(0);
  for (int64_t i = 0; i < nt; ++i) {
    const float* row = logits.ptr() + i * class_count;
    int best = 0;
    for (int c = 1; c < class_count; ++c)
      if (row[c] > row[best]) best = c;
    if (best == test_labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nt);
}

ProbeResult linear_probe_transfer(nn::Encoder& encoder,
                                  const Tensor& train_images,
                                  const std::vector<int32_t>& train_labels,
                                  const Tensor& test_images,
                                  const std::vector<int32_t>& test_labels,
                                  int class_count, uint64_t seed) {
  ProbeResult r;
  r.encoder_hash_before = nn::param_hash(encoder.params());

  auto extract = [&](const Tensor& images) {
    int64_t m = images.dim(0), chw = images.numel() / m;
    Tensor z({m, encoder.representation_dim()});
    const int64_t bs = 256;
    for (int64_t start = 0; start < m; start += bs) {
      int64_t bn = std::min(bs, m - start);
      Tensor batch({bn, images.dim(1), images.dim(2), images.dim(3)});
      std::copy(images.ptr() + start * chw, images.ptr() + (start + bn) * chw,
                batch.ptr());
      Tensor zb = encoder.forward(batch, /*training=*/false);
      std::copy(zb.data.begin(), zb.data.end(),
                z.ptr() + start * encoder.representation_dim());
    }
    return z;
  };
  Tensor z_train = extract(train_images);
  Tensor z_test = extract(test_images);
  r.test_accuracy = fit_eval_logistic_probe(z_train, train_labels, z_test,
                                            test_labels, class_count, seed);
  r.encoder_hash_after = nn::param_hash(encoder.params());
  if (r.encoder_hash_before != r.encoder_hash_after)
    throw std::runtime_error("linear probe mutated the frozen encoder");
  return r;
}

}  // namespace mvi::eval
