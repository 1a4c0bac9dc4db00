#include "mvi/objectives.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

using json = nlohmann::json;

namespace mvi::obj {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

ProjectionHeadSpec::Kind ProjectionHeadSpec::kind_from_string(
    const std::string& s) {
  if (s == "identity") return Kind::identity;
  if (s == "linear") return Kind::linear;
  if (s == "mlp_1") return Kind::mlp_1;
  if (s == "mlp_2") return Kind::mlp_2;
  if (s == "mlp_3") return Kind::mlp_3;
  throw std::invalid_argument("unknown projection head kind: " + s);
}

std::string ProjectionHeadSpec::kind_to_string(Kind k) {
  switch (k) {
    case Kind::identity: return "identity";
    case Kind::linear: return "linear";
    case Kind::mlp_1: return "mlp_1";
    case Kind::mlp_2: return "mlp_2";
    case Kind::mlp_3: return "mlp_3";
  }
  return "identity";
}

void ObjectiveConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("objective config: lambda must lie in [0,1]");
  if (clip_constant <= 0.0)
    throw std::invalid_argument("objective config: clip_constant must be > 0");
  if (penalty_weight < 0.0)
    throw std::invalid_argument("objective config: penalty_weight must be >= 0");
  if (critic_scale < 0.0)
    throw std::invalid_argument("objective config: critic_scale must be > 0 (or 0 for 1/sqrt(d))");
}

double ObjectiveConfig::effective_scale(int64_t d) const {
  return critic_scale > 0.0 ? critic_scale : 1.0 / std::sqrt(static_cast<double>(d));
}

json ObjectiveConfig::to_json() const {
  return {{"lambda", lambda},
          {"critic_scale", critic_scale},
          {"clip_constant", clip_constant},
          {"penalty_weight", penalty_weight},
          {"projection_head", ProjectionHeadSpec::kind_to_string(projection_head.kind)},
          {"include_positive_in_denominator", include_positive_in_denominator},
          {"nce_scope", nce_scope == NceScope::minibatch ? "minibatch" : "full_set"}};
}

ObjectiveConfig ObjectiveConfig::from_json(const json& j) {
  ObjectiveConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.critic_scale = j.value("critic_scale", c.critic_scale);
  c.clip_constant = j.value("clip_constant", c.clip_constant);
  c.penalty_weight = j.value("penalty_weight", c.penalty_weight);
  if (j.contains("projection_head"))
    c.projection_head.kind =
        ProjectionHeadSpec::kind_from_string(j["projection_head"]);
  c.include_positive_in_denominator =
      j.value("include_positive_in_denominator", false);
  if (j.value("nce_scope", "minibatch") == std::string("full_set"))
    c.nce_scope = NceScope::full_set;
  c.validate();
  return c;
}

double cross_entropy(const Tensor& logits, const std::vector<int32_t>& labels,
                     Tensor* dlogits) {
  int64_t n = logits.dim(0), k = logits.dim(1);
  if (n != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  if (dlogits) *dlogits = Tensor(logits.shape);
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    int32_t y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k)
      throw std::invalid_argument("cross_entropy: label out of range");
    const float* row = logits.ptr() + i * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max<double>(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    double log_denom = std::log(denom) + mx;
    total += log_denom - row[y];
    if (dlogits) {
      float* drow = dlogits->ptr() + i * k;
      for (int64_t j = 0; j < k; ++j) {
        double p = std::exp(row[j] - log_denom);
        drow[j] = static_cast<float>((p - (j == y ? 1.0 : 0.0)) / n);
      }
    }
  }
  return total / n;
}

double supervised_loss(const Tensor& logits_i, const Tensor& logits_j,
                       const std::vector<int32_t>& labels, Tensor* dlogits_i,
                       Tensor* dlogits_j) {
  return cross_entropy(logits_i, labels, dlogits_i) +
         cross_entropy(logits_j, labels, dlogits_j);
}

ScoreMatrix critic_scores(const Tensor& h_i, const Tensor& h_j,
                          const ObjectiveConfig& cfg) {
  if (h_i.ndim() != 2 || h_j.ndim() != 2 || h_i.dim(0) != h_j.dim(0) ||
      h_i.dim(1) != h_j.dim(1))
    throw std::invalid_argument("critic_scores: embedding shape mismatch");
  int64_t n = h_i.dim(0), d = h_i.dim(1);
  double scale = cfg.effective_scale(d);
  double c = cfg.clip_constant;

  ScoreMatrix s;
  s.raw = Tensor({n, n});
  s.clipped = Tensor({n, n});
  s.clip_constant = c;
  ConstRowMap a(h_i.ptr(), n, d), b(h_j.ptr(), n, d);
  RowMap raw(s.raw.ptr(), n, n);
  raw.noalias() = (a * b.transpose()) * static_cast<float>(scale);
  // In float, c * tanh(r / c) saturates to exactly +-c for large |r|; nudge
  // saturated values one ulp inward to keep the open-interval contract.
  const float band = std::nextafter(static_cast<float>(c), 0.0f);
  for (int64_t i = 0; i < n * n; ++i) {
    float v = static_cast<float>(c * std::tanh(s.raw.data[i] / c));
    s.clipped.data[i] = std::clamp(v, -band, band);
  }
  return s;
}

double nce_direction_loss(const ScoreMatrix& scores, bool include_positive,
                          Tensor* d_clipped) {
  int64_t n = scores.n();
  if (n < 2)
    throw std::invalid_argument("nce_direction_loss: need at least 2 samples");
  const Tensor& s = scores.clipped;
  if (d_clipped) *d_clipped = Tensor({n, n});
  double total = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    const float* row = s.ptr() + r * n;
    double mx = -1e300;
    for (int64_t m = 0; m < n; ++m) {
      if (!include_positive && m == r) continue;
      mx = std::max<double>(mx, row[m]);
    }
    double denom = 0.0;
    for (int64_t m = 0; m < n; ++m) {
      if (!include_positive && m == r) continue;
      denom += std::exp(row[m] - mx);
    }
    double log_denom = std::log(denom) + mx;
    total += log_denom - row[r];
    if (d_clipped) {
      float* drow = d_clipped->ptr() + r * n;
      for (int64_t m = 0; m < n; ++m) {
        double g = 0.0;
        if (include_positive || m != r)
          g += std::exp(row[m] - log_denom);
        if (m == r) g -= 1.0;
        drow[m] = static_cast<float>(g / n);
      }
    }
  }
  return total / n;
}

double contrastive_loss(const Tensor& h_i, const Tensor& h_j,
                        const ObjectiveConfig& cfg, Tensor* dh_i,
                        Tensor* dh_j) {
  ScoreMatrix s = critic_scores(h_i, h_j, cfg);
  int64_t n = s.n(), d = h_i.dim(1);
  double c = cfg.clip_constant;

  // Direction j->i reuses the transposed score matrix.
  ScoreMatrix st;
  st.clip_constant = c;
  st.raw = Tensor({n, n});
  st.clipped = Tensor({n, n});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t m = 0; m < n; ++m) {
      st.raw.data[r * n + m] = s.raw.data[m * n + r];
      st.clipped.data[r * n + m] = s.clipped.data[m * n + r];
    }

  bool want_grad = dh_i || dh_j;
  Tensor d_fwd, d_bwd;
  double l_ij = nce_direction_loss(s, cfg.include_positive_in_denominator,
                                   want_grad ? &d_fwd : nullptr);
  double l_ji = nce_direction_loss(st, cfg.include_positive_in_denominator,
                                   want_grad ? &d_bwd : nullptr);
  double penalty = 0.0;
  for (int64_t i = 0; i < n * n; ++i)
    penalty += static_cast<double>(s.raw.data[i]) * s.raw.data[i];
  penalty *= cfg.penalty_weight / (n * n);

  if (want_grad) {
    // d loss / d raw: clipped-score grads through the tanh, plus the penalty.
    Tensor draw({n, n});
    for (int64_t r = 0; r < n; ++r)
      for (int64_t m = 0; m < n; ++m) {
        double th = std::tanh(s.raw.data[r * n + m] / c);
        double dclip = d_fwd.data[r * n + m] + d_bwd.data[m * n + r];
        draw.data[r * n + m] = static_cast<float>(
            dclip * (1.0 - th * th) +
            cfg.penalty_weight * 2.0 * s.raw.data[r * n + m] / (n * n));
      }
    double scale = cfg.effective_scale(d);
    ConstRowMap a(h_i.ptr(), n, d), b(h_j.ptr(), n, d);
    ConstRowMap dr(draw.ptr(), n, n);
    if (dh_i) {
      *dh_i = Tensor({n, d});
      RowMap m(dh_i->ptr(), n, d);
      m.noalias() = dr * b * static_cast<float>(scale);
    }
    if (dh_j) {
      *dh_j = Tensor({n, d});
      RowMap m(dh_j->ptr(), n, d);
      m.noalias() = dr.transpose() * a * static_cast<float>(scale);
    }
  }
  return l_ij + l_ji + penalty;
}

double pxl_objective(double supervised, double contrastive, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("pxl_objective: lambda must lie in [0,1]");
  return lambda * supervised + (1.0 - lambda) * contrastive;
}

nn::Mlp make_projection_head(const ProjectionHeadSpec& spec, int64_t rep_dim,
                             Rng& rng) {
  using Kind = ProjectionHeadSpec::Kind;
  int hidden = 0;
  switch (spec.kind) {
    case Kind::identity: return nn::Mlp();
    case Kind::linear: hidden = 0; break;
    case Kind::mlp_1: hidden = 1; break;
    case Kind::mlp_2: hidden = 2; break;
    case Kind::mlp_3: hidden = 3; break;
  }
  std::vector<int64_t> widths(static_cast<size_t>(hidden) + 2, rep_dim);
  return nn::Mlp(widths, rng);
}

}  // namespace mvi::obj
