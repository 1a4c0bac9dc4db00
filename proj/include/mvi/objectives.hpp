#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mvi/encoder.hpp"
#include "mvi/tensor.hpp"

namespace mvi::obj {

struct ProjectionHeadSpec {
  enum class Kind { identity, linear, mlp_1, mlp_2, mlp_3 };
  Kind kind = Kind::identity;
  int64_t width = 0;  // hidden width; equals the representation dim

  static Kind kind_from_string(const std::string& s);
  static std::string kind_to_string(Kind k);
};

struct ObjectiveConfig {
  double lambda = 0.75;
  double critic_scale = 0.0;  // <= 0 means 1/sqrt(d)
  double clip_constant = 10.0;
  double penalty_weight = 0.04;
  ProjectionHeadSpec projection_head;
  // Eq-faithful default: the positive pair is excluded from the denominator.
  bool include_positive_in_denominator = false;
  enum class NceScope { minibatch, full_set };
  NceScope nce_scope = NceScope::minibatch;

  void validate() const;  // throws on lambda outside [0,1] etc.
  nlohmann::json to_json() const;
  static ObjectiveConfig from_json(const nlohmann::json& j);

  double effective_scale(int64_t d) const;
};

struct ScoreMatrix {
  Tensor raw;      // n x n, scale * <h_a, h_b>
  Tensor clipped;  // c * tanh(raw / c)
  double clip_constant = 0.0;
  int64_t n() const { return raw.ndim() ? raw.dim(0) : 0; }
};

// Batch-averaged softmax cross-entropy; optionally writes d loss / d logits.
double cross_entropy(const Tensor& logits, const std::vector<int32_t>& labels,
                     Tensor* dlogits = nullptr);

// CE(logits_i, y) + CE(logits_j, y).
double supervised_loss(const Tensor& logits_i, const Tensor& logits_j,
                       const std::vector<int32_t>& labels,
                       Tensor* dlogits_i = nullptr, Tensor* dlogits_j = nullptr);

// Pairwise critic scores of two n x d projected embedding batches.
ScoreMatrix critic_scores(const Tensor& h_i, const Tensor& h_j,
                          const ObjectiveConfig& cfg);

// Mean over rows of -log( exp(s_nn) / sum_m exp(s_nm) ) on the clipped
// scores, positive excluded from the denominator unless include_positive.
// Log-sum-exp stabilized. d_clipped, when given, receives the gradient with
// respect to the clipped scores.
double nce_direction_loss(const ScoreMatrix& scores, bool include_positive,
                          Tensor* d_clipped = nullptr);

// Symmetric NCE with the L2 penalty on raw scores:
//   l_{i->j} + l_{j->i} + penalty_weight * mean(raw^2).
double contrastive_loss(const Tensor& h_i, const Tensor& h_j,
                        const ObjectiveConfig& cfg, Tensor* dh_i = nullptr,
                        Tensor* dh_j = nullptr);

// lambda * sup + (1 - lambda) * con.
double pxl_objective(double supervised, double contrastive, double lambda);

// Projection head factory; identity yields an empty Mlp (pass-through).
nn::Mlp make_projection_head(const ProjectionHeadSpec& spec, int64_t rep_dim,
                             Rng& rng);

}  // namespace mvi::obj
