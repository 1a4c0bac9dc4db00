#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvi/rng.hpp"
#include "mvi/tensor.hpp"

namespace mvi::nn {

struct Param {
  Tensor value;
  Tensor grad;

  explicit Param(std::vector<int64_t> shape)
      : value(shape), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(0.0f); }
};

// Raised when declared and computed layer shapes disagree.
struct SpecError : std::runtime_error {
  int layer_index;
  SpecError(int layer, const std::string& msg)
      : std::runtime_error(msg), layer_index(layer) {}
};

struct ConvLayerSpec {
  int64_t out_channels = 0;
  std::vector<int64_t> kernel, stride, pad;  // one entry per spatial axis
  bool batch_norm = true;
  std::string nonlinearity = "relu";  // relu | none
  // Declared output spatial dims; empty means "accept whatever propagates".
  std::vector<int64_t> declared_output;
};

struct EncoderSpec {
  std::vector<int64_t> input_shape;  // (C, spatial dims...)
  std::vector<ConvLayerSpec> layers;
  bool global_avg_pool = false;
  int64_t representation_dim = 0;

  size_t spatial_rank() const { return input_shape.size() - 1; }

  // Output shape (C, spatial...) after every layer. Throws SpecError (with
  // the offending layer index) on any mismatch, including a declared
  // representation_dim that does not match the flattened final output.
  std::vector<std::vector<int64_t>> propagate_shapes() const;

  nlohmann::json to_json() const;
  static EncoderSpec from_json(const nlohmann::json& j);

  // 4 conv layers, 32/64/128/64 units, 16^2/8^2/4^2/1^2 outputs on a 32x32
  // input; batch norm + relu throughout; 64-d representation.
  static EncoderSpec dcgan(int64_t in_channels);
  // 5 conv layers, 64/128/192/192/64 units, 62^3/18^3/6^3/6^3/6^3 outputs on
  // a 91x109x91 volume, terminal average pool to a 64-d representation.
  // Shape-check reference only; the 2-d runtime does not execute it.
  static EncoderSpec alexnet3d();
};

class Linear {
 public:
  // init_sd < 0 selects the default fan-in-scaled uniform initialization;
  // init_sd >= 0 draws weights from N(0, init_sd^2) with zero bias.
  Linear(int64_t in, int64_t out, Rng& rng, float init_sd = -1.0f);

  // x (N, in) -> (N, out); caches x for backward.
  Tensor forward(const Tensor& x);
  // dy (N, out) -> dx (N, in); accumulates weight grads.
  Tensor backward(const Tensor& dy);

  std::vector<Param*> params() { return {&w_, &b_}; }
  std::vector<Tensor*> state_tensors() { return {&w_.value, &b_.value}; }
  int64_t in_dim() const { return w_.value.dim(0); }
  int64_t out_dim() const { return w_.value.dim(1); }

 private:
  Param w_;  // (in, out)
  Param b_;  // (out)
  Tensor cached_x_;
};

// 2-d convolutional encoder instantiated from a spec.
class Encoder {
 public:
  Encoder(const EncoderSpec& spec, Rng& rng);

  const EncoderSpec& spec() const { return spec_; }
  int64_t representation_dim() const { return spec_.representation_dim; }

  // x (N, C, H, W) -> representation (N, representation_dim).
  // With capture on, per-layer post-nonlinearity activations are retained
  // and readable via activation(layer).
  Tensor forward(const Tensor& x, bool training, bool capture = false);
  // dz (N, representation_dim) -> accumulates parameter grads, returns dx.
  Tensor backward(const Tensor& dz);

  int layer_count() const { return static_cast<int>(layers_.size()); }
  const Tensor& activation(int layer) const;

  std::vector<Param*> params();
  // Parameters plus batch-norm running stats, in a fixed order (what a
  // checkpoint persists).
  std::vector<Tensor*> state_tensors();

 private:
  struct Layer {
    ConvLayerSpec spec;
    Param w, b;
    Param gamma, beta;
    Tensor running_mean, running_var;
    // forward caches
    Tensor in, conv_out, bn_out, act_out;
    Tensor save_mean, save_invstd;
    bool bn_training = false;
  };
  EncoderSpec spec_;
  std::vector<Layer> layers_;
  std::vector<std::vector<int64_t>> shapes_;
  bool capture_ = false;
  Tensor pool_in_;  // cache for the terminal average pool
};

// Stack of linear layers with relu between (not after the last). Used for
// projection heads.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int64_t>& widths, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  std::vector<Param*> params();
  std::vector<Tensor*> state_tensors();
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<Linear> layers_;
  std::vector<Tensor> relu_out_;
};

// Model checkpoint: one archive holding a json header (metadata + tensor
// manifest) followed by raw little-endian float payloads. The tensor list
// must already have the right shapes on load (models are rebuilt from their
// persisted spec first).
void save_checkpoint(const std::string& path, const nlohmann::json& metadata,
                     const std::vector<Tensor*>& tensors);
nlohmann::json load_checkpoint(const std::string& path,
                               const std::vector<Tensor*>& tensors);

// FNV-1a over parameter bytes; the frozen-encoder contract check.
uint64_t param_hash(const std::vector<Param*>& params);

}  // namespace mvi::nn
