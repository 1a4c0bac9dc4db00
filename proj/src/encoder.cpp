#include "mvi/encoder.hpp"

#include <Eigen/Dense>
#include <cstring>
#include <fstream>

#include "mvi/kernels.hpp"

using json = nlohmann::json;

namespace mvi::nn {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// --- EncoderSpec ----------------------------------------------------------

std::vector<std::vector<int64_t>> EncoderSpec::propagate_shapes() const {
  if (input_shape.size() < 2)
    throw SpecError(-1, "input_shape needs (C, spatial...)");
  size_t rank = spatial_rank();
  std::vector<std::vector<int64_t>> out;
  std::vector<int64_t> cur = input_shape;
  for (size_t li = 0; li < layers.size(); ++li) {
    const ConvLayerSpec& l = layers[li];
    if (l.kernel.size() != rank || l.stride.size() != rank ||
        l.pad.size() != rank)
      throw SpecError(static_cast<int>(li), "kernel/stride/pad rank mismatch");
    std::vector<int64_t> next{l.out_channels};
    for (size_t a = 0; a < rank; ++a) {
      int64_t num = cur[a + 1] + 2 * l.pad[a] - l.kernel[a];
      if (num < 0)
        throw SpecError(static_cast<int>(li), "kernel larger than input");
      int64_t d = num / l.stride[a] + 1;
      if (d <= 0) throw SpecError(static_cast<int>(li), "non-positive output dim");
      next.push_back(d);
    }
    if (!l.declared_output.empty()) {
      for (size_t a = 0; a < rank; ++a)
        if (l.declared_output[a] != next[a + 1])
          throw SpecError(static_cast<int>(li),
                          "declared output dim " +
                              std::to_string(l.declared_output[a]) +
                              " != computed " + std::to_string(next[a + 1]) +
                              " at layer " + std::to_string(li));
    }
    out.push_back(next);
    cur = next;
  }
  int64_t flat;
  if (global_avg_pool) {
    flat = cur[0];
  } else {
    flat = 1;
    for (int64_t d : cur) flat *= d;
  }
  if (representation_dim != flat)
    throw SpecError(static_cast<int>(layers.size()) - 1,
                    "representation_dim " + std::to_string(representation_dim) +
                        " != flattened output " + std::to_string(flat));
  return out;
}

json EncoderSpec::to_json() const {
  json j;
  j["input_shape"] = input_shape;
  j["global_avg_pool"] = global_avg_pool;
  j["representation_dim"] = representation_dim;
  j["layers"] = json::array();
  for (const auto& l : layers) {
    j["layers"].push_back({{"out_channels", l.out_channels},
                           {"kernel", l.kernel},
                           {"stride", l.stride},
                           {"pad", l.pad},
                           {"batch_norm", l.batch_norm},
                           {"nonlinearity", l.nonlinearity},
                           {"declared_output", l.declared_output}});
  }
  return j;
}

EncoderSpec EncoderSpec::from_json(const json& j) {
  EncoderSpec s;
  s.input_shape = j.at("input_shape").get<std::vector<int64_t>>();
  s.global_avg_pool = j.at("global_avg_pool");
  s.representation_dim = j.at("representation_dim");
  for (const auto& lj : j.at("layers")) {
    ConvLayerSpec l;
    l.out_channels = lj.at("out_channels");
    l.kernel = lj.at("kernel").get<std::vector<int64_t>>();
    l.stride = lj.at("stride").get<std::vector<int64_t>>();
    l.pad = lj.at("pad").get<std::vector<int64_t>>();
    l.batch_norm = lj.at("batch_norm");
    l.nonlinearity = lj.at("nonlinearity");
    l.declared_output = lj.at("declared_output").get<std::vector<int64_t>>();
    s.layers.push_back(std::move(l));
  }
  return s;
}

EncoderSpec EncoderSpec::dcgan(int64_t in_channels) {
  EncoderSpec s;
  s.input_shape = {in_channels, 32, 32};
  auto layer = [](int64_t oc, int64_t k, int64_t st, int64_t p,
                  std::vector<int64_t> decl) {
    ConvLayerSpec l;
    l.out_channels = oc;
    l.kernel = {k, k};
    l.stride = {st, st};
    l.pad = {p, p};
    l.declared_output = std::move(decl);
    return l;
  };
  s.layers = {layer(32, 4, 2, 1, {16, 16}), layer(64, 4, 2, 1, {8, 8}),
              layer(128, 4, 2, 1, {4, 4}), layer(64, 4, 1, 0, {1, 1})};
  s.global_avg_pool = false;
  s.representation_dim = 64;
  return s;
}

EncoderSpec EncoderSpec::alexnet3d() {
  EncoderSpec s;
  s.input_shape = {1, 91, 109, 91};
  auto layer = [](int64_t oc, std::vector<int64_t> k, std::vector<int64_t> st,
                  std::vector<int64_t> p, std::vector<int64_t> decl) {
    ConvLayerSpec l;
    l.out_channels = oc;
    l.kernel = std::move(k);
    l.stride = std::move(st);
    l.pad = std::move(p);
    l.declared_output = std::move(decl);
    return l;
  };
  // Kernels/strides solved to reproduce the 62^3/18^3/6^3/6^3/6^3 output
  // dims; the anisotropic first-layer kernel absorbs the 91x109x91 input.
  // Pool/norm placement here is one consistent choice, not canonical.
  s.layers = {
      layer(64, {30, 48, 30}, {1, 1, 1}, {0, 0, 0}, {62, 62, 62}),
      layer(128, {11, 11, 11}, {3, 3, 3}, {0, 0, 0}, {18, 18, 18}),
      layer(192, {3, 3, 3}, {3, 3, 3}, {0, 0, 0}, {6, 6, 6}),
      layer(192, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, {6, 6, 6}),
      layer(64, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, {6, 6, 6}),
  };
  s.global_avg_pool = true;
  s.representation_dim = 64;
  return s;
}

// --- Linear ---------------------------------------------------------------

Linear::Linear(int64_t in, int64_t out, Rng& rng, float init_sd)
    : w_({in, out}), b_({out}) {
  if (init_sd < 0.0f) {
    // Fan-in-scaled uniform (the common framework default for dense layers).
    // A classifier head needs this much initial weight for its gradient to
    // reach the encoder at full strength from the first steps; a tiny head
    // starves the supervised signal relative to a jointly trained
    // contrastive term.
    float bound = 1.0f / std::sqrt(static_cast<float>(in));
    for (auto& v : w_.value.data)
      v = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& v : b_.value.data)
      v = static_cast<float>(rng.uniform(-bound, bound));
  } else {
    for (auto& v : w_.value.data)
      v = init_sd * static_cast<float>(rng.normal());
  }
}

Tensor Linear::forward(const Tensor& x) {
  cached_x_ = x;
  int64_t n = x.dim(0);
  Tensor y({n, out_dim()});
  ConstRowMap xm(x.ptr(), n, in_dim());
  ConstRowMap wm(w_.value.ptr(), in_dim(), out_dim());
  RowMap ym(y.ptr(), n, out_dim());
  ym.noalias() = xm * wm;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < out_dim(); ++j) y.data[i * out_dim() + j] += b_.value.data[j];
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  int64_t n = dy.dim(0);
  ConstRowMap dym(dy.ptr(), n, out_dim());
  ConstRowMap xm(cached_x_.ptr(), n, in_dim());
  ConstRowMap wm(w_.value.ptr(), in_dim(), out_dim());
  RowMap dwm(w_.grad.ptr(), in_dim(), out_dim());
  dwm.noalias() += xm.transpose() * dym;
  for (int64_t j = 0; j < out_dim(); ++j)
    b_.grad.data[j] += dym.col(j).sum();
  Tensor dx({n, in_dim()});
  RowMap dxm(dx.ptr(), n, in_dim());
  dxm.noalias() = dym * wm.transpose();
  return dx;
}

// --- Encoder --------------------------------------------------------------

Encoder::Encoder(const EncoderSpec& spec, Rng& rng) : spec_(spec) {
  shapes_ = spec_.propagate_shapes();
  if (spec_.spatial_rank() != 2)
    throw std::invalid_argument(
        "encoder runtime supports 2-d specs (higher-rank specs are "
        "shape-check only)");
  int64_t in_c = spec_.input_shape[0];
  for (size_t li = 0; li < spec_.layers.size(); ++li) {
    const ConvLayerSpec& ls = spec_.layers[li];
    Layer l{ls,
            Param({ls.out_channels, in_c, ls.kernel[0], ls.kernel[1]}),
            Param({ls.out_channels}),
            Param({ls.out_channels}),
            Param({ls.out_channels}),
            Tensor({ls.out_channels}),
            Tensor({ls.out_channels})};
    for (auto& v : l.w.value.data) v = 0.02f * static_cast<float>(rng.normal());
    l.gamma.value.fill(1.0f);
    l.running_var.fill(1.0f);
    layers_.push_back(std::move(l));
    in_c = ls.out_channels;
  }
}

Tensor Encoder::forward(const Tensor& x, bool training, bool capture) {
  if (x.ndim() != 4 || x.dim(1) != spec_.input_shape[0] ||
      x.dim(2) != spec_.input_shape[1] || x.dim(3) != spec_.input_shape[2])
    throw std::invalid_argument("encoder forward: batch shape mismatch");
  capture_ = capture;
  Tensor cur = x;
  for (auto& l : layers_) {
    l.in = cur;
    kernels::conv2d_forward(cur, l.w.value, l.b.value, static_cast<int>(l.spec.stride[0]),
                            static_cast<int>(l.spec.stride[1]), static_cast<int>(l.spec.pad[0]),
                            static_cast<int>(l.spec.pad[1]), l.conv_out);
    const Tensor* pre_act = &l.conv_out;
    if (l.spec.batch_norm) {
      kernels::batchnorm_forward(l.conv_out, l.gamma.value, l.beta.value,
                                 l.running_mean, l.running_var, training, 0.1f,
                                 1e-5f, l.bn_out, l.save_mean, l.save_invstd);
      l.bn_training = training;
      pre_act = &l.bn_out;
    }
    if (l.spec.nonlinearity == "relu")
      kernels::relu_forward(*pre_act, l.act_out);
    else
      l.act_out = *pre_act;
    cur = l.act_out;
  }
  int64_t n = cur.dim(0);
  if (spec_.global_avg_pool) {
    pool_in_ = cur;
    Tensor z;
    kernels::global_avgpool_forward(cur, z);
    return z;
  }
  Tensor z = cur;
  z.reshape({n, spec_.representation_dim});
  return z;
}

Tensor Encoder::backward(const Tensor& dz) {
  Tensor cur = dz;
  if (spec_.global_avg_pool) {
    Tensor dx;
    kernels::global_avgpool_backward(cur, pool_in_.dim(2), pool_in_.dim(3), dx);
    cur = dx;
  } else {
    const auto& last = shapes_.back();
    cur.reshape({dz.dim(0), last[0], last[1], last[2]});
  }
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    Layer& l = *it;
    if (l.spec.nonlinearity == "relu") {
      Tensor d;
      kernels::relu_backward(l.act_out, cur, d);
      cur = d;
    }
    if (l.spec.batch_norm) {
      Tensor dx, dgamma, dbeta;
      kernels::batchnorm_backward(l.conv_out, l.gamma.value, l.save_mean,
                                  l.save_invstd, cur, l.bn_training, dx,
                                  dgamma, dbeta);
      for (int64_t i = 0; i < dgamma.numel(); ++i) {
        l.gamma.grad.data[i] += dgamma.data[i];
        l.beta.grad.data[i] += dbeta.data[i];
      }
      cur = dx;
    }
    Tensor dx, dw, db;
    kernels::conv2d_backward(l.in, l.w.value, cur, static_cast<int>(l.spec.stride[0]),
                             static_cast<int>(l.spec.stride[1]), static_cast<int>(l.spec.pad[0]),
                             static_cast<int>(l.spec.pad[1]), dx, dw, db);
    for (int64_t i = 0; i < dw.numel(); ++i) l.w.grad.data[i] += dw.data[i];
    for (int64_t i = 0; i < db.numel(); ++i) l.b.grad.data[i] += db.data[i];
    cur = dx;
  }
  return cur;
}

const Tensor& Encoder::activation(int layer) const {
  if (!capture_ || layer < 0 || layer >= layer_count())
    throw std::out_of_range("no captured activation for layer " +
                            std::to_string(layer));
  return layers_[static_cast<size_t>(layer)].act_out;
}

std::vector<Param*> Encoder::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
    if (l.spec.batch_norm) {
      out.push_back(&l.gamma);
      out.push_back(&l.beta);
    }
  }
  return out;
}

std::vector<Tensor*> Encoder::state_tensors() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.w.value);
    out.push_back(&l.b.value);
    if (l.spec.batch_norm) {
      out.push_back(&l.gamma.value);
      out.push_back(&l.beta.value);
      out.push_back(&l.running_mean);
      out.push_back(&l.running_var);
    }
  }
  return out;
}

// --- Mlp ------------------------------------------------------------------

Mlp::Mlp(const std::vector<int64_t>& widths, Rng& rng) {
  for (size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.emplace_back(widths[i], widths[i + 1], rng);
}

Tensor Mlp::forward(const Tensor& x) {
  relu_out_.clear();
  Tensor cur = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i].forward(cur);
    if (i + 1 < layers_.size()) {
      Tensor y;
      kernels::relu_forward(cur, y);
      cur = y;
      relu_out_.push_back(cur);
    }
  }
  return cur;
}

Tensor Mlp::backward(const Tensor& dy) {
  Tensor cur = dy;
  for (size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) {
      Tensor d;
      kernels::relu_backward(relu_out_[i], cur, d);
      cur = d;
    }
    cur = layers_[i].backward(cur);
  }
  return cur;
}

std::vector<Param*> Mlp::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (auto* p : l.params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> Mlp::state_tensors() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (auto* t : l.state_tensors()) out.push_back(t);
  return out;
}

// --- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::string& path, const json& metadata,
                     const std::vector<Tensor*>& tensors) {
  json header;
  header["metadata"] = metadata;
  header["tensors"] = json::array();
  for (const Tensor* t : tensors) header["tensors"].push_back(t->shape);
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write("MVICKPT1", 8);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor* t : tensors)
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

json load_checkpoint(const std::string& path,
                     const std::vector<Tensor*>& tensors) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "MVICKPT1", 8) != 0)
    throw std::runtime_error("not a checkpoint: " + path);
  uint64_t hlen;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hs);
  if (header.at("tensors").size() != tensors.size())
    throw std::runtime_error("checkpoint tensor count mismatch: " + path);
  for (size_t i = 0; i < tensors.size(); ++i) {
    auto shape = header["tensors"][i].get<std::vector<int64_t>>();
    if (shape != tensors[i]->shape)
      throw std::runtime_error("checkpoint tensor shape mismatch at " +
                               std::to_string(i));
    f.read(reinterpret_cast<char*>(tensors[i]->data.data()),
           static_cast<std::streamsize>(tensors[i]->data.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return header.at("metadata");
}

uint64_t param_hash(const std::vector<Param*>& params) {
  uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params)
    for (float v : p->value.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int i = 0; i < 4; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
  return h;
}

}  // namespace mvi::nn
