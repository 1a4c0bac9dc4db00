#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvi {

// Dense row-major float tensor. All array data in the project (images,
// activations, parameters) lives in one of these.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  }
  Tensor(std::vector<int64_t> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t ndim() const { return shape.size(); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  void reshape(std::vector<int64_t> s) {
    if (numel_of(s) != numel())
      throw std::invalid_argument("tensor: reshape changes element count");
    shape = std::move(s);
  }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

// Self-describing n-d array files: little-endian 32-bit float payload with a
// shape + dtype header (the NumPy .npy layout, so dumps are readable from
// any analysis environment).
void save_npy(const std::string& path, const Tensor& t);
Tensor load_npy(const std::string& path);

}  // namespace mvi
