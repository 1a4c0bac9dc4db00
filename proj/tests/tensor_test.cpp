#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mvi/tensor.hpp"

using namespace mvi;

TEST_CASE("tensor shape and data stay consistent") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.data == std::vector<float>(6, 0.0f));
  CHECK_THROWS(Tensor({2, 3}, {1.0f}));
  CHECK_THROWS(t.reshape({4, 2}));
  t.reshape({3, 2});
  CHECK(t.dim(0) == 3);
}

TEST_CASE("npy round trip preserves shape and payload") {
  Tensor t({2, 3, 4});
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data[static_cast<size_t>(i)] = static_cast<float>(i) * 0.5f - 3.0f;
  std::string path =
      (std::filesystem::temp_directory_path() / "mvi_npy_test.npy").string();
  save_npy(path, t);
  Tensor u = load_npy(path);
  CHECK(u.shape == t.shape);
  CHECK(u.data == t.data);
  std::remove(path.c_str());
}

TEST_CASE("npy reader parses files written by other tools") {
  Tensor x = load_npy(std::string(TEST_DATA_DIR) + "/svhn_fixture_X.npy");
  REQUIRE(x.shape == std::vector<int64_t>{8, 8, 3, 40});
  for (float v : x.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  Tensor y = load_npy(std::string(TEST_DATA_DIR) + "/svhn_fixture_y.npy");
  REQUIRE(y.shape == std::vector<int64_t>{40, 1});
  CHECK(y.data[0] == 1.0f);
  CHECK(y.data[9] == 10.0f);
}
