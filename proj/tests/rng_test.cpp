#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvi/rng.hpp"

using namespace mvi;

TEST_CASE("identical seeds give identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(124);
  bool any_diff = false;
  Rng a2(123);
  for (int i = 0; i < 10; ++i) any_diff |= (a2.uniform() != c.uniform());
  CHECK(any_diff);
}

TEST_CASE("uniform stays in [0, 1) with a sensible mean") {
  Rng r(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("below covers the full range") {
  Rng r(9);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 1000; ++i) ++seen[static_cast<size_t>(r.below(5))];
  for (int c : seen) CHECK(c > 100);
}

TEST_CASE("normal has near-standard moments") {
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(0.05));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("shuffle is a permutation and seed-deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng r(5);
  r.shuffle(v);
  std::vector<int> w = v;
  std::sort(w.begin(), w.end());
  for (int i = 0; i < 50; ++i) CHECK(w[static_cast<size_t>(i)] == i);

  std::vector<int> u(50);
  std::iota(u.begin(), u.end(), 0);
  Rng r2(5);
  r2.shuffle(u);
  CHECK(u == v);
}

TEST_CASE("forked streams differ from the parent") {
  Rng a(77);
  Rng child = a.fork(1);
  Rng a2(77);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= (child.uniform() != a2.uniform());
  CHECK(differs);
}
