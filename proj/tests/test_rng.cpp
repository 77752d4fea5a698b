#include <catch2/catch.hpp>

#include "sfm/rng.hpp"

using sfm::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams differ from the parent and each other") {
  Rng a(Rng::derive_seed(42, 1));
  Rng b(Rng::derive_seed(42, 2));
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  REQUIRE(same == 0);
}

TEST_CASE("uniform stays in [0,1) with sane mean") {
  Rng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  REQUIRE(sum / 20000 == Approx(0.5).margin(0.01));
}

TEST_CASE("normal has unit variance and zero mean") {
  Rng rng(9);
  double sum = 0.0, sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  REQUIRE(sum / n == Approx(0.0).margin(0.02));
  REQUIRE(sq / n == Approx(1.0).margin(0.03));
}

TEST_CASE("uniform_int covers the full range without bias") {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_int(7)];
  for (int c : counts) REQUIRE(c == Approx(10000).margin(400));
}
