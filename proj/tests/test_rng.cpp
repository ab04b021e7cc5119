/* Copyright 2026 The cspnpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <vector>

#include "cspn/cspn.hpp"

using namespace cspn;
using Catch::Approx;

TEST_CASE("splitmix64 matches the published reference outputs") {
  // Reference sequence for seed 0 (Vigna's splitmix64.c test vector).
  std::uint64_t state = 0;
  CHECK(splitmix64(state) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(state) == 0x6e789e6aa1b965f4ULL);
  CHECK(splitmix64(state) == 0x06c45d188009454fULL);
}

TEST_CASE("generator output is pinned for reproducibility") {
  // These values are part of the file-format-level contract: seeded scenes
  // and fits must reproduce bit-for-bit across platforms.
  Rng rng(42);
  CHECK(rng.next_u64() == 1546998764402558742ULL);
  CHECK(rng.next_u64() == 6990951692964543102ULL);
  CHECK(rng.next_u64() == 12544586762248559009ULL);
  CHECK(rng.next_u64() == 17057574109182124193ULL);

  Rng u(7);
  CHECK(u.uniform() == 0.7005764821796896);
  CHECK(u.uniform() == 0.27875122947378428);
  CHECK(u.uniform() == 0.83962746187641979);
}

TEST_CASE("same seed reproduces the stream, different seeds do not") {
  Rng a(123), b(123), c(124);
  bool all_equal = true;
  bool any_differs = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_differs = any_differs || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_differs);
}

TEST_CASE("uniform stays inside its half-open range") {
  Rng rng(5);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = rng.uniform(-2.0, 3.0);
    REQUIRE(v >= -2.0);
    REQUIRE(v < 3.0);
    sum += v;
  }
  CHECK(sum / 20000.0 == Approx(0.5).margin(0.05));
}

TEST_CASE("uniform_index covers [0, n)") {
  Rng rng(9);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const std::uint64_t v = rng.uniform_index(5);
    REQUIRE(v < 5);
    ++counts[v];
  }
  for (int count : counts) CHECK(count > 800);
}

TEST_CASE("bernoulli respects degenerate probabilities") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += rng.bernoulli(0.3);
  CHECK(hits / 10000.0 == Approx(0.3).margin(0.03));
}

TEST_CASE("forked streams are decorrelated and deterministic") {
  Rng parent_a(77);
  Rng parent_b(77);
  Rng child_a = parent_a.fork(0);
  Rng child_b = parent_b.fork(0);
  for (int i = 0; i < 16; ++i) {
    CHECK(child_a.next_u64() == child_b.next_u64());
  }
  Rng parent_c(77);
  Rng other = parent_c.fork(1);
  bool differs = false;
  Rng child_c = Rng(77).fork(0);
  for (int i = 0; i < 16; ++i) {
    differs = differs || (other.next_u64() != child_c.next_u64());
  }
  CHECK(differs);
}
