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

#include <cmath>
#include <vector>

#include "cspn/cspn.hpp"

using namespace cspn;
using Catch::Approx;

namespace {

AffinityField random_field(int h, int w, int k_max, Rng& rng, double lo = -2.0,
                           double hi = 2.0) {
  AffinityField field(h, w, k_max);
  for (double& v : field.values()) v = rng.uniform(lo, hi);
  return field;
}

Grid random_grid(int h, int w, Rng& rng, double lo = -5.0, double hi = 5.0) {
  Grid grid(h, w, 1, 0.0);
  for (double& v : grid.values()) v = rng.uniform(lo, hi);
  return grid;
}

}  // namespace

TEST_CASE("normalize divides by the l1 mass of the window") {
  // Interior pixel, k = 3, raw neighbors (2, -1, 1, 0, 0, 0, 0, 0):
  // sum |raw| = 4, so kappa = (0.5, -0.25, 0.25, 0, ...), center = 0.5.
  AffinityField raw(3, 3, 3);
  raw.raw(1, 1, 0) = 2.0;
  raw.raw(1, 1, 1) = -1.0;
  raw.raw(1, 1, 2) = 1.0;
  const NormalizedKernel kernel = normalize(raw, 3);
  CHECK(kernel.neighbor(1, 1, 0) == Approx(0.5));
  CHECK(kernel.neighbor(1, 1, 1) == Approx(-0.25));
  CHECK(kernel.neighbor(1, 1, 2) == Approx(0.25));
  for (int slot = 3; slot < 8; ++slot) CHECK(kernel.neighbor(1, 1, slot) == 0.0);
  CHECK(kernel.center(1, 1) == Approx(0.5));
}

TEST_CASE("all-zero logits normalize to the identity kernel") {
  AffinityField raw(4, 4, 3);
  const NormalizedKernel kernel = normalize(raw, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(kernel.center(y, x) == 1.0);
      for (int slot = 0; slot < 8; ++slot)
        CHECK(kernel.neighbor(y, x, slot) == 0.0);
    }
}

TEST_CASE("corner pixels normalize over the in-image neighbors only") {
  // Corner (0,0) of a 3x3 grid has in-image neighbors right, down, diagonal.
  AffinityField raw(3, 3, 3);
  raw.raw(0, 0, window_slot(3, 0, 1)) = 1.0;
  raw.raw(0, 0, window_slot(3, 1, 0)) = 1.0;
  raw.raw(0, 0, window_slot(3, 1, 1)) = 2.0;
  // Out-of-image slots carry garbage that must be ignored.
  raw.raw(0, 0, window_slot(3, -1, -1)) = 99.0;
  raw.raw(0, 0, window_slot(3, -1, 0)) = -99.0;
  const NormalizedKernel kernel = normalize(raw, 3);
  CHECK(kernel.neighbor(0, 0, window_slot(3, 0, 1)) == Approx(0.25));
  CHECK(kernel.neighbor(0, 0, window_slot(3, 1, 0)) == Approx(0.25));
  CHECK(kernel.neighbor(0, 0, window_slot(3, 1, 1)) == Approx(0.5));
  CHECK(kernel.neighbor(0, 0, window_slot(3, -1, -1)) == 0.0);
  CHECK(kernel.neighbor(0, 0, window_slot(3, -1, 0)) == 0.0);
  CHECK(kernel.center(0, 0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("normalize rejects kernel sizes outside the window family") {
  AffinityField raw(3, 3, 7);
  CHECK_THROWS_AS(normalize(raw, 4), ConfigError);
  CHECK_THROWS_AS(normalize(raw, 1), ConfigError);
  CHECK_THROWS_AS(normalize(raw, 9), ConfigError);  // larger than the field
}

TEST_CASE("interior l1 mass is one and center completes the sum") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    AffinityField raw = random_field(8, 8, 7, rng);
    for (int k : {3, 5, 7}) {
      const NormalizedKernel kernel = normalize(raw, k);
      const int r = window_radius(k);
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          double abs_sum = 0.0, sum = 0.0;
          for (int slot = 0; slot < kernel.slots(); ++slot) {
            abs_sum += std::abs(kernel.neighbor(y, x, slot));
            sum += kernel.neighbor(y, x, slot);
          }
          if (y >= r && y < 8 - r && x >= r && x < 8 - r) {
            CHECK(abs_sum == Approx(1.0).margin(1e-12));
          } else {
            CHECK(abs_sum <= 1.0 + 1e-12);
          }
          CHECK(kernel.center(y, x) == Approx(1.0 - sum).margin(1e-12));
        }
      }
    }
  }
}

TEST_CASE("small kernels depend only on the central sub-window") {
  Rng rng(32);
  AffinityField raw = random_field(9, 9, 7, rng);
  const NormalizedKernel before = normalize(raw, 3);
  // Perturb every slot outside the central 3x3 sub-window.
  AffinityField poked = raw;
  for (int slot = 0; slot < poked.slots(); ++slot) {
    const auto [dy, dx] = window_offset(7, slot);
    if (std::abs(dy) > 1 || std::abs(dx) > 1) {
      poked.raw(4, 4, slot) += 10.0;
    }
  }
  const NormalizedKernel after = normalize(poked, 3);
  CHECK(after.center(4, 4) == before.center(4, 4));
  for (int slot = 0; slot < 8; ++slot) {
    CHECK(after.neighbor(4, 4, slot) == before.neighbor(4, 4, slot));
  }
}

TEST_CASE("effective kernel reduces to the pure branch for one-hot alpha") {
  Rng rng(33);
  PropagationConfig config;
  AffinityField raw = random_field(6, 6, 7, rng);
  const NormalizedKernel direct = normalize(raw, 7);
  const NormalizedKernel mixed = effective_kernel(raw, {0.0, 0.0, 1.0}, config);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      CHECK(mixed.center(y, x) == direct.center(y, x));
      for (int slot = 0; slot < mixed.slots(); ++slot) {
        CHECK(mixed.neighbor(y, x, slot) == direct.neighbor(y, x, slot));
      }
    }
  }
}

TEST_CASE("effective kernel rejects unnormalized alpha") {
  PropagationConfig config;
  AffinityField raw(4, 4, 7);
  CHECK_THROWS_AS(effective_kernel(raw, {0.5, 0.5, 0.5}, config),
                  ContractError);
  CHECK_THROWS_AS(effective_kernel(raw, {1.2, -0.1, -0.1}, config),
                  ContractError);
  CHECK_THROWS_AS(effective_kernel(raw, {0.5, 0.5}, config), ContractError);
}

TEST_CASE("effective kernel keeps the l1 bound") {
  Rng rng(34);
  PropagationConfig config;
  for (int trial = 0; trial < 20; ++trial) {
    AffinityField raw = random_field(6, 6, 7, rng);
    std::vector<double> alpha{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                              rng.uniform(0.0, 1.0)};
    const double total = alpha[0] + alpha[1] + alpha[2];
    for (double& a : alpha) a /= total;
    const NormalizedKernel kernel = effective_kernel(raw, alpha, config);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        double abs_sum = 0.0, sum = 0.0;
        for (int slot = 0; slot < kernel.slots(); ++slot) {
          abs_sum += std::abs(kernel.neighbor(y, x, slot));
          sum += kernel.neighbor(y, x, slot);
        }
        CHECK(abs_sum <= 1.0 + 1e-12);
        CHECK(kernel.center(y, x) == Approx(1.0 - sum).margin(1e-12));
      }
    }
  }
}

TEST_CASE("one mixed step equals one step with the effective kernel") {
  // Mixture linearity: sum_k alpha_k step(kernel_k) = step(effective kernel).
  Rng rng(35);
  PropagationConfig config;
  for (int trial = 0; trial < 25; ++trial) {
    AffinityField raw = random_field(8, 8, 7, rng);
    Grid h0 = random_grid(8, 8, rng);
    Grid ht = random_grid(8, 8, rng);
    std::vector<double> alpha{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0),
                              rng.uniform(0.1, 1.0)};
    const double total = alpha[0] + alpha[1] + alpha[2];
    for (double& a : alpha) a /= total;

    Grid blended(8, 8, 1, 0.0);
    for (int ki = 0; ki < config.num_kernels(); ++ki) {
      const Grid branch =
          cspn_step(ht, h0, normalize(raw, config.kernel_sizes[ki]));
      for (std::size_t i = 0; i < blended.size(); ++i) {
        blended.values()[i] += alpha[ki] * branch.values()[i];
      }
    }
    const Grid direct = cspn_step(ht, h0, effective_kernel(raw, alpha, config));
    for (std::size_t i = 0; i < blended.size(); ++i) {
      CHECK(std::abs(blended.values()[i] - direct.values()[i]) < 1e-12);
    }
  }
}

TEST_CASE("uniform alpha over equal positive logits matches brute force") {
  Rng rng(36);
  PropagationConfig config;
  AffinityField raw(8, 8, 7);
  for (double& v : raw.values()) v = 0.7;
  Grid h0 = random_grid(8, 8, rng);
  Grid ht = random_grid(8, 8, rng);
  const std::vector<double> alpha{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  // Brute-force oracle: evaluate each branch step independently and average.
  Grid expect(8, 8, 1, 0.0);
  for (int ki = 0; ki < 3; ++ki) {
    const Grid branch =
        cspn_step(ht, h0, normalize(raw, config.kernel_sizes[ki]));
    for (std::size_t i = 0; i < expect.size(); ++i) {
      expect.values()[i] += branch.values()[i] / 3.0;
    }
  }
  const Grid direct = cspn_step(ht, h0, effective_kernel(raw, alpha, config));
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(direct.values()[i] == Approx(expect.values()[i]).margin(1e-12));
  }
}
