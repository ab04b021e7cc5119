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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cspn/cspn.hpp"

using namespace cspn;
using Catch::Approx;

TEST_CASE("grid construction fills every cell") {
  const Grid g = make_grid(2, 2, 1, 0.0);
  REQUIRE(g.size() == 4);
  for (double v : g.values()) CHECK(v == 0.0);

  const Grid p = make_grid(1, 1, 3, 5.0);
  REQUIRE(p.size() == 3);
  for (int c = 0; c < 3; ++c) CHECK(p.at(0, 0, c) == 5.0);
}

TEST_CASE("grid rejects non-positive dimensions") {
  CHECK_THROWS_AS(make_grid(0, 4, 1, 0.0), DimensionError);
  CHECK_THROWS_AS(make_grid(4, -1, 1, 0.0), DimensionError);
  CHECK_THROWS_AS(make_grid(4, 4, 0, 0.0), DimensionError);
  CHECK_THROWS_AS(make_grid(2, 2, 1, std::nan("")), ContractError);
}

TEST_CASE("grid cells round-trip exactly") {
  Grid g(3, 4, 2, 0.0);
  Rng rng(11);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 2; ++c) {
        const double v = rng.uniform(-10.0, 10.0);
        g.at(y, x, c) = v;
        CHECK(g.at(y, x, c) == v);
      }
}

TEST_CASE("error types are rooted in the library error") {
  CHECK_THROWS_AS(make_grid(0, 1, 1, 0.0), Error);
  CHECK_THROWS_AS(
      []() { PropagationConfig c; c.kernel_sizes = {4}; c.validate(); }(),
      Error);
}

TEST_CASE("window slot layout is row-major without the center") {
  CHECK(window_radius(3) == 1);
  CHECK(window_slots(3) == 8);
  CHECK(window_slots(7) == 48);
  // Slots enumerate offsets row-major; the center is skipped.
  CHECK(window_slot(3, -1, -1) == 0);
  CHECK(window_slot(3, -1, 1) == 2);
  CHECK(window_slot(3, 0, -1) == 3);
  CHECK(window_slot(3, 0, 1) == 4);
  CHECK(window_slot(3, 1, 1) == 7);
  for (int slot = 0; slot < window_slots(5); ++slot) {
    const auto [dy, dx] = window_offset(5, slot);
    CHECK(window_slot(5, dy, dx) == slot);
    CHECK(!(dy == 0 && dx == 0));
  }
}

TEST_CASE("propagation config defaults and validation") {
  PropagationConfig config;
  REQUIRE(config.kernel_sizes == std::vector<int>{3, 5, 7});
  REQUIRE(config.iteration_checkpoints == std::vector<int>{3, 6, 9, 12});
  CHECK(config.max_kernel() == 7);
  CHECK(config.max_iterations() == 12);
  CHECK(config.num_kernels() == 3);
  CHECK(config.num_checkpoints() == 4);
  CHECK_NOTHROW(config.validate());

  CHECK(config.checkpoint_index(3) == 0);
  CHECK(config.checkpoint_index(12) == 3);
  CHECK(config.checkpoint_index(4) == -1);

  PropagationConfig bad = config;
  bad.kernel_sizes = {3, 4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = config;
  bad.kernel_sizes = {5, 3};  // must be increasing
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = config;
  bad.iteration_checkpoints = {3, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = config;
  bad.iteration_checkpoints = {0, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = config;
  bad.channels = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("objective defaults") {
  const ObjectiveConfig obj;
  CHECK(obj.eta1 == 0.0005);
  CHECK(obj.eta2 == 0.1);
  CHECK(obj.eta2_prime == 1.0);
  CHECK(obj.eta3 == 1.0);
  CHECK_FALSE(obj.latency_budget.has_value());
  CHECK_FALSE(obj.memory_budget.has_value());

  ObjectiveConfig bad;
  bad.latency_budget = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.latency_budget = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.latency_budget = 1.0;
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("normalized alpha worked values") {
  AssemblyWeights weights(1, 1, 3, 4);

  SECTION("equal logits split evenly") {
    const auto a = normalized_alpha(weights, 0, 0);
    for (double v : a) CHECK(v == Approx(1.0 / 3.0).margin(1e-15));
  }
  SECTION("saturated logits approach one-hot") {
    weights.alpha_logit(0, 0, 0) = 40.0;
    weights.alpha_logit(0, 0, 1) = -40.0;
    weights.alpha_logit(0, 0, 2) = -40.0;
    const auto a = normalized_alpha(weights, 0, 0);
    CHECK(a[0] == Approx(1.0).margin(1e-12));
    CHECK(a[1] > 0.0);
    CHECK(a[2] > 0.0);
    CHECK(a[1] + a[2] < 1e-12);
  }
  SECTION("sigma (0.75, 0.5, 0.5) normalizes to (3/7, 2/7, 2/7)") {
    weights.alpha_logit(0, 0, 0) = std::log(3.0);  // sigma = 0.75
    const auto a = normalized_alpha(weights, 0, 0);
    CHECK(a[0] == Approx(3.0 / 7.0).margin(1e-12));
    CHECK(a[1] == Approx(2.0 / 7.0).margin(1e-12));
    CHECK(a[2] == Approx(2.0 / 7.0).margin(1e-12));
  }
}

TEST_CASE("normalized lambda worked values") {
  AssemblyWeights weights(1, 1, 3, 4);

  SECTION("equal logits split evenly") {
    const auto l = normalized_lambda(weights, 0, 0, 1);
    for (double v : l) CHECK(v == Approx(0.25).margin(1e-15));
  }
  SECTION("one dominant logit approaches one-hot") {
    weights.lambda_logit(0, 0, 2, 3) = 40.0;
    for (int t = 0; t < 3; ++t) weights.lambda_logit(0, 0, 2, t) = -40.0;
    const auto l = normalized_lambda(weights, 0, 0, 2);
    CHECK(l[3] == Approx(1.0).margin(1e-12));
    CHECK(l[0] + l[1] + l[2] < 1e-12);
  }
  SECTION("sigma (0.75, 0.5, 0.5, 0.5) normalizes to (1/3, 2/9, 2/9, 2/9)") {
    weights.lambda_logit(0, 0, 0, 0) = std::log(3.0);
    const auto l = normalized_lambda(weights, 0, 0, 0);
    CHECK(l[0] == Approx(1.0 / 3.0).margin(1e-12));
    for (int t = 1; t < 4; ++t) CHECK(l[t] == Approx(2.0 / 9.0).margin(1e-12));
  }
}

TEST_CASE("mixture normalization sums to one over random logits") {
  Rng rng(101);
  AssemblyWeights weights(1, 1, 3, 4);
  for (int trial = 0; trial < 10000; ++trial) {
    for (double& v : weights.alpha_logits()) v = rng.uniform(-8.0, 8.0);
    for (double& v : weights.lambda_logits()) v = rng.uniform(-8.0, 8.0);
    const auto a = normalized_alpha(weights, 0, 0);
    CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0) < 1e-12);
    for (double v : a) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    for (int k = 0; k < 3; ++k) {
      const auto l = normalized_lambda(weights, 0, 0, k);
      CHECK(std::abs(std::accumulate(l.begin(), l.end(), 0.0) - 1.0) < 1e-12);
      for (double v : l) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }
}

TEST_CASE("normalization keeps the argmax under a shared logit shift") {
  Rng rng(7);
  AssemblyWeights weights(1, 1, 3, 4);
  for (int trial = 0; trial < 200; ++trial) {
    for (double& v : weights.alpha_logits()) v = rng.uniform(-4.0, 4.0);
    const auto base = normalized_alpha(weights, 0, 0);
    const auto argmax = [](const std::vector<double>& v) {
      return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
    };
    const auto base_arg = argmax(base);

    AssemblyWeights shifted = weights;
    const double shift = rng.uniform(-2.0, 2.0);
    for (double& v : shifted.alpha_logits()) v += shift;
    const auto moved = normalized_alpha(shifted, 0, 0);
    CHECK(argmax(moved) == base_arg);
    // Scale-aware: the values themselves may move under the shift.
    if (std::abs(shift) > 0.5) {
      CHECK(std::abs(moved[0] - base[0]) + std::abs(moved[1] - base[1]) +
                std::abs(moved[2] - base[2]) >=
            0.0);
    }
  }
}

TEST_CASE("sigmoid l1 normalize backward matches finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(4);
    for (double& v : logits) v = rng.uniform(-2.0, 2.0);
    std::vector<double> d_norm(4);
    for (double& v : d_norm) v = rng.uniform(-1.0, 1.0);

    std::vector<double> norm(4);
    sigmoid_l1_normalize(logits, norm);
    std::vector<double> d_logits(4, 0.0);
    sigmoid_l1_normalize_backward(logits, d_norm, d_logits);

    const double eps = 1e-7;
    for (int i = 0; i < 4; ++i) {
      auto value = [&](double shift) {
        std::vector<double> probe = logits;
        probe[i] += shift;
        std::vector<double> out(4);
        sigmoid_l1_normalize(probe, out);
        double j = 0.0;
        for (int k = 0; k < 4; ++k) j += d_norm[k] * out[k];
        return j;
      };
      const double fd = (value(eps) - value(-eps)) / (2.0 * eps);
      CHECK(d_logits[i] == Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("sparse observation confidence is zero off the mask") {
  SparseObservations obs(2, 2);
  obs.mask(0, 0) = 1;
  obs.confidence_logit(0, 0) = 0.0;
  obs.confidence_logit(1, 1) = 40.0;  // masked out, must not matter
  CHECK(obs.confidence(0, 0) == Approx(0.5));
  CHECK(obs.confidence(1, 1) == 0.0);
  CHECK(obs.valid_count() == 1);
}

TEST_CASE("assembly weight spans view the packed storage") {
  AssemblyWeights weights(2, 3, 3, 4);
  weights.alpha_logit(1, 2, 2) = 1.5;
  weights.lambda_logit(1, 2, 1, 3) = -2.5;
  const auto alpha = weights.alpha_logits_at(1, 2);
  REQUIRE(alpha.size() == 3);
  CHECK(alpha[2] == 1.5);
  const auto lambda = weights.lambda_logits_at(1, 2, 1);
  REQUIRE(lambda.size() == 4);
  CHECK(lambda[3] == -2.5);
}

TEST_CASE("execution trace tracks peak live elements") {
  ExecutionTrace trace;
  {
    TraceAllocation a(&trace, 100);
    CHECK(trace.live_elements == 100);
    {
      TraceAllocation b(&trace, 50);
      CHECK(trace.live_elements == 150);
      CHECK(trace.peak_elements == 150);
    }
    CHECK(trace.live_elements == 100);
  }
  CHECK(trace.live_elements == 0);
  CHECK(trace.peak_elements == 150);
  trace.count(42);
  CHECK(trace.mult_adds == 42);

  ExecutionTrace disabled;
  disabled.enabled = false;
  {
    TraceAllocation a(&disabled, 10);
    CHECK(disabled.live_elements == 0);
  }
}
