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
#ifndef CSPN_SCENE_HPP_
#define CSPN_SCENE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cspn/core.hpp"
#include "cspn/rng.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// Synthetic piecewise-planar scenes: a sloped ground plane with axis-aligned
// box obstacles, giving dense ground truth with sharp depth discontinuities.
// All depths are in millimeters.
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle painted at constant depth over the plane.
struct BoxSpec {
  int y = 0;
  int x = 0;
  int height = 0;
  int width = 0;
  double depth_mm = 0.0;
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  double depth_min_mm = 2000.0;
  double depth_max_mm = 30000.0;
  double base_depth_mm = 12000.0;
  double slope_y_mm = 80.0;  // per pixel row
  double slope_x_mm = 40.0;  // per pixel column
  std::vector<BoxSpec> boxes;
  int random_boxes = 4;
  // Sparse sampling defaults, read by the scene-generation tooling.
  double density = 0.05;
  double outlier_rate = 0.0;
  double outlier_scale = 0.5;

  void validate() const {
    if (height < 1 || width < 1) {
      throw ContractError("scene size must be at least 1x1");
    }
    if (!(depth_min_mm > 0.0) || !(depth_max_mm > depth_min_mm)) {
      throw ContractError("scene depth range must satisfy 0 < min < max");
    }
    if (random_boxes < 0) throw ContractError("random_boxes must be >= 0");
    if (!(density > 0.0) || density > 1.0) {
      throw ContractError("density must lie in (0, 1]");
    }
    if (outlier_rate < 0.0 || outlier_rate >= 1.0) {
      throw ContractError("outlier_rate must lie in [0, 1)");
    }
    if (outlier_scale < 0.0) {
      throw ContractError("outlier_scale must be >= 0");
    }
  }
};

struct SyntheticScene {
  Grid ground_truth;  // mm, strictly positive
  Grid image_proxy;   // binary edge map, for reporting only
  SparseObservations sparse;
  std::uint64_t rng_seed = 0;
};

/// Deterministic scene synthesis: plane, listed boxes, then `random_boxes`
/// seeded boxes with random footprint and depth.
inline SyntheticScene make_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticScene scene;
  scene.rng_seed = seed;
  scene.ground_truth = Grid(spec.height, spec.width, 1, 0.0);
  Grid& gt = scene.ground_truth;

  auto clamp_depth = [&spec](double d) {
    return std::clamp(d, spec.depth_min_mm, spec.depth_max_mm);
  };
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      gt.at(y, x) = clamp_depth(spec.base_depth_mm + spec.slope_y_mm * y +
                                spec.slope_x_mm * x);
    }
  }

  auto paint = [&](const BoxSpec& box) {
    const int y0 = std::max(box.y, 0);
    const int x0 = std::max(box.x, 0);
    const int y1 = std::min(box.y + box.height, spec.height);
    const int x1 = std::min(box.x + box.width, spec.width);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        gt.at(y, x) = clamp_depth(box.depth_mm);
      }
    }
  };
  for (const BoxSpec& box : spec.boxes) paint(box);

  Rng rng(seed);
  const int min_side = std::max(2, std::min(spec.height, spec.width) / 8);
  const int max_side = std::max(min_side + 1, std::min(spec.height, spec.width) / 3);
  for (int b = 0; b < spec.random_boxes; ++b) {
    BoxSpec box;
    box.height = min_side + static_cast<int>(rng.uniform_index(
                                static_cast<std::uint64_t>(max_side - min_side + 1)));
    box.width = min_side + static_cast<int>(rng.uniform_index(
                               static_cast<std::uint64_t>(max_side - min_side + 1)));
    box.y = static_cast<int>(
        rng.uniform_index(static_cast<std::uint64_t>(
            std::max(1, spec.height - box.height + 1))));
    box.x = static_cast<int>(
        rng.uniform_index(static_cast<std::uint64_t>(
            std::max(1, spec.width - box.width + 1))));
    box.depth_mm = rng.uniform(spec.depth_min_mm, spec.base_depth_mm);
    paint(box);
  }

  // Edge map: 1 where a 4-neighbor depth jump exceeds 200 mm.
  scene.image_proxy = Grid(spec.height, spec.width, 1, 0.0);
  const double jump = 200.0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double d = gt.at(y, x);
      const bool edge =
          (y > 0 && std::abs(gt.at(y - 1, x) - d) > jump) ||
          (y + 1 < spec.height && std::abs(gt.at(y + 1, x) - d) > jump) ||
          (x > 0 && std::abs(gt.at(y, x - 1) - d) > jump) ||
          (x + 1 < spec.width && std::abs(gt.at(y, x + 1) - d) > jump);
      scene.image_proxy.at(y, x) = edge ? 1.0 : 0.0;
    }
  }
  scene.sparse = SparseObservations(spec.height, spec.width);
  return scene;
}

/// Bernoulli(density) sampling of the ground truth, with an outlier_rate
/// fraction of the samples multiplied by a factor in
/// [1 - outlier_scale, 1 + outlier_scale].  Confidence logits start at
/// `confidence_logit` (near-hard replacement by default).
inline SparseObservations sample_sparse(const SyntheticScene& scene,
                                        double density, double outlier_rate,
                                        double outlier_scale,
                                        std::uint64_t seed,
                                        double confidence_logit = 4.0) {
  if (!(density > 0.0) || density > 1.0) {
    throw ContractError("density must lie in (0, 1]");
  }
  if (outlier_rate < 0.0 || outlier_rate >= 1.0) {
    throw ContractError("outlier_rate must lie in [0, 1)");
  }
  if (outlier_scale < 0.0) throw ContractError("outlier_scale must be >= 0");

  const Grid& gt = scene.ground_truth;
  SparseObservations obs(gt.height(), gt.width());
  Rng rng(seed);
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!rng.bernoulli(density)) continue;
      obs.mask(y, x) = 1;
      double value = gt.at(y, x);
      if (outlier_rate > 0.0 && rng.bernoulli(outlier_rate)) {
        value *= rng.uniform(1.0 - outlier_scale, 1.0 + outlier_scale);
      }
      obs.value(y, x) = value;
      obs.confidence_logit(y, x) = confidence_logit;
    }
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Depth metrics (KITTI-style units: mm for direct, 1/km for inverse)
// ---------------------------------------------------------------------------

struct DepthMetrics {
  double rmse_mm = 0.0;
  double mae_mm = 0.0;
  double irmse_ikm = 0.0;
  double imae_ikm = 0.0;
};

/// Metrics over valid pixels; depths in mm.  Inverse metrics are computed on
/// 1000 / d_m with d_m in meters, i.e. 1e6 / d_mm, in units of 1/km.
inline DepthMetrics metrics(const Grid& pred, const Grid& gt,
                            const std::vector<std::uint8_t>& valid = {}) {
  require_same_shape(pred, gt, "metrics");
  if (!valid.empty() && valid.size() != gt.pixels()) {
    throw DimensionError("metrics: validity mask size mismatch");
  }
  double sq = 0.0, ab = 0.0, isq = 0.0, iab = 0.0;
  std::size_t count = 0;
  const int c = gt.channels();
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!valid.empty() &&
          valid[static_cast<std::size_t>(y) * gt.width() + x] == 0) {
        continue;
      }
      for (int ch = 0; ch < c; ++ch) {
        const double g = gt.at(y, x, ch);
        if (!(g > 0.0)) {
          throw ContractError("metrics: ground truth must be positive "
                              "on valid pixels");
        }
        const double p = pred.at(y, x, ch);
        const double diff = p - g;
        sq += diff * diff;
        ab += std::abs(diff);
        const double idiff = 1.0e6 / p - 1.0e6 / g;
        isq += idiff * idiff;
        iab += std::abs(idiff);
        ++count;
      }
    }
  }
  if (count == 0) throw ContractError("metrics: no valid pixels");
  DepthMetrics m;
  const double n = static_cast<double>(count);
  m.rmse_mm = std::sqrt(sq / n);
  m.mae_mm = ab / n;
  m.irmse_ikm = std::sqrt(isq / n);
  m.imae_ikm = iab / n;
  return m;
}

}  // namespace cspn

#endif  // CSPN_SCENE_HPP_
