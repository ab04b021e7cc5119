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
#ifndef CSPN_AFFINITY_HPP_
#define CSPN_AFFINITY_HPP_

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "cspn/core.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// NormalizedKernel
//
// Per-pixel propagation weights after L1 normalization of the raw logits:
//
//   kappa_n  = raw_n / sum_m |raw_m|   over in-image neighbors of the window
//   center   = 1 - sum_n kappa_n
//
// so sum_n |kappa_n| <= 1 (equality whenever any in-image logit is nonzero)
// and the one-step update is non-expansive.  Out-of-image slots hold exact
// zeros.  A pixel whose in-image logits are all zero degenerates to the
// identity-to-anchor kernel (center weight 1).
// ---------------------------------------------------------------------------

class NormalizedKernel {
 public:
  NormalizedKernel() = default;
  NormalizedKernel(int height, int width, int kernel_size)
      : height_(height), width_(width), kernel_size_(kernel_size) {
    neighbor_weights_.assign(
        static_cast<std::size_t>(height) * width * window_slots(kernel_size),
        0.0);
    center_.assign(static_cast<std::size_t>(height) * width, 1.0);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int kernel_size() const { return kernel_size_; }
  int slots() const { return window_slots(kernel_size_); }

  double& neighbor(int y, int x, int slot) {
    return neighbor_weights_[index(y, x, slot)];
  }
  double neighbor(int y, int x, int slot) const {
    return neighbor_weights_[index(y, x, slot)];
  }
  double& center(int y, int x) {
    return center_[static_cast<std::size_t>(y) * width_ + x];
  }
  double center(int y, int x) const {
    return center_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::size_t index(int y, int x, int slot) const {
    return (static_cast<std::size_t>(y) * width_ + x) * slots() + slot;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int kernel_size_ = 0;
  std::vector<double> neighbor_weights_;
  std::vector<double> center_;
};

/// Normalizes the central k x k sub-window of the shared raw field.
inline NormalizedKernel normalize(const AffinityField& raw, int kernel_size) {
  if (kernel_size < 3 || kernel_size % 2 == 0 ||
      kernel_size > raw.max_kernel()) {
    throw ConfigError("kernel size " + std::to_string(kernel_size) +
                      " not available in a " +
                      std::to_string(raw.max_kernel()) + "-wide field");
  }
  const int h = raw.height();
  const int w = raw.width();
  const int r = window_radius(kernel_size);
  const int k_max = raw.max_kernel();
  NormalizedKernel kernel(h, w, kernel_size);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double abs_sum = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          abs_sum += std::abs(raw.raw(y, x, window_slot(k_max, dy, dx)));
        }
      }
      if (abs_sum == 0.0) {
        kernel.center(y, x) = 1.0;  // neighbor weights stay zero
        continue;
      }
      double neighbor_sum = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const double weight =
              raw.raw(y, x, window_slot(k_max, dy, dx)) / abs_sum;
          kernel.neighbor(y, x, window_slot(kernel_size, dy, dx)) = weight;
          neighbor_sum += weight;
        }
      }
      kernel.center(y, x) = 1.0 - neighbor_sum;
    }
  }
  return kernel;
}

/// Single k_max-sized kernel equivalent to the alpha-weighted mixture of the
/// per-branch kernels: kappa_eff = sum_k alpha_k * embed(normalize(raw, k)).
/// One propagation step with it equals the alpha-mixture of the per-kernel
/// steps because the step is linear in the kernel.
inline NormalizedKernel effective_kernel(const AffinityField& raw,
                                         const std::vector<double>& alpha,
                                         const PropagationConfig& config) {
  config.validate();
  if (static_cast<int>(alpha.size()) != config.num_kernels()) {
    throw ContractError("alpha size does not match kernel count");
  }
  double sum = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0)) throw ContractError("alpha entries must be nonnegative");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("alpha must sum to 1");
  }

  const int h = raw.height();
  const int w = raw.width();
  const int k_max = config.max_kernel();
  NormalizedKernel effective(h, w, k_max);

  // Start from zero center; accumulate alpha_k * center_k below.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) effective.center(y, x) = 0.0;
  }

  for (int ki = 0; ki < config.num_kernels(); ++ki) {
    const int k = config.kernel_sizes[ki];
    const NormalizedKernel branch = normalize(raw, k);
    const int r = window_radius(k);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        effective.center(y, x) += alpha[ki] * branch.center(y, x);
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            if (dy == 0 && dx == 0) continue;
            effective.neighbor(y, x, window_slot(k_max, dy, dx)) +=
                alpha[ki] * branch.neighbor(y, x, window_slot(k, dy, dx));
          }
        }
      }
    }
  }
  return effective;
}

}  // namespace cspn

#endif  // CSPN_AFFINITY_HPP_
