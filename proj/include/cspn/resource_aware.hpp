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
#ifndef CSPN_RESOURCE_AWARE_HPP_
#define CSPN_RESOURCE_AWARE_HPP_

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "cspn/affinity.hpp"
#include "cspn/core.hpp"
#include "cspn/propagation.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// Resource-aware propagation: each pixel commits to one (kernel, iterations)
// configuration by argmax over the soft weights, runs only that many steps
// with that kernel, and afterwards carries its value forward unchanged while
// still being readable by active neighbors.
// ---------------------------------------------------------------------------

/// Per-pixel hard configuration choice (kernel size and iteration count as
/// values, not indices).
struct SelectionMap {
  int height = 0;
  int width = 0;
  std::vector<int> kernel;  // k*_x
  std::vector<int> iters;   // t*_x

  SelectionMap() = default;
  SelectionMap(int h, int w, int k, int t)
      : height(h), width(w),
        kernel(static_cast<std::size_t>(h) * w, k),
        iters(static_cast<std::size_t>(h) * w, t) {}

  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::size_t pixels() const {
    return static_cast<std::size_t>(height) * width;
  }
  int max_steps() const {
    return iters.empty() ? 0 : *std::max_element(iters.begin(), iters.end());
  }

  void validate(const PropagationConfig& config) const {
    if (kernel.size() != pixels() || iters.size() != pixels()) {
      throw DimensionError("selection map storage does not match its shape");
    }
    for (std::size_t i = 0; i < pixels(); ++i) {
      if (std::find(config.kernel_sizes.begin(), config.kernel_sizes.end(),
                    kernel[i]) == config.kernel_sizes.end()) {
        throw ConfigError("selected kernel " + std::to_string(kernel[i]) +
                          " is not in the configuration");
      }
      if (std::find(config.iteration_checkpoints.begin(),
                    config.iteration_checkpoints.end(),
                    iters[i]) == config.iteration_checkpoints.end()) {
        throw ConfigError("selected iteration count " +
                          std::to_string(iters[i]) +
                          " is not a checkpoint");
      }
    }
  }
};

/// k*_x = argmax_k alpha_x(k), t*_x = argmax_t lambda_x(k*, t).  Ties break
/// toward the smaller kernel / iteration count.  Selections are floored at a
/// configurable minimum configuration, (3, 3) by default.
inline SelectionMap select_configuration(const AssemblyWeights& weights,
                                         const PropagationConfig& config,
                                         int min_kernel = 3,
                                         int min_iters = 3) {
  config.validate();
  if (weights.num_kernels() != config.num_kernels() ||
      weights.num_checkpoints() != config.num_checkpoints()) {
    throw ConfigError("select_configuration: weight table mismatch");
  }
  // Smallest admissible entries under the floor (fall back to the largest
  // available when every entry is below the floor).
  auto floor_value = [](const std::vector<int>& values, int floor) {
    for (int v : values) {
      if (v >= floor) return v;
    }
    return values.back();
  };
  const int kernel_floor = floor_value(config.kernel_sizes, min_kernel);
  const int iter_floor = floor_value(config.iteration_checkpoints, min_iters);

  SelectionMap selection(weights.height(), weights.width(),
                         config.kernel_sizes.front(),
                         config.iteration_checkpoints.front());
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      // argmax of the normalized mixture equals argmax of the logits
      // (sigmoid is monotone and the per-pixel normalizer is shared).
      int best_k = 0;
      for (int k = 1; k < config.num_kernels(); ++k) {
        if (weights.alpha_logit(y, x, k) >
            weights.alpha_logit(y, x, best_k)) {
          best_k = k;
        }
      }
      int best_t = 0;
      for (int t = 1; t < config.num_checkpoints(); ++t) {
        if (weights.lambda_logit(y, x, best_k, t) >
            weights.lambda_logit(y, x, best_k, best_t)) {
          best_t = t;
        }
      }
      const std::size_t i = selection.index(y, x);
      selection.kernel[i] =
          std::max(config.kernel_sizes[best_k], kernel_floor);
      selection.iters[i] =
          std::max(config.iteration_checkpoints[best_t], iter_floor);
    }
  }
  return selection;
}

/// Reference semantics for the selective run; kept as the permanent oracle
/// for the scheduled implementation.  Stopped pixels copy through: their
/// value is frozen but neighbors keep reading it.
inline Grid run_ra_cspn_naive(const Grid& h0, const AffinityField& raw,
                              const SparseObservations* obs,
                              const SelectionMap& selection,
                              const PropagationConfig& config,
                              ExecutionTrace* trace = nullptr) {
  config.validate();
  selection.validate(config);
  if (selection.height != h0.height() || selection.width != h0.width() ||
      raw.height() != h0.height() || raw.width() != h0.width()) {
    throw DimensionError("run_ra_cspn_naive: shape mismatch");
  }
  const int h = h0.height();
  const int w = h0.width();
  const int c = h0.channels();

  std::map<int, NormalizedKernel> kernels;
  for (int k : config.kernel_sizes) kernels.emplace(k, normalize(raw, k));

  Grid current = h0;
  Grid next = h0;
  TraceAllocation state_alloc(trace, 2 * h0.size());
  unsigned long long mult_adds = 0;

  const int total_steps = selection.max_steps();
  for (int step = 1; step <= total_steps; ++step) {
    next = current;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = selection.index(y, x);
        if (selection.iters[i] < step) continue;  // stopped: copy through
        const int k = selection.kernel[i];
        const NormalizedKernel& kernel = kernels.at(k);
        const int r = window_radius(k);
        for (int ch = 0; ch < c; ++ch) {
          next.at(y, x, ch) = kernel.center(y, x) * h0.at(y, x, ch);
        }
        mult_adds += c;
        for (int dy = -r; dy <= r; ++dy) {
          const int ny = y + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int nx = x + dx;
            if (nx < 0 || nx >= w) continue;
            const double weight =
                kernel.neighbor(y, x, window_slot(k, dy, dx));
            for (int ch = 0; ch < c; ++ch) {
              next.at(y, x, ch) += weight * current.at(ny, nx, ch);
            }
            mult_adds += c;
          }
        }
        if (obs != nullptr && obs->valid(y, x)) {
          for (int ch = 0; ch < c; ++ch) {
            next.at(y, x, ch) = obs->value(y, x);
          }
        }
      }
    }
    std::swap(current, next);
  }
  if (trace && trace->enabled) trace->count(mult_adds);
  return current;
}

// ---------------------------------------------------------------------------
// Regional batching
// ---------------------------------------------------------------------------

/// Pixels sharing one kernel size, with their per-pixel stop steps.  Region
/// membership never changes during a run; only the active prefix shrinks.
struct Region {
  int kernel_size = 0;
  std::vector<std::size_t> pixels;  // flat row-major indices
  std::vector<int> stop_steps;      // t*_x per member
};

struct RegionBatch {
  std::vector<Region> regions;  // ascending kernel size
  int max_steps = 0;

  std::size_t total_pixels() const {
    std::size_t n = 0;
    for (const Region& region : regions) n += region.pixels.size();
    return n;
  }
};

/// Groups pixels by their selected kernel size.  Regions partition the image.
inline RegionBatch build_regions(const SelectionMap& selection) {
  std::map<int, Region> by_kernel;
  for (std::size_t i = 0; i < selection.pixels(); ++i) {
    Region& region = by_kernel[selection.kernel[i]];
    region.kernel_size = selection.kernel[i];
    region.pixels.push_back(i);
    region.stop_steps.push_back(selection.iters[i]);
  }
  RegionBatch batch;
  batch.max_steps = selection.max_steps();
  for (auto& [kernel_size, region] : by_kernel) {
    batch.regions.push_back(std::move(region));
  }
  return batch;
}

/// Regional execution: per step, each region gathers the windows of its
/// still-active pixels into a (k*k*C) x |R_active| matrix, reduces each
/// column against the pixel's kernel weights, and scatters the results.
/// Produces the same output as run_ra_cspn_naive (identical operation order
/// per pixel).
inline Grid run_ra_cspn_scheduled(const Grid& h0, const AffinityField& raw,
                                  const SparseObservations* obs,
                                  const SelectionMap& selection,
                                  const PropagationConfig& config,
                                  ExecutionTrace* trace = nullptr) {
  config.validate();
  selection.validate(config);
  if (selection.height != h0.height() || selection.width != h0.width() ||
      raw.height() != h0.height() || raw.width() != h0.width()) {
    throw DimensionError("run_ra_cspn_scheduled: shape mismatch");
  }
  const int h = h0.height();
  const int w = h0.width();
  const int c = h0.channels();

  const RegionBatch batch = build_regions(selection);
  std::map<int, NormalizedKernel> kernels;
  unsigned long long kernel_elements = 0;
  for (const Region& region : batch.regions) {
    kernels.emplace(region.kernel_size, normalize(raw, region.kernel_size));
    // Stored per member pixel: k^2 - 1 neighbor weights plus the center.
    kernel_elements += region.pixels.size() *
                       (static_cast<unsigned long long>(
                            window_slots(region.kernel_size)) +
                        1);
  }
  TraceAllocation kernel_alloc(trace, kernel_elements);

  Grid current = h0;
  Grid next = h0;
  TraceAllocation state_alloc(trace, 2 * h0.size());
  unsigned long long mult_adds = 0;

  for (int step = 1; step <= batch.max_steps; ++step) {
    next = current;
    for (const Region& region : batch.regions) {
      const int k = region.kernel_size;
      const int r = window_radius(k);
      const int window = k * k;
      const NormalizedKernel& kernel = kernels.at(k);

      std::vector<std::size_t> active;
      active.reserve(region.pixels.size());
      for (std::size_t m = 0; m < region.pixels.size(); ++m) {
        if (region.stop_steps[m] >= step) active.push_back(region.pixels[m]);
      }
      if (active.empty()) continue;

      // Regional gather: column per active pixel, full k x k window from the
      // current state (zeros outside the image).
      std::vector<double> gathered(static_cast<std::size_t>(window) * c *
                                   active.size());
      TraceAllocation gather_alloc(trace, gathered.size());
      for (std::size_t col = 0; col < active.size(); ++col) {
        const std::size_t i = active[col];
        const int y = static_cast<int>(i) / w;
        const int x = static_cast<int>(i) % w;
        double* column = gathered.data() +
                         col * static_cast<std::size_t>(window) * c;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            const int slot = (dy + r) * k + (dx + r);
            for (int ch = 0; ch < c; ++ch) {
              column[slot * c + ch] =
                  (ny >= 0 && ny < h && nx >= 0 && nx < w)
                      ? current.at(ny, nx, ch)
                      : 0.0;
            }
          }
        }
      }

      // Weighted reduction per column, then scatter.  Slot order matches the
      // naive runner so the floating-point sums are identical.
      for (std::size_t col = 0; col < active.size(); ++col) {
        const std::size_t i = active[col];
        const int y = static_cast<int>(i) / w;
        const int x = static_cast<int>(i) % w;
        const double* column = gathered.data() +
                               col * static_cast<std::size_t>(window) * c;
        for (int ch = 0; ch < c; ++ch) {
          next.at(y, x, ch) = kernel.center(y, x) * h0.at(y, x, ch);
        }
        mult_adds += c;
        for (int dy = -r; dy <= r; ++dy) {
          const int ny = y + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int nx = x + dx;
            if (nx < 0 || nx >= w) continue;
            const double weight =
                kernel.neighbor(y, x, window_slot(k, dy, dx));
            const int slot = (dy + r) * k + (dx + r);
            for (int ch = 0; ch < c; ++ch) {
              next.at(y, x, ch) += weight * column[slot * c + ch];
            }
            mult_adds += c;
          }
        }
        if (obs != nullptr && obs->valid(y, x)) {
          for (int ch = 0; ch < c; ++ch) {
            next.at(y, x, ch) = obs->value(y, x);
          }
        }
      }
    }
    std::swap(current, next);
  }
  if (trace && trace->enabled) trace->count(mult_adds);
  return current;
}

// ---------------------------------------------------------------------------
// Budget rounding
// ---------------------------------------------------------------------------

/// Normalized per-pixel cost of a configuration: k^2 t / (N k_max^2).
inline double pixel_cost(int kernel_size, int iterations,
                         const PropagationConfig& config) {
  return static_cast<double>(kernel_size) * kernel_size * iterations /
         (static_cast<double>(config.max_iterations()) *
          config.max_kernel() * config.max_kernel());
}

/// Reassigns every pixel whose cost exceeds the latency budget to the
/// feasible configuration with the largest iteration count (ties to the
/// larger kernel).  When nothing fits the budget, the cheapest configuration
/// overall is used.  Never increases a pixel's cost.
inline SelectionMap budget_round(const SelectionMap& selection,
                                 const PropagationConfig& config,
                                 double latency_budget) {
  config.validate();
  selection.validate(config);
  if (latency_budget <= 0.0) {
    throw ContractError("latency budget must be positive");
  }

  int best_k = -1;
  int best_t = -1;
  int cheapest_k = config.kernel_sizes.front();
  int cheapest_t = config.iteration_checkpoints.front();
  long long cheapest_cost =
      static_cast<long long>(cheapest_k) * cheapest_k * cheapest_t;
  for (int t : config.iteration_checkpoints) {
    for (int k : config.kernel_sizes) {
      const long long cost = static_cast<long long>(k) * k * t;
      if (cost < cheapest_cost ||
          (cost == cheapest_cost && (t > cheapest_t ||
                                     (t == cheapest_t && k > cheapest_k)))) {
        cheapest_cost = cost;
        cheapest_k = k;
        cheapest_t = t;
      }
      if (pixel_cost(k, t, config) <= latency_budget) {
        if (t > best_t || (t == best_t && k > best_k)) {
          best_t = t;
          best_k = k;
        }
      }
    }
  }
  if (best_t < 0) {
    best_k = cheapest_k;
    best_t = cheapest_t;
  }

  SelectionMap rounded = selection;
  for (std::size_t i = 0; i < selection.pixels(); ++i) {
    if (pixel_cost(selection.kernel[i], selection.iters[i], config) <=
        latency_budget) {
      continue;
    }
    rounded.kernel[i] = best_k;
    rounded.iters[i] = best_t;
  }
  return rounded;
}

}  // namespace cspn

#endif  // CSPN_RESOURCE_AWARE_HPP_
