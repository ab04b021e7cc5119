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
#ifndef CSPN_PROPAGATION_HPP_
#define CSPN_PROPAGATION_HPP_

#include <string>
#include <utility>

#include "cspn/affinity.hpp"
#include "cspn/core.hpp"

namespace cspn {

/// Anchor grid plus the evolving state.  h0 is never mutated; every step
/// mixes it back in through the center weight.
struct PropagationState {
  Grid h0;
  Grid h_current;
  int step_index = 0;

  explicit PropagationState(const Grid& anchor)
      : h0(anchor), h_current(anchor) {}
};

/// One propagation step (Jacobi order: all neighbor reads see the previous
/// state):
///
///   out_x = center_x * h0_x + sum_n kappa_x(n) * h_current[x_n]
///
/// applied per channel with channel-shared weights.
inline Grid cspn_step(const Grid& h_current, const Grid& h0,
                      const NormalizedKernel& kernel,
                      ExecutionTrace* trace = nullptr) {
  require_same_shape(h_current, h0, "cspn_step");
  if (kernel.height() != h_current.height() ||
      kernel.width() != h_current.width()) {
    throw DimensionError("cspn_step: kernel/grid shape mismatch");
  }
  const int h = h_current.height();
  const int w = h_current.width();
  const int c = h_current.channels();
  const int k = kernel.kernel_size();
  const int r = window_radius(k);

  Grid out(h, w, c, 0.0);
  TraceAllocation out_alloc(trace, out.size());
  unsigned long long mult_adds = 0;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double center = kernel.center(y, x);
      for (int ch = 0; ch < c; ++ch) {
        out.at(y, x, ch) = center * h0.at(y, x, ch);
      }
      mult_adds += c;  // center term
      for (int dy = -r; dy <= r; ++dy) {
        const int ny = y + dy;
        if (ny < 0 || ny >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int nx = x + dx;
          if (nx < 0 || nx >= w) continue;
          const double weight = kernel.neighbor(y, x, window_slot(k, dy, dx));
          for (int ch = 0; ch < c; ++ch) {
            out.at(y, x, ch) += weight * h_current.at(ny, nx, ch);
          }
          mult_adds += c;
        }
      }
    }
  }
  if (trace && trace->enabled) trace->count(mult_adds);
  return out;
}

inline Grid cspn_step(const PropagationState& state,
                      const NormalizedKernel& kernel,
                      ExecutionTrace* trace = nullptr) {
  return cspn_step(state.h_current, state.h0, kernel, trace);
}

/// Hard replacement: out_x = (1 - m_x) * grid_x + m_x * obs_x.
/// For multi-channel grids the observed value is broadcast.
inline Grid replace(const Grid& grid, const SparseObservations& obs) {
  if (grid.height() != obs.height() || grid.width() != obs.width()) {
    throw DimensionError("replace: grid/observation shape mismatch");
  }
  Grid out = grid;
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (!obs.valid(y, x)) continue;
      for (int ch = 0; ch < grid.channels(); ++ch) {
        out.at(y, x, ch) = obs.value(y, x);
      }
    }
  }
  return out;
}

/// Vanilla run: n_steps of cspn_step, each followed by hard replacement when
/// observations are present.  n_steps = 0 returns the anchor unchanged.
inline Grid run_cspn(const Grid& h0, const AffinityField& raw,
                     const SparseObservations* obs, int kernel_size,
                     int n_steps, ExecutionTrace* trace = nullptr) {
  if (n_steps < 0) {
    throw ContractError("n_steps must be >= 0 (got " +
                        std::to_string(n_steps) + ")");
  }
  if (raw.height() != h0.height() || raw.width() != h0.width()) {
    throw DimensionError("run_cspn: affinity/grid shape mismatch");
  }
  const NormalizedKernel kernel = normalize(raw, kernel_size);
  TraceAllocation kernel_alloc(
      trace, h0.pixels() * (static_cast<unsigned long long>(kernel.slots()) + 1));
  Grid current = h0;
  TraceAllocation state_alloc(trace, current.size());
  for (int step = 0; step < n_steps; ++step) {
    current = cspn_step(current, h0, kernel, trace);
    if (obs != nullptr) current = replace(current, *obs);
  }
  return current;
}

}  // namespace cspn

#endif  // CSPN_PROPAGATION_HPP_
