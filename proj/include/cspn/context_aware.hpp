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
#ifndef CSPN_CONTEXT_AWARE_HPP_
#define CSPN_CONTEXT_AWARE_HPP_

#include <string>
#include <vector>

#include "cspn/core.hpp"
#include "cspn/propagation.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// Context-aware propagation: every kernel branch runs N steps; checkpoint
// outputs are blended per pixel with lambda weights, branches are blended
// with alpha weights, and sparse points are softly re-imposed through the
// learned confidence (guided replacement).
// ---------------------------------------------------------------------------

/// Confidence-guided replacement: out_x = (1 - g_x) grid_x + g_x obs_x with
/// g_x = m_x * sigmoid(conf_logit_x).  Broadcast over channels.
inline Grid guided_replace(const Grid& grid, const SparseObservations& obs) {
  if (grid.height() != obs.height() || grid.width() != obs.width()) {
    throw DimensionError("guided_replace: grid/observation shape mismatch");
  }
  Grid out = grid;
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (!obs.valid(y, x)) continue;
      const double g = sigmoid(obs.confidence_logit(y, x));
      const double value = obs.value(y, x);
      for (int ch = 0; ch < grid.channels(); ++ch) {
        out.at(y, x, ch) = (1.0 - g) * grid.at(y, x, ch) + g * value;
      }
    }
  }
  return out;
}

/// Per-pixel normalized alpha and lambda mixtures, precomputed once per run.
struct MixtureFields {
  int num_kernels = 0;
  int num_checkpoints = 0;
  std::size_t pixels = 0;
  std::vector<double> alpha;   // [pixel * K + k]
  std::vector<double> lambda;  // [(pixel * K + k) * T + t]

  double alpha_at(std::size_t pixel, int k) const {
    return alpha[pixel * num_kernels + k];
  }
  double lambda_at(std::size_t pixel, int k, int t) const {
    return lambda[(pixel * num_kernels + k) * num_checkpoints + t];
  }
};

inline MixtureFields normalize_mixtures(const AssemblyWeights& weights) {
  MixtureFields fields;
  fields.num_kernels = weights.num_kernels();
  fields.num_checkpoints = weights.num_checkpoints();
  fields.pixels =
      static_cast<std::size_t>(weights.height()) * weights.width();
  fields.alpha.resize(fields.pixels * fields.num_kernels);
  fields.lambda.resize(fields.pixels * fields.num_kernels *
                       fields.num_checkpoints);
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      const std::size_t pixel =
          static_cast<std::size_t>(y) * weights.width() + x;
      sigmoid_l1_normalize(
          weights.alpha_logits_at(y, x),
          std::span<double>(fields.alpha.data() + pixel * fields.num_kernels,
                            fields.num_kernels));
      for (int k = 0; k < fields.num_kernels; ++k) {
        sigmoid_l1_normalize(
            weights.lambda_logits_at(y, x, k),
            std::span<double>(fields.lambda.data() +
                                  (pixel * fields.num_kernels + k) *
                                      fields.num_checkpoints,
                              fields.num_checkpoints));
      }
    }
  }
  return fields;
}

/// One kernel branch: recurrent state, running lambda-weighted accumulator,
/// and the lambda mass consumed so far (should reach 1 per pixel by the final
/// checkpoint).
struct BranchState {
  int kernel_index = 0;
  int step = 0;
  int final_step = 0;
  Grid h0;
  Grid recurrent;
  Grid accumulator;
  std::vector<double> consumed_lambda;
};

inline BranchState make_branch_state(const Grid& h0, int kernel_index,
                                     const PropagationConfig& config) {
  BranchState branch;
  branch.kernel_index = kernel_index;
  branch.final_step = config.max_iterations();
  branch.h0 = h0;
  branch.recurrent = h0;
  branch.accumulator = Grid(h0.height(), h0.width(), h0.channels(), 0.0);
  branch.consumed_lambda.assign(h0.pixels(), 0.0);
  return branch;
}

namespace detail {

/// Advances one step with precomputed lambda weights for this branch.
/// pre_replace_out, when given, receives the state before replacement.
inline void advance_branch(BranchState& branch, const NormalizedKernel& kernel,
                           const MixtureFields& mixtures,
                           const PropagationConfig& config,
                           const SparseObservations* obs,
                           ExecutionTrace* trace = nullptr,
                           Grid* pre_replace_out = nullptr) {
  if (branch.step >= branch.final_step) {
    throw ContractError("branch already ran its final step");
  }
  Grid next = cspn_step(branch.recurrent, branch.h0, kernel, trace);
  if (pre_replace_out != nullptr) *pre_replace_out = next;
  if (obs != nullptr) next = guided_replace(next, *obs);
  branch.recurrent = std::move(next);
  branch.step += 1;

  const int checkpoint = config.checkpoint_index(branch.step);
  if (checkpoint < 0) return;
  const int w = branch.recurrent.width();
  const int c = branch.recurrent.channels();
  for (int y = 0; y < branch.recurrent.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
      const double weight =
          mixtures.lambda_at(pixel, branch.kernel_index, checkpoint);
      for (int ch = 0; ch < c; ++ch) {
        branch.accumulator.at(y, x, ch) +=
            weight * branch.recurrent.at(y, x, ch);
      }
      branch.consumed_lambda[pixel] += weight;
    }
  }
}

}  // namespace detail

/// Advances a branch by one step, accumulating at checkpoints with the
/// pixel's normalized lambda weight for this kernel.
inline void ca_accumulate(BranchState& branch, const NormalizedKernel& kernel,
                          const AssemblyWeights& weights,
                          const PropagationConfig& config,
                          const SparseObservations* obs = nullptr,
                          ExecutionTrace* trace = nullptr) {
  const MixtureFields mixtures = normalize_mixtures(weights);
  detail::advance_branch(branch, kernel, mixtures, config, obs, trace);
}

/// Alpha-weighted blend of the completed branch accumulators.
inline Grid ca_assemble(const std::vector<BranchState>& branches,
                        const AssemblyWeights& weights) {
  if (branches.empty()) throw ContractError("ca_assemble: no branches");
  if (static_cast<int>(branches.size()) != weights.num_kernels()) {
    throw ContractError("ca_assemble: branch count != kernel count");
  }
  for (const BranchState& branch : branches) {
    if (branch.step != branch.final_step) {
      throw ContractError("ca_assemble: branch has not completed its steps");
    }
  }
  const Grid& first = branches.front().accumulator;
  Grid out(first.height(), first.width(), first.channels(), 0.0);
  std::vector<double> alpha(weights.num_kernels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      sigmoid_l1_normalize(weights.alpha_logits_at(y, x), alpha);
      for (std::size_t k = 0; k < branches.size(); ++k) {
        for (int ch = 0; ch < out.channels(); ++ch) {
          out.at(y, x, ch) +=
              alpha[k] * branches[k].accumulator.at(y, x, ch);
        }
      }
    }
  }
  return out;
}

/// Everything the reverse pass needs from one forward run: normalized
/// kernels, mixtures, and the per-branch pre/post-replacement snapshots.
struct CaRunRecord {
  PropagationConfig config;
  bool has_obs = false;
  MixtureFields mixtures;
  std::vector<NormalizedKernel> kernels;        // [K]
  std::vector<std::vector<Grid>> pre_replace;   // [K][N], step t at index t-1
  std::vector<std::vector<Grid>> post_replace;  // [K][N]
  std::vector<Grid> accumulators;               // [K]
  Grid assembled;                               // before the final replacement
  Grid output;
};

/// Full context-aware run: K branches for N steps with guided replacement on
/// each recurrent state, checkpoint accumulation, alpha assembly, and one
/// final guided replacement on the assembled output.
inline Grid run_ca_cspn(const Grid& h0, const AffinityField& raw,
                        const SparseObservations* obs,
                        const AssemblyWeights& weights,
                        const PropagationConfig& config,
                        ExecutionTrace* trace = nullptr,
                        CaRunRecord* record = nullptr) {
  config.validate();
  if (raw.height() != h0.height() || raw.width() != h0.width()) {
    throw DimensionError("run_ca_cspn: affinity/grid shape mismatch");
  }
  if (weights.height() != h0.height() || weights.width() != h0.width()) {
    throw DimensionError("run_ca_cspn: weights/grid shape mismatch");
  }
  if (weights.num_kernels() != config.num_kernels() ||
      weights.num_checkpoints() != config.num_checkpoints()) {
    throw ConfigError("run_ca_cspn: weight table does not match config");
  }
  if (raw.max_kernel() < config.max_kernel()) {
    throw ConfigError("run_ca_cspn: affinity window smaller than max kernel");
  }
  if (obs != nullptr &&
      (obs->height() != h0.height() || obs->width() != h0.width())) {
    throw DimensionError("run_ca_cspn: observation shape mismatch");
  }

  const int num_kernels = config.num_kernels();
  const int total_steps = config.max_iterations();
  const MixtureFields mixtures = normalize_mixtures(weights);

  if (record != nullptr) {
    record->config = config;
    record->has_obs = obs != nullptr;
    record->mixtures = mixtures;
    record->kernels.clear();
    record->pre_replace.assign(num_kernels, {});
    record->post_replace.assign(num_kernels, {});
    record->accumulators.clear();
  }

  std::vector<BranchState> branches;
  branches.reserve(num_kernels);
  TraceAllocation branch_alloc(
      trace, static_cast<unsigned long long>(num_kernels) * 2 * h0.size());
  for (int ki = 0; ki < num_kernels; ++ki) {
    NormalizedKernel kernel = normalize(raw, config.kernel_sizes[ki]);
    TraceAllocation kernel_alloc(
        trace,
        h0.pixels() * (static_cast<unsigned long long>(kernel.slots()) + 1));
    BranchState branch = make_branch_state(h0, ki, config);
    Grid pre_replace;
    for (int step = 0; step < total_steps; ++step) {
      detail::advance_branch(branch, kernel, mixtures, config, obs, trace,
                             record != nullptr ? &pre_replace : nullptr);
      if (record != nullptr) {
        record->pre_replace[ki].push_back(pre_replace);
        record->post_replace[ki].push_back(branch.recurrent);
      }
    }
    if (record != nullptr) {
      record->kernels.push_back(kernel);
      record->accumulators.push_back(branch.accumulator);
    }
    branches.push_back(std::move(branch));
  }

  Grid assembled = ca_assemble(branches, weights);
  Grid out = obs != nullptr ? guided_replace(assembled, *obs) : assembled;
  if (record != nullptr) {
    record->assembled = std::move(assembled);
    record->output = out;
  }
  return out;
}

}  // namespace cspn

#endif  // CSPN_CONTEXT_AWARE_HPP_
