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
#ifndef CSPN_GRADIENTS_HPP_
#define CSPN_GRADIENTS_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cspn/context_aware.hpp"
#include "cspn/core.hpp"
#include "cspn/cost_model.hpp"
#include "cspn/rng.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// Analytic reverse-mode derivatives of the context-aware run and of the full
// fitting objective with respect to every per-pixel parameter family.
// ---------------------------------------------------------------------------

/// All learnable per-pixel parameters of one instance.  Observation values
/// and the validity mask are data; only the confidence logits inside `obs`
/// are treated as parameters.
struct ModelParams {
  PropagationConfig config;
  Grid h0;
  AffinityField affinity;
  AssemblyWeights weights;
  SparseObservations obs;
  bool use_obs = true;

  void validate() const {
    config.validate();
    if (affinity.height() != h0.height() || affinity.width() != h0.width() ||
        weights.height() != h0.height() || weights.width() != h0.width()) {
      throw DimensionError("model parameters disagree on image shape");
    }
    if (use_obs &&
        (obs.height() != h0.height() || obs.width() != h0.width())) {
      throw DimensionError("observations disagree on image shape");
    }
    if (weights.num_kernels() != config.num_kernels() ||
        weights.num_checkpoints() != config.num_checkpoints()) {
      throw ConfigError("weight table does not match the configuration");
    }
    if (affinity.max_kernel() < config.max_kernel()) {
      throw ConfigError("affinity window smaller than the largest kernel");
    }
    if (h0.channels() != config.channels) {
      throw ConfigError("grid channels do not match the configuration");
    }
  }
};

/// Cotangents shaped like their parameters.  Vector layouts mirror the
/// owning containers (AffinityField::values, AssemblyWeights::alpha_logits /
/// lambda_logits, SparseObservations row-major pixels).
struct ParameterGradients {
  Grid d_h0;
  std::vector<double> d_raw_affinity;
  std::vector<double> d_alpha_logits;
  std::vector<double> d_lambda_logits;
  std::vector<double> d_confidence_logits;

  explicit ParameterGradients(const ModelParams& params)
      : d_h0(params.h0.height(), params.h0.width(), params.h0.channels(),
             0.0),
        d_raw_affinity(params.affinity.values().size(), 0.0),
        d_alpha_logits(params.weights.alpha_logits().size(), 0.0),
        d_lambda_logits(params.weights.lambda_logits().size(), 0.0),
        d_confidence_logits(params.h0.pixels(), 0.0) {}
};

namespace detail {

inline double sign_or_zero(double v) {
  return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

/// Cotangent of one branch's normalized kernel, folded back onto the shared
/// raw field through the quotient rule of kappa = raw / sum|raw|.
inline void normalize_backward(const AffinityField& raw, int kernel_size,
                               const NormalizedKernel& kernel,
                               const std::vector<double>& d_neighbor,
                               const std::vector<double>& d_center,
                               std::vector<double>& d_raw) {
  const int h = raw.height();
  const int w = raw.width();
  const int r = window_radius(kernel_size);
  const int k_max = raw.max_kernel();
  const int slots = window_slots(kernel_size);

  std::vector<double> d_kappa(slots);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double z = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          z += std::abs(raw.raw(y, x, window_slot(k_max, dy, dx)));
        }
      }
      // All-zero window: the forward map is locally constant (identity
      // kernel); the |.| subgradient at 0 is taken as 0.
      if (z == 0.0) continue;

      const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
      const double dc = d_center[pixel];
      // center = 1 - sum kappa, so every neighbor cotangent picks up -dc.
      double dot = 0.0;  // sum_n d_kappa_n * kappa_n
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int slot = window_slot(kernel_size, dy, dx);
          d_kappa[slot] = d_neighbor[pixel * slots + slot] - dc;
          dot += d_kappa[slot] * kernel.neighbor(y, x, slot);
        }
      }
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int raw_slot = window_slot(k_max, dy, dx);
          const double raw_value = raw.raw(y, x, raw_slot);
          d_raw[raw.index(y, x, raw_slot)] +=
              (d_kappa[window_slot(kernel_size, dy, dx)] -
               sign_or_zero(raw_value) * dot) /
              z;
        }
      }
    }
  }
}

}  // namespace detail

/// Reverse-mode gradients of sum_x d_output_x * output_x through the full
/// context-aware chain: final guided replacement, alpha assembly, lambda
/// checkpoint accumulation, the time-reversed propagation steps with their
/// per-step replacements, and the affinity normalization.
inline ParameterGradients backward(const ModelParams& params,
                                   const CaRunRecord& record,
                                   const Grid& d_output) {
  params.validate();
  const PropagationConfig& config = params.config;
  const int num_kernels = config.num_kernels();
  const int total_steps = config.max_iterations();
  if (static_cast<int>(record.kernels.size()) != num_kernels ||
      static_cast<int>(record.pre_replace.size()) != num_kernels ||
      static_cast<int>(record.post_replace.size()) != num_kernels ||
      static_cast<int>(record.accumulators.size()) != num_kernels) {
    throw ContractError("backward: run record is missing branch snapshots");
  }
  for (int k = 0; k < num_kernels; ++k) {
    if (static_cast<int>(record.pre_replace[k].size()) != total_steps ||
        static_cast<int>(record.post_replace[k].size()) != total_steps) {
      throw ContractError("backward: run record is missing step snapshots");
    }
  }
  if (record.has_obs != params.use_obs) {
    throw ContractError("backward: record/parameter observation mismatch");
  }
  require_same_shape(d_output, record.output, "backward");

  const int h = params.h0.height();
  const int w = params.h0.width();
  const int c = params.h0.channels();
  const bool use_obs = params.use_obs;
  const SparseObservations& obs = params.obs;

  ParameterGradients grads(params);
  const std::size_t pixels = params.h0.pixels();
  const int num_checkpoints = config.num_checkpoints();
  std::vector<double> d_alpha_norm(pixels * num_kernels, 0.0);
  std::vector<double> d_lambda_norm(pixels * num_kernels * num_checkpoints,
                                    0.0);

  // Final replacement: output = (1-g) * assembled + g * d at valid pixels.
  Grid d_assembled = d_output;
  if (use_obs) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!obs.valid(y, x)) continue;
        const double logit = obs.confidence_logit(y, x);
        const double g = sigmoid(logit);
        double dg = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          dg += (obs.value(y, x) - record.assembled.at(y, x, ch)) *
                d_output.at(y, x, ch);
          d_assembled.at(y, x, ch) = (1.0 - g) * d_output.at(y, x, ch);
        }
        grads.d_confidence_logits[obs.index(y, x)] +=
            sigmoid_derivative(logit) * dg;
      }
    }
  }

  for (int ki = 0; ki < num_kernels; ++ki) {
    const NormalizedKernel& kernel = record.kernels[ki];
    const int kernel_size = kernel.kernel_size();
    const int r = window_radius(kernel_size);
    const int slots = window_slots(kernel_size);

    // Assembly: assembled = sum_k alpha_k * accumulator_k.
    Grid d_acc(h, w, c, 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
        const double alpha = record.mixtures.alpha_at(pixel, ki);
        double da = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          da += record.accumulators[ki].at(y, x, ch) *
                d_assembled.at(y, x, ch);
          d_acc.at(y, x, ch) = alpha * d_assembled.at(y, x, ch);
        }
        d_alpha_norm[pixel * num_kernels + ki] += da;
      }
    }

    std::vector<double> d_neighbor(pixels * slots, 0.0);
    std::vector<double> d_center(pixels, 0.0);

    // Reverse time.  d_state holds the cotangent on the post-replacement
    // state R_s of the step being processed; checkpoint contributions join
    // at the top of each iteration.
    Grid d_state(h, w, c, 0.0);
    for (int step = total_steps; step >= 1; --step) {
      const int checkpoint = config.checkpoint_index(step);
      if (checkpoint >= 0) {
        const Grid& state = record.post_replace[ki][step - 1];
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
            const double lambda =
                record.mixtures.lambda_at(pixel, ki, checkpoint);
            double dl = 0.0;
            for (int ch = 0; ch < c; ++ch) {
              dl += state.at(y, x, ch) * d_acc.at(y, x, ch);
              d_state.at(y, x, ch) += lambda * d_acc.at(y, x, ch);
            }
            d_lambda_norm[(pixel * num_kernels + ki) * num_checkpoints +
                          checkpoint] += dl;
          }
        }
      }

      // Per-step replacement backward, in place on d_state.
      if (use_obs) {
        const Grid& pre = record.pre_replace[ki][step - 1];
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            if (!obs.valid(y, x)) continue;
            const double logit = obs.confidence_logit(y, x);
            const double g = sigmoid(logit);
            double dg = 0.0;
            for (int ch = 0; ch < c; ++ch) {
              dg += (obs.value(y, x) - pre.at(y, x, ch)) *
                    d_state.at(y, x, ch);
              d_state.at(y, x, ch) *= 1.0 - g;
            }
            grads.d_confidence_logits[obs.index(y, x)] +=
                sigmoid_derivative(logit) * dg;
          }
        }
      }

      // Step backward: P_s[x] = center_x h0[x] + sum_n kappa_x(n) R_{s-1}[xn].
      const Grid& prev =
          step >= 2 ? record.post_replace[ki][step - 2] : params.h0;
      Grid d_prev(h, w, c, 0.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
          const double center = kernel.center(y, x);
          double dc_acc = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            const double dp = d_state.at(y, x, ch);
            grads.d_h0.at(y, x, ch) += center * dp;
            dc_acc += params.h0.at(y, x, ch) * dp;
          }
          d_center[pixel] += dc_acc;
          for (int dy = -r; dy <= r; ++dy) {
            const int ny = y + dy;
            if (ny < 0 || ny >= h) continue;
            for (int dx = -r; dx <= r; ++dx) {
              if (dy == 0 && dx == 0) continue;
              const int nx = x + dx;
              if (nx < 0 || nx >= w) continue;
              const int slot = window_slot(kernel_size, dy, dx);
              const double weight = kernel.neighbor(y, x, slot);
              double dw = 0.0;
              for (int ch = 0; ch < c; ++ch) {
                const double dp = d_state.at(y, x, ch);
                d_prev.at(ny, nx, ch) += weight * dp;
                dw += prev.at(ny, nx, ch) * dp;
              }
              d_neighbor[pixel * slots + slot] += dw;
            }
          }
        }
      }
      d_state = std::move(d_prev);
    }

    // After step 1 the pending cotangent sits on R_0 = h0.
    for (std::size_t i = 0; i < d_state.size(); ++i) {
      grads.d_h0.values()[i] += d_state.values()[i];
    }

    detail::normalize_backward(params.affinity, kernel_size, kernel,
                               d_neighbor, d_center, grads.d_raw_affinity);
  }

  // Mixture normalization backward (sigma then L1).
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
      sigmoid_l1_normalize_backward(
          params.weights.alpha_logits_at(y, x),
          std::span<const double>(d_alpha_norm.data() + pixel * num_kernels,
                                  static_cast<std::size_t>(num_kernels)),
          std::span<double>(
              grads.d_alpha_logits.data() +
                  params.weights.alpha_index(y, x, 0),
              static_cast<std::size_t>(num_kernels)));
      for (int k = 0; k < num_kernels; ++k) {
        sigmoid_l1_normalize_backward(
            params.weights.lambda_logits_at(y, x, k),
            std::span<const double>(
                d_lambda_norm.data() +
                    (pixel * num_kernels + k) * num_checkpoints,
                static_cast<std::size_t>(num_checkpoints)),
            std::span<double>(
                grads.d_lambda_logits.data() +
                    params.weights.lambda_index(y, x, k, 0),
                static_cast<std::size_t>(num_checkpoints)));
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Fitting objective
// ---------------------------------------------------------------------------

/// Individual terms of the objective (soft memory is the differentiable
/// surrogate used by the memory hinge; the hard argmax-based figure is
/// reported separately by the cost model).
struct ObjectiveTerms {
  double loss = 0.0;
  double data = 0.0;
  double expected_cost = 0.0;
  double soft_memory = 0.0;
  double weight_decay = 0.0;
};

struct ObjectiveEvaluation {
  ObjectiveTerms terms;
  Grid output;
  ParameterGradients grads;
};

namespace detail {

/// True for affinity slots that can influence the output: inside the largest
/// configured kernel window and pointing at an in-image neighbor.
inline bool slot_active(const ModelParams& params, int y, int x, int slot) {
  const auto [dy, dx] = window_offset(params.affinity.max_kernel(), slot);
  const int r = window_radius(params.config.max_kernel());
  if (dy < -r || dy > r || dx < -r || dx > r) return false;
  return params.affinity.slot_in_image(y, x, slot);
}

inline std::size_t count_valid(const Grid& target,
                               const std::vector<std::uint8_t>& valid) {
  if (valid.empty()) return target.pixels();
  if (valid.size() != target.pixels()) {
    throw DimensionError("validity mask does not match the target shape");
  }
  std::size_t n = 0;
  for (std::uint8_t v : valid) n += v != 0;
  return n;
}

/// Sum of squares of every parameter that can influence the output.  The
/// anchor grid h0 is deliberately not decayed: it plays the role of the
/// upstream depth estimate, not of a regularized weight.
inline double decay_sum(const ModelParams& params) {
  double sum = 0.0;
  for (int y = 0; y < params.affinity.height(); ++y) {
    for (int x = 0; x < params.affinity.width(); ++x) {
      for (int slot = 0; slot < params.affinity.slots(); ++slot) {
        if (!slot_active(params, y, x, slot)) continue;
        const double v = params.affinity.raw(y, x, slot);
        sum += v * v;
      }
    }
  }
  for (double v : params.weights.alpha_logits()) sum += v * v;
  for (double v : params.weights.lambda_logits()) sum += v * v;
  if (params.use_obs) {
    for (int y = 0; y < params.obs.height(); ++y) {
      for (int x = 0; x < params.obs.width(); ++x) {
        if (!params.obs.valid(y, x)) continue;
        const double v = params.obs.confidence_logit(y, x);
        sum += v * v;
      }
    }
  }
  return sum;
}

inline ObjectiveTerms objective_terms(const ModelParams& params,
                                      const Grid& output, const Grid& target,
                                      const std::vector<std::uint8_t>& valid,
                                      const ObjectiveConfig& objective) {
  const std::size_t count = count_valid(target, valid);
  if (count == 0) {
    throw ContractError("objective needs at least one valid target pixel");
  }
  ObjectiveTerms terms;
  const int c = target.channels();
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (!valid.empty() &&
          valid[static_cast<std::size_t>(y) * target.width() + x] == 0) {
        continue;
      }
      for (int ch = 0; ch < c; ++ch) {
        const double diff = output.at(y, x, ch) - target.at(y, x, ch);
        terms.data += diff * diff;
      }
    }
  }
  terms.data /= static_cast<double>(count) * c;
  terms.expected_cost = expected_cost(params.weights, params.config);
  terms.soft_memory = soft_memory(params.weights, params.config);
  terms.weight_decay = objective.eta1 > 0.0 ? decay_sum(params) : 0.0;

  terms.loss = terms.data + objective.eta1 * terms.weight_decay +
               objective.eta2 * terms.expected_cost;
  if (objective.latency_budget) {
    terms.loss += objective.eta2_prime *
                  hinge(terms.expected_cost - *objective.latency_budget);
  }
  if (objective.memory_budget) {
    terms.loss +=
        objective.eta3 * hinge(terms.soft_memory - *objective.memory_budget);
  }
  return terms;
}

}  // namespace detail

/// Forward-only objective value (used by the finite-difference verifier).
inline double objective_value(const ModelParams& params, const Grid& target,
                              const std::vector<std::uint8_t>& valid,
                              const ObjectiveConfig& objective) {
  params.validate();
  objective.validate();
  require_same_shape(params.h0, target, "objective");
  const Grid output =
      run_ca_cspn(params.h0, params.affinity,
                  params.use_obs ? &params.obs : nullptr, params.weights,
                  params.config);
  return detail::objective_terms(params, output, target, valid, objective)
      .loss;
}

/// Objective with analytic gradients for every parameter family.  The data
/// term is the mean squared error over valid target pixels; hinge terms
/// contribute pass-through gradients strictly above their budgets and zero
/// at or below them.
inline ObjectiveEvaluation objective_and_grad(
    const ModelParams& params, const Grid& target,
    const std::vector<std::uint8_t>& valid,
    const ObjectiveConfig& objective) {
  params.validate();
  objective.validate();
  require_same_shape(params.h0, target, "objective");

  CaRunRecord record;
  Grid output =
      run_ca_cspn(params.h0, params.affinity,
                  params.use_obs ? &params.obs : nullptr, params.weights,
                  params.config, nullptr, &record);
  ObjectiveTerms terms =
      detail::objective_terms(params, output, target, valid, objective);
  const std::size_t count = detail::count_valid(target, valid);

  const int c = target.channels();
  Grid d_output(target.height(), target.width(), c, 0.0);
  const double scale = 2.0 / (static_cast<double>(count) * c);
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (!valid.empty() &&
          valid[static_cast<std::size_t>(y) * target.width() + x] == 0) {
        continue;
      }
      for (int ch = 0; ch < c; ++ch) {
        d_output.at(y, x, ch) =
            scale * (output.at(y, x, ch) - target.at(y, x, ch));
      }
    }
  }

  ObjectiveEvaluation eval{terms, std::move(output),
                           backward(params, record, d_output)};

  // Expected-cost and soft-memory regularizers, routed through the same
  // sigma-L1 normalization backward as the data term.
  double eta_cost = objective.eta2;
  if (objective.latency_budget &&
      terms.expected_cost > *objective.latency_budget) {
    eta_cost += objective.eta2_prime;
  }
  double eta_memory = 0.0;
  if (objective.memory_budget &&
      terms.soft_memory > *objective.memory_budget) {
    eta_memory = objective.eta3;
  }
  if (eta_cost > 0.0 || eta_memory > 0.0) {
    const PropagationConfig& config = params.config;
    const int num_kernels = config.num_kernels();
    const int num_checkpoints = config.num_checkpoints();
    const double hw =
        static_cast<double>(params.h0.height()) * params.h0.width();
    const double k_max2 =
        static_cast<double>(config.max_kernel()) * config.max_kernel();
    const double cost_scale =
        1.0 / (hw * config.max_iterations() * k_max2);
    const double memory_scale = 1.0 / (hw * k_max2);
    std::vector<double> d_alpha(num_kernels);
    std::vector<double> d_lambda(num_checkpoints);
    for (int y = 0; y < params.h0.height(); ++y) {
      for (int x = 0; x < params.h0.width(); ++x) {
        const std::size_t pixel =
            static_cast<std::size_t>(y) * params.h0.width() + x;
        for (int k = 0; k < num_kernels; ++k) {
          const double k2 = static_cast<double>(config.kernel_sizes[k]) *
                            config.kernel_sizes[k];
          double lambda_moment = 0.0;  // sum_t lambda(k,t) * t
          for (int t = 0; t < num_checkpoints; ++t) {
            const double lambda = record.mixtures.lambda_at(pixel, k, t);
            lambda_moment += lambda * config.iteration_checkpoints[t];
            d_lambda[t] = eta_cost * cost_scale *
                          record.mixtures.alpha_at(pixel, k) *
                          config.iteration_checkpoints[t] * k2;
          }
          d_alpha[k] = eta_cost * cost_scale * lambda_moment * k2 +
                       eta_memory * memory_scale * k2;
          sigmoid_l1_normalize_backward(
              params.weights.lambda_logits_at(y, x, k), d_lambda,
              std::span<double>(
                  eval.grads.d_lambda_logits.data() +
                      params.weights.lambda_index(y, x, k, 0),
                  static_cast<std::size_t>(num_checkpoints)));
        }
        sigmoid_l1_normalize_backward(
            params.weights.alpha_logits_at(y, x), d_alpha,
            std::span<double>(eval.grads.d_alpha_logits.data() +
                                  params.weights.alpha_index(y, x, 0),
                              static_cast<std::size_t>(num_kernels)));
      }
    }
  }

  // Weight decay: 2 eta1 p on every parameter that can reach the output.
  if (objective.eta1 > 0.0) {
    const double two_eta = 2.0 * objective.eta1;
    for (int y = 0; y < params.affinity.height(); ++y) {
      for (int x = 0; x < params.affinity.width(); ++x) {
        for (int slot = 0; slot < params.affinity.slots(); ++slot) {
          if (!detail::slot_active(params, y, x, slot)) continue;
          eval.grads.d_raw_affinity[params.affinity.index(y, x, slot)] +=
              two_eta * params.affinity.raw(y, x, slot);
        }
      }
    }
    for (std::size_t i = 0; i < eval.grads.d_alpha_logits.size(); ++i) {
      eval.grads.d_alpha_logits[i] +=
          two_eta * params.weights.alpha_logits()[i];
    }
    for (std::size_t i = 0; i < eval.grads.d_lambda_logits.size(); ++i) {
      eval.grads.d_lambda_logits[i] +=
          two_eta * params.weights.lambda_logits()[i];
    }
    if (params.use_obs) {
      for (int y = 0; y < params.obs.height(); ++y) {
        for (int x = 0; x < params.obs.width(); ++x) {
          if (!params.obs.valid(y, x)) continue;
          eval.grads.d_confidence_logits[params.obs.index(y, x)] +=
              two_eta * params.obs.confidence_logit(y, x);
        }
      }
    }
  }
  return eval;
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

/// Central-difference check of the analytic objective gradient.  Samples
/// `samples` coordinates per parameter family, skipping affinity entries
/// within 10 epsilon of the |raw| = 0 kink, and returns the maximum relative
/// error with denominator max(|analytic|, |fd|, 1e-8).
inline double finite_difference_check(const ModelParams& params,
                                      const Grid& target,
                                      const std::vector<std::uint8_t>& valid,
                                      const ObjectiveConfig& objective,
                                      double epsilon, int samples,
                                      std::uint64_t seed = 7) {
  if (!(epsilon > 0.0)) throw ContractError("epsilon must be positive");
  if (samples < 1) throw ContractError("samples must be >= 1");
  params.validate();

  const ObjectiveEvaluation eval =
      objective_and_grad(params, target, valid, objective);
  ModelParams probe = params;
  Rng rng(seed);

  auto central = [&](double* value) {
    const double saved = *value;
    *value = saved + epsilon;
    const double above = objective_value(probe, target, valid, objective);
    *value = saved - epsilon;
    const double below = objective_value(probe, target, valid, objective);
    *value = saved;
    return (above - below) / (2.0 * epsilon);
  };
  double max_rel = 0.0;
  auto check = [&](double* value, double analytic) {
    const double fd = central(value);
    const double denom =
        std::max({std::abs(analytic), std::abs(fd), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic - fd) / denom);
  };

  for (int s = 0; s < samples; ++s) {
    const std::size_t gi = rng.uniform_index(probe.h0.size());
    check(&probe.h0.values()[gi], eval.grads.d_h0.values()[gi]);
  }

  // Affinity: only active slots, away from the |raw| = 0 subgradient kink.
  std::vector<std::size_t> active_slots;
  for (int y = 0; y < params.affinity.height(); ++y) {
    for (int x = 0; x < params.affinity.width(); ++x) {
      for (int slot = 0; slot < params.affinity.slots(); ++slot) {
        if (!detail::slot_active(params, y, x, slot)) continue;
        if (std::abs(params.affinity.raw(y, x, slot)) < 10.0 * epsilon) {
          continue;
        }
        active_slots.push_back(params.affinity.index(y, x, slot));
      }
    }
  }
  if (!active_slots.empty()) {
    for (int s = 0; s < samples; ++s) {
      const std::size_t ai =
          active_slots[rng.uniform_index(active_slots.size())];
      check(&probe.affinity.values()[ai], eval.grads.d_raw_affinity[ai]);
    }
  }

  for (int s = 0; s < samples; ++s) {
    const std::size_t ai =
        rng.uniform_index(probe.weights.alpha_logits().size());
    check(&probe.weights.alpha_logits()[ai], eval.grads.d_alpha_logits[ai]);
  }
  for (int s = 0; s < samples; ++s) {
    const std::size_t li =
        rng.uniform_index(probe.weights.lambda_logits().size());
    check(&probe.weights.lambda_logits()[li],
          eval.grads.d_lambda_logits[li]);
  }

  if (params.use_obs) {
    std::vector<std::size_t> confident;
    for (int y = 0; y < params.obs.height(); ++y) {
      for (int x = 0; x < params.obs.width(); ++x) {
        if (params.obs.valid(y, x)) {
          confident.push_back(params.obs.index(y, x));
        }
      }
    }
    if (!confident.empty()) {
      for (int s = 0; s < samples; ++s) {
        const std::size_t ci = confident[rng.uniform_index(confident.size())];
        check(&probe.obs.confidence_logits()[ci],
              eval.grads.d_confidence_logits[ci]);
      }
    }
  }
  return max_rel;
}

}  // namespace cspn

#endif  // CSPN_GRADIENTS_HPP_
