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
#ifndef CSPN_COST_MODEL_HPP_
#define CSPN_COST_MODEL_HPP_

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cspn/core.hpp"
#include "cspn/resource_aware.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// Cost accounting.  "Latency" is modeled by normalized multiply-add counts;
// wall-clock time is reported but never enters an objective, so every number
// here is device-independent and exactly reproducible.
// ---------------------------------------------------------------------------

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

/// Image-mean expected latency proxy of the soft mixtures:
/// E(c) = (1/hw) sum_x (1/(N k_max^2)) sum_{k,t} lambda_x(k,t) alpha_x(k) t k^2.
/// Always in (0, 1] because the mixtures each sum to one.
inline double expected_cost(const AssemblyWeights& weights,
                            const PropagationConfig& config) {
  config.validate();
  if (weights.num_kernels() != config.num_kernels() ||
      weights.num_checkpoints() != config.num_checkpoints()) {
    throw ConfigError("expected_cost: weight table mismatch");
  }
  const double denom = static_cast<double>(config.max_iterations()) *
                       config.max_kernel() * config.max_kernel();
  std::vector<double> alpha(weights.num_kernels());
  std::vector<double> lambda(weights.num_checkpoints());
  double total = 0.0;
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      sigmoid_l1_normalize(weights.alpha_logits_at(y, x), alpha);
      double pixel = 0.0;
      for (int k = 0; k < config.num_kernels(); ++k) {
        sigmoid_l1_normalize(weights.lambda_logits_at(y, x, k), lambda);
        const double k2 = static_cast<double>(config.kernel_sizes[k]) *
                          config.kernel_sizes[k];
        for (int t = 0; t < config.num_checkpoints(); ++t) {
          pixel += lambda[t] * alpha[k] *
                   config.iteration_checkpoints[t] * k2;
        }
      }
      total += pixel / denom;
    }
  }
  return total / (static_cast<double>(weights.height()) * weights.width());
}

/// Image-mean cost of hard selections: mean_x (k*_x)^2 t*_x / (N k_max^2).
inline double selected_cost(const SelectionMap& selection,
                            const PropagationConfig& config) {
  config.validate();
  selection.validate(config);
  double total = 0.0;
  for (std::size_t i = 0; i < selection.pixels(); ++i) {
    total += pixel_cost(selection.kernel[i], selection.iters[i], config);
  }
  return total / static_cast<double>(selection.pixels());
}

namespace detail {
/// argmax_k alpha_x(k) per pixel without building a full SelectionMap; ties
/// break toward the smaller kernel, matching select_configuration.
inline int argmax_kernel(const AssemblyWeights& weights, int y, int x) {
  int best = 0;
  for (int k = 1; k < weights.num_kernels(); ++k) {
    if (weights.alpha_logit(y, x, k) > weights.alpha_logit(y, x, best)) {
      best = k;
    }
  }
  return best;
}
}  // namespace detail

/// Memory proxy of the hard selections induced by the kernel mixture:
/// (1/(hw k_max^2)) sum_x (k*_x)^2 with k*_x = argmax_k alpha_x(k).
inline double expected_memory(const AssemblyWeights& weights,
                              const PropagationConfig& config) {
  config.validate();
  if (weights.num_kernels() != config.num_kernels()) {
    throw ConfigError("expected_memory: weight table mismatch");
  }
  const double denom =
      static_cast<double>(config.max_kernel()) * config.max_kernel();
  double total = 0.0;
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      const int k = config.kernel_sizes[detail::argmax_kernel(weights, y, x)];
      total += static_cast<double>(k) * k / denom;
    }
  }
  return total / (static_cast<double>(weights.height()) * weights.width());
}

/// Same memory proxy evaluated on an explicit selection map.
inline double expected_memory(const SelectionMap& selection,
                              const PropagationConfig& config) {
  config.validate();
  selection.validate(config);
  const double denom =
      static_cast<double>(config.max_kernel()) * config.max_kernel();
  double total = 0.0;
  for (int k : selection.kernel) {
    total += static_cast<double>(k) * k / denom;
  }
  return total / static_cast<double>(selection.pixels());
}

/// Differentiable stand-in for expected_memory: replaces the argmax with the
/// soft kernel mixture, (1/hw) sum_x sum_k alpha_x(k) k^2 / k_max^2.  The
/// hard definition is piecewise constant in the logits, so budget penalties
/// are applied to this surrogate while the hard value is still reported.
inline double soft_memory(const AssemblyWeights& weights,
                          const PropagationConfig& config) {
  config.validate();
  if (weights.num_kernels() != config.num_kernels()) {
    throw ConfigError("soft_memory: weight table mismatch");
  }
  const double denom =
      static_cast<double>(config.max_kernel()) * config.max_kernel();
  std::vector<double> alpha(weights.num_kernels());
  double total = 0.0;
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      sigmoid_l1_normalize(weights.alpha_logits_at(y, x), alpha);
      for (int k = 0; k < config.num_kernels(); ++k) {
        total += alpha[k] * config.kernel_sizes[k] * config.kernel_sizes[k] /
                 denom;
      }
    }
  }
  return total / (static_cast<double>(weights.height()) * weights.width());
}

/// Mean kernel size of the soft mixture, normalized by k_max.
inline double expected_kernel(const AssemblyWeights& weights,
                              const PropagationConfig& config) {
  config.validate();
  std::vector<double> alpha(weights.num_kernels());
  double total = 0.0;
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      sigmoid_l1_normalize(weights.alpha_logits_at(y, x), alpha);
      for (int k = 0; k < config.num_kernels(); ++k) {
        total += alpha[k] * config.kernel_sizes[k];
      }
    }
  }
  return total /
         (static_cast<double>(weights.height()) * weights.width() *
          config.max_kernel());
}

/// Mean iteration count of the soft mixture (alpha-weighted over kernels),
/// normalized by N.
inline double expected_iterations(const AssemblyWeights& weights,
                                  const PropagationConfig& config) {
  config.validate();
  std::vector<double> alpha(weights.num_kernels());
  std::vector<double> lambda(weights.num_checkpoints());
  double total = 0.0;
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      sigmoid_l1_normalize(weights.alpha_logits_at(y, x), alpha);
      for (int k = 0; k < config.num_kernels(); ++k) {
        sigmoid_l1_normalize(weights.lambda_logits_at(y, x, k), lambda);
        for (int t = 0; t < config.num_checkpoints(); ++t) {
          total += alpha[k] * lambda[t] * config.iteration_checkpoints[t];
        }
      }
    }
  }
  return total /
         (static_cast<double>(weights.height()) * weights.width() *
          config.max_iterations());
}

/// Mean selected kernel size, normalized by k_max.
inline double expected_kernel(const SelectionMap& selection,
                              const PropagationConfig& config) {
  config.validate();
  selection.validate(config);
  double total = 0.0;
  for (int k : selection.kernel) total += k;
  return total /
         (static_cast<double>(selection.pixels()) * config.max_kernel());
}

/// Mean selected iteration count, normalized by N.
inline double expected_iterations(const SelectionMap& selection,
                                  const PropagationConfig& config) {
  config.validate();
  selection.validate(config);
  double total = 0.0;
  for (int t : selection.iters) total += t;
  return total /
         (static_cast<double>(selection.pixels()) * config.max_iterations());
}

// ---------------------------------------------------------------------------
// CostReport
// ---------------------------------------------------------------------------

/// Snapshot of a run's cost figures.  The normalized fields are optional
/// because a bare trace carries no mixture/selection information; when
/// present they lie in (0, 1].
struct CostReport {
  std::optional<double> expected_latency;  // E(c)
  std::optional<double> expected_memory;   // E(cm)
  std::optional<double> mean_kernel;       // E(k) / k_max
  std::optional<double> mean_iters;        // E(t) / N
  unsigned long long actual_mult_adds = 0;
  unsigned long long actual_peak_elements = 0;
  double wall_time_ms = 0.0;
};

/// Builds a report from an instrumented run.
inline CostReport count_ops(const ExecutionTrace& trace) {
  if (!trace.enabled) {
    throw ContractError("count_ops requires an enabled execution trace");
  }
  CostReport report;
  report.actual_mult_adds = trace.mult_adds;
  report.actual_peak_elements = trace.peak_elements;
  report.wall_time_ms = trace.wall_time_ms;
  return report;
}

/// Report for a hard-selection run: adds E(k), E(t), and both normalized
/// cost figures from the selection map.
inline CostReport count_ops(const ExecutionTrace& trace,
                            const SelectionMap& selection,
                            const PropagationConfig& config) {
  CostReport report = count_ops(trace);
  report.expected_latency = selected_cost(selection, config);
  report.expected_memory = expected_memory(selection, config);
  report.mean_kernel = expected_kernel(selection, config);
  report.mean_iters = expected_iterations(selection, config);
  return report;
}

/// Report for a soft-mixture run: expectation figures from the weights.
inline CostReport count_ops(const ExecutionTrace& trace,
                            const AssemblyWeights& weights,
                            const PropagationConfig& config) {
  CostReport report = count_ops(trace);
  report.expected_latency = expected_cost(weights, config);
  report.expected_memory = expected_memory(weights, config);
  report.mean_kernel = expected_kernel(weights, config);
  report.mean_iters = expected_iterations(weights, config);
  return report;
}

inline std::string cost_report_csv_header() {
  return "expected_latency,expected_memory,mean_kernel,mean_iters,"
         "actual_mult_adds,actual_peak_elements,wall_time_ms";
}

inline std::string cost_report_csv_row(const CostReport& report) {
  std::ostringstream out;
  out.precision(17);
  auto cell = [&out](const std::optional<double>& v) {
    if (v) out << *v;
    out << ',';
  };
  cell(report.expected_latency);
  cell(report.expected_memory);
  cell(report.mean_kernel);
  cell(report.mean_iters);
  out << report.actual_mult_adds << ',' << report.actual_peak_elements << ','
      << report.wall_time_ms;
  return out.str();
}

}  // namespace cspn

#endif  // CSPN_COST_MODEL_HPP_
