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
#ifndef CSPN_CORE_HPP_
#define CSPN_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cspn {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-positive or mismatched grid shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid propagation configuration (kernel sets, checkpoint sets, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value falls outside the representable range of a format.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (divergence, failed verification).
class NumericError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

/// out[i] = sigmoid(logits[i]) / sum_j sigmoid(logits[j]).
/// Every entry is positive and the entries sum to one; sigmoid bounds the
/// terms so the sum can never vanish for finite logits.
inline void sigmoid_l1_normalize(std::span<const double> logits,
                                 std::span<double> out) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = sigmoid(logits[i]);
    total += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= total;
}

/// Reverse-mode companion of sigmoid_l1_normalize.  Given cotangents on the
/// normalized vector, accumulates cotangents on the logits.
inline void sigmoid_l1_normalize_backward(std::span<const double> logits,
                                          std::span<const double> d_normalized,
                                          std::span<double> d_logits) {
  const std::size_t n = logits.size();
  double total = 0.0;
  double weighted = 0.0;  // sum_j d_normalized[j] * normalized[j]
  std::vector<double> sig(n);
  for (std::size_t i = 0; i < n; ++i) {
    sig[i] = sigmoid(logits[i]);
    total += sig[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    weighted += d_normalized[i] * sig[i] / total;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ds = sig[i] * (1.0 - sig[i]);
    d_logits[i] += ds / total * (d_normalized[i] - weighted);
  }
}

// ---------------------------------------------------------------------------
// Kernel window geometry
//
// Neighbor slots are numbered row-major over the k x k window with the center
// excluded.  A smaller kernel addresses the central sub-window of the shared
// k_max field through the same offset arithmetic.
// ---------------------------------------------------------------------------

constexpr int window_radius(int kernel_size) { return kernel_size / 2; }

constexpr int window_slots(int kernel_size) {
  return kernel_size * kernel_size - 1;
}

inline int window_slot(int kernel_size, int dy, int dx) {
  const int r = window_radius(kernel_size);
  const int linear = (dy + r) * kernel_size + (dx + r);
  const int center = r * kernel_size + r;
  return linear < center ? linear : linear - 1;
}

inline std::pair<int, int> window_offset(int kernel_size, int slot) {
  const int r = window_radius(kernel_size);
  const int center = r * kernel_size + r;
  const int linear = slot >= center ? slot + 1 : slot;
  return {linear / kernel_size - r, linear % kernel_size - r};
}

// ---------------------------------------------------------------------------
// PropagationConfig
// ---------------------------------------------------------------------------

/// The discrete configuration space: candidate kernel sizes and the iteration
/// checkpoints at which branch outputs are sampled.  Defaults follow the
/// standard {3,5,7} x {3,6,9,12} setup.
struct PropagationConfig {
  std::vector<int> kernel_sizes{3, 5, 7};
  std::vector<int> iteration_checkpoints{3, 6, 9, 12};
  int channels = 1;

  int num_kernels() const { return static_cast<int>(kernel_sizes.size()); }
  int num_checkpoints() const {
    return static_cast<int>(iteration_checkpoints.size());
  }
  int max_kernel() const { return kernel_sizes.back(); }
  int max_iterations() const { return iteration_checkpoints.back(); }

  /// Index of `step` in the checkpoint list, or -1 if it is not a checkpoint.
  int checkpoint_index(int step) const {
    for (int t = 0; t < num_checkpoints(); ++t) {
      if (iteration_checkpoints[t] == step) return t;
    }
    return -1;
  }

  void validate() const {
    if (kernel_sizes.empty()) throw ConfigError("kernel_sizes is empty");
    for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
      const int k = kernel_sizes[i];
      if (k < 3 || k % 2 == 0) {
        throw ConfigError("kernel size " + std::to_string(k) +
                          " must be odd and >= 3");
      }
      if (i > 0 && kernel_sizes[i - 1] >= k) {
        throw ConfigError("kernel_sizes must be strictly increasing");
      }
    }
    if (iteration_checkpoints.empty()) {
      throw ConfigError("iteration_checkpoints is empty");
    }
    for (std::size_t i = 0; i < iteration_checkpoints.size(); ++i) {
      const int t = iteration_checkpoints[i];
      if (t < 1) throw ConfigError("iteration checkpoints must be positive");
      if (i > 0 && iteration_checkpoints[i - 1] >= t) {
        throw ConfigError("iteration_checkpoints must be strictly increasing");
      }
    }
    if (channels < 1) throw ConfigError("channels must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Dense H x W x C field of doubles, row-major with channel fastest.
/// Shape is fixed at construction.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, double fill)
      : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1 || channels < 1) {
      throw DimensionError("grid dimensions must be >= 1 (got " +
                           std::to_string(height) + "x" +
                           std::to_string(width) + "x" +
                           std::to_string(channels) + ")");
    }
    values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  std::size_t pixels() const {
    return static_cast<std::size_t>(height_) * width_;
  }

  double& at(int y, int x, int c = 0) {
    return values_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    return values_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  bool in_bounds(int y, int x) const {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

inline Grid make_grid(int height, int width, int channels, double fill) {
  if (!std::isfinite(fill)) throw ContractError("grid fill must be finite");
  return Grid(height, width, channels, fill);
}

inline void require_same_shape(const Grid& a, const Grid& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch");
  }
}

// ---------------------------------------------------------------------------
// SparseObservations
// ---------------------------------------------------------------------------

/// Sparse depth samples with validity mask and per-point confidence logits.
/// Values at mask-false pixels are never read.  Effective confidence is
/// g = mask * sigmoid(logit), so masked-out points always carry g = 0.
class SparseObservations {
 public:
  SparseObservations() = default;
  SparseObservations(int height, int width)
      : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw DimensionError("sparse observation dimensions must be >= 1");
    }
    const std::size_t n = static_cast<std::size_t>(height) * width;
    values_.assign(n, 0.0);
    mask_.assign(n, 0);
    confidence_logits_.assign(n, 0.0);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const {
    return static_cast<std::size_t>(height_) * width_;
  }

  double& value(int y, int x) { return values_[index(y, x)]; }
  double value(int y, int x) const { return values_[index(y, x)]; }
  std::uint8_t& mask(int y, int x) { return mask_[index(y, x)]; }
  bool valid(int y, int x) const { return mask_[index(y, x)] != 0; }
  double& confidence_logit(int y, int x) {
    return confidence_logits_[index(y, x)];
  }
  double confidence_logit(int y, int x) const {
    return confidence_logits_[index(y, x)];
  }

  /// g_x = m_x * sigmoid(g_hat_x); zero wherever the mask is false.
  double confidence(int y, int x) const {
    return valid(y, x) ? sigmoid(confidence_logits_[index(y, x)]) : 0.0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (std::uint8_t m : mask_) n += m != 0;
    return n;
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<std::uint8_t>& mask_values() { return mask_; }
  const std::vector<std::uint8_t>& mask_values() const { return mask_; }
  std::vector<double>& confidence_logits() { return confidence_logits_; }
  const std::vector<double>& confidence_logits() const {
    return confidence_logits_;
  }

  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;
  std::vector<double> confidence_logits_;
};

// ---------------------------------------------------------------------------
// AffinityField
// ---------------------------------------------------------------------------

/// Raw (unnormalized) affinity logits over the k_max x k_max neighborhood of
/// every pixel, center excluded, row-major slot order.  One shared field
/// serves all kernel branches; a smaller kernel reads the central sub-window.
/// Slots whose neighbor falls outside the image are geometrically invalid and
/// are skipped by normalization regardless of their stored value.
class AffinityField {
 public:
  AffinityField() = default;
  AffinityField(int height, int width, int max_kernel, double fill = 0.0)
      : height_(height), width_(width), max_kernel_(max_kernel) {
    if (height < 1 || width < 1) {
      throw DimensionError("affinity field dimensions must be >= 1");
    }
    if (max_kernel < 3 || max_kernel % 2 == 0) {
      throw ConfigError("max kernel must be odd and >= 3");
    }
    raw_.assign(static_cast<std::size_t>(height) * width * slots(), fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int max_kernel() const { return max_kernel_; }
  int slots() const { return window_slots(max_kernel_); }

  double& raw(int y, int x, int slot) { return raw_[index(y, x, slot)]; }
  double raw(int y, int x, int slot) const { return raw_[index(y, x, slot)]; }

  /// Explicit validity of a neighbor slot: true iff the neighbor is in-image.
  bool slot_in_image(int y, int x, int slot) const {
    const auto [dy, dx] = window_offset(max_kernel_, slot);
    const int ny = y + dy;
    const int nx = x + dx;
    return ny >= 0 && ny < height_ && nx >= 0 && nx < width_;
  }

  std::size_t index(int y, int x, int slot) const {
    return (static_cast<std::size_t>(y) * width_ + x) * slots() + slot;
  }

  std::vector<double>& values() { return raw_; }
  const std::vector<double>& values() const { return raw_; }

 private:
  int height_ = 0;
  int width_ = 0;
  int max_kernel_ = 0;
  std::vector<double> raw_;
};

// ---------------------------------------------------------------------------
// AssemblyWeights
// ---------------------------------------------------------------------------

/// Per-pixel logits over kernel sizes (alpha) and iteration checkpoints
/// (lambda, one row per kernel).  Normalized forms come from
/// sigmoid-then-L1 normalization and therefore always sum to one.
class AssemblyWeights {
 public:
  AssemblyWeights() = default;
  AssemblyWeights(int height, int width, int num_kernels, int num_checkpoints,
                  double alpha_fill = 0.0, double lambda_fill = 0.0)
      : height_(height),
        width_(width),
        num_kernels_(num_kernels),
        num_checkpoints_(num_checkpoints) {
    if (height < 1 || width < 1) {
      throw DimensionError("assembly weight dimensions must be >= 1");
    }
    if (num_kernels < 1 || num_checkpoints < 1) {
      throw ConfigError("assembly weights need >= 1 kernel and checkpoint");
    }
    alpha_logits_.assign(
        static_cast<std::size_t>(height) * width * num_kernels, alpha_fill);
    lambda_logits_.assign(static_cast<std::size_t>(height) * width *
                              num_kernels * num_checkpoints,
                          lambda_fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int num_kernels() const { return num_kernels_; }
  int num_checkpoints() const { return num_checkpoints_; }

  double& alpha_logit(int y, int x, int k) {
    return alpha_logits_[alpha_index(y, x, k)];
  }
  double alpha_logit(int y, int x, int k) const {
    return alpha_logits_[alpha_index(y, x, k)];
  }
  double& lambda_logit(int y, int x, int k, int t) {
    return lambda_logits_[lambda_index(y, x, k, t)];
  }
  double lambda_logit(int y, int x, int k, int t) const {
    return lambda_logits_[lambda_index(y, x, k, t)];
  }

  std::span<const double> alpha_logits_at(int y, int x) const {
    return {alpha_logits_.data() + alpha_index(y, x, 0),
            static_cast<std::size_t>(num_kernels_)};
  }
  std::span<const double> lambda_logits_at(int y, int x, int k) const {
    return {lambda_logits_.data() + lambda_index(y, x, k, 0),
            static_cast<std::size_t>(num_checkpoints_)};
  }

  std::size_t alpha_index(int y, int x, int k) const {
    return (static_cast<std::size_t>(y) * width_ + x) * num_kernels_ + k;
  }
  std::size_t lambda_index(int y, int x, int k, int t) const {
    return ((static_cast<std::size_t>(y) * width_ + x) * num_kernels_ + k) *
               num_checkpoints_ +
           t;
  }

  std::vector<double>& alpha_logits() { return alpha_logits_; }
  const std::vector<double>& alpha_logits() const { return alpha_logits_; }
  std::vector<double>& lambda_logits() { return lambda_logits_; }
  const std::vector<double>& lambda_logits() const { return lambda_logits_; }

 private:
  int height_ = 0;
  int width_ = 0;
  int num_kernels_ = 0;
  int num_checkpoints_ = 0;
  std::vector<double> alpha_logits_;
  std::vector<double> lambda_logits_;
};

/// Normalized kernel mixture at one pixel: sigma(alpha)/sum sigma(alpha).
inline std::vector<double> normalized_alpha(const AssemblyWeights& weights,
                                            int y, int x) {
  std::vector<double> out(weights.num_kernels());
  sigmoid_l1_normalize(weights.alpha_logits_at(y, x), out);
  return out;
}

/// Normalized checkpoint mixture at one pixel for kernel index k.
inline std::vector<double> normalized_lambda(const AssemblyWeights& weights,
                                             int y, int x, int k) {
  std::vector<double> out(weights.num_checkpoints());
  sigmoid_l1_normalize(weights.lambda_logits_at(y, x, k), out);
  return out;
}

// ---------------------------------------------------------------------------
// ObjectiveConfig
// ---------------------------------------------------------------------------

/// Weights of the fitting objective: weight decay (eta1), expected-cost
/// regularization (eta2), and the hinge weights used when latency/memory
/// budgets are set.  Budgets are normalized to (0, 1].
struct ObjectiveConfig {
  double eta1 = 0.0005;
  double eta2 = 0.1;
  double eta2_prime = 1.0;
  double eta3 = 1.0;
  std::optional<double> latency_budget;  // C_l
  std::optional<double> memory_budget;   // C_m

  void validate() const {
    if (eta1 < 0 || eta2 < 0 || eta2_prime < 0 || eta3 < 0) {
      throw ConfigError("objective weights must be >= 0");
    }
    for (const auto& budget : {latency_budget, memory_budget}) {
      if (budget && (*budget <= 0.0 || *budget > 1.0)) {
        throw ConfigError("budgets must lie in (0, 1]");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// ExecutionTrace
// ---------------------------------------------------------------------------

/// Instrumentation sink for the propagation runners.  mult_adds counts one
/// unit per multiply that folds into an accumulate (center term included);
/// live/peak elements track doubles held by run-owned buffers.
struct ExecutionTrace {
  bool enabled = true;
  unsigned long long mult_adds = 0;
  unsigned long long live_elements = 0;
  unsigned long long peak_elements = 0;
  double wall_time_ms = 0.0;

  void count(unsigned long long n) { mult_adds += n; }
  void hold(unsigned long long n) {
    live_elements += n;
    peak_elements = std::max(peak_elements, live_elements);
  }
  void drop(unsigned long long n) {
    live_elements = n > live_elements ? 0 : live_elements - n;
  }
};

/// Scoped buffer accounting against an (optional) trace.
class TraceAllocation {
 public:
  TraceAllocation(ExecutionTrace* trace, unsigned long long elements)
      : trace_(trace), elements_(elements) {
    if (trace_ && trace_->enabled) trace_->hold(elements_);
  }
  ~TraceAllocation() {
    if (trace_ && trace_->enabled) trace_->drop(elements_);
  }
  TraceAllocation(const TraceAllocation&) = delete;
  TraceAllocation& operator=(const TraceAllocation&) = delete;

 private:
  ExecutionTrace* trace_;
  unsigned long long elements_;
};

}  // namespace cspn

#endif  // CSPN_CORE_HPP_
