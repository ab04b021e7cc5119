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
#ifndef CSPN_IO_HPP_
#define CSPN_IO_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cspn/core.hpp"
#include "cspn/cost_model.hpp"
#include "cspn/fit.hpp"
#include "cspn/scene.hpp"

namespace cspn {

// ---------------------------------------------------------------------------
// File layout conventions
// ---------------------------------------------------------------------------

inline constexpr const char* kGroundTruthFile = "ground_truth.pgm";
inline constexpr const char* kSparseFile = "sparse.pgm";
inline constexpr const char* kMaskFile = "mask.pgm";
inline constexpr const char* kSceneSpecFile = "scene.json";
inline constexpr const char* kH0File = "h0.cspf";
inline constexpr const char* kAffinityFile = "affinity.cspf";
inline constexpr const char* kWeightsFile = "weights.cspf";
inline constexpr const char* kConfidenceFile = "confidence.cspf";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kMetaFile = "meta.json";

// ---------------------------------------------------------------------------
// Raw file helpers (atomic-via-rename writes)
// ---------------------------------------------------------------------------

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for write");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// 16-bit PGM depth rasters
//
// P5, maxval 65535, big-endian samples.  Encoded value v = round(depth_m *
// 256); v = 0 marks an invalid pixel.  Depths handed to these functions are
// in mm.
// ---------------------------------------------------------------------------

struct DepthRaster {
  Grid depth_mm;                   // single channel; 0 at invalid pixels
  std::vector<std::uint8_t> mask;  // 1 where valid
};

inline std::uint16_t encode_depth_mm(double depth_mm) {
  const double depth_m = depth_mm / 1000.0;
  const long long v = std::llround(depth_m * 256.0);
  if (v < 0 || v > 65535) {
    throw RangeError("depth " + std::to_string(depth_mm) +
                     " mm is outside the representable [0, 256) m range");
  }
  if (v == 0) {
    throw RangeError("valid depth " + std::to_string(depth_mm) +
                     " mm rounds to the invalid marker 0");
  }
  return static_cast<std::uint16_t>(v);
}

inline double decode_depth_mm(std::uint16_t v) {
  return static_cast<double>(v) / 256.0 * 1000.0;
}

/// Writes a depth raster; pixels with mask 0 (or all pixels valid when the
/// mask is empty) are stored as v = 0.
inline void write_depth_raster(const std::filesystem::path& path,
                               const Grid& depth_mm,
                               const std::vector<std::uint8_t>& mask = {}) {
  if (depth_mm.channels() != 1) {
    throw ContractError("depth rasters are single-channel");
  }
  if (!mask.empty() && mask.size() != depth_mm.pixels()) {
    throw DimensionError("depth raster mask size mismatch");
  }
  std::string bytes;
  bytes += "P5\n# depth raster: v = round(depth_m * 256), v=0 invalid\n";
  bytes += std::to_string(depth_mm.width()) + " " +
           std::to_string(depth_mm.height()) + "\n65535\n";
  bytes.reserve(bytes.size() + depth_mm.pixels() * 2);
  for (int y = 0; y < depth_mm.height(); ++y) {
    for (int x = 0; x < depth_mm.width(); ++x) {
      const std::size_t i =
          static_cast<std::size_t>(y) * depth_mm.width() + x;
      std::uint16_t v = 0;
      if (mask.empty() || mask[i] != 0) {
        v = encode_depth_mm(depth_mm.at(y, x));
      }
      bytes.push_back(static_cast<char>(v >> 8));
      bytes.push_back(static_cast<char>(v & 0xFF));
    }
  }
  write_file_bytes(path, bytes);
}

namespace detail {

/// PNM header token scanner; skips whitespace and '#' comments, tracking the
/// byte offset for error messages.
struct PnmScanner {
  const std::string& bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  long next_int(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      ++pos;
    }
    if (pos == start) {
      throw FormatError(std::string("expected ") + what + " at byte " +
                        std::to_string(start));
    }
    return std::stol(bytes.substr(start, pos - start));
  }
};

}  // namespace detail

inline DepthRaster read_depth_raster(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("bad magic (expected P5) at byte 0 in " +
                      path.string());
  }
  detail::PnmScanner scan{bytes, 2};
  const long width = scan.next_int("width");
  const long height = scan.next_int("height");
  const long maxval = scan.next_int("maxval");
  if (width < 1 || height < 1) {
    throw FormatError("non-positive raster dimensions in " + path.string());
  }
  if (maxval != 65535) {
    throw FormatError("maxval must be 65535 (got " + std::to_string(maxval) +
                      ") in " + path.string());
  }
  // Exactly one whitespace byte separates the header from the samples.
  if (scan.pos >= bytes.size() ||
      (bytes[scan.pos] != '\n' && bytes[scan.pos] != ' ' &&
       bytes[scan.pos] != '\t' && bytes[scan.pos] != '\r')) {
    throw FormatError("expected whitespace after maxval at byte " +
                      std::to_string(scan.pos) + " in " + path.string());
  }
  std::size_t pos = scan.pos + 1;
  const std::size_t need = static_cast<std::size_t>(width) * height * 2;
  if (bytes.size() - pos < need) {
    throw FormatError("truncated raster at byte " + std::to_string(pos) +
                      " (need " + std::to_string(need) + " sample bytes) in " +
                      path.string());
  }

  DepthRaster raster;
  raster.depth_mm = Grid(static_cast<int>(height), static_cast<int>(width),
                         1, 0.0);
  raster.mask.assign(raster.depth_mm.pixels(), 0);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      const std::uint16_t v = static_cast<std::uint16_t>(
          (static_cast<unsigned char>(bytes[pos]) << 8) |
          static_cast<unsigned char>(bytes[pos + 1]));
      pos += 2;
      if (v != 0) {
        raster.depth_mm.at(static_cast<int>(y), static_cast<int>(x)) =
            decode_depth_mm(v);
        raster.mask[static_cast<std::size_t>(y) * width + x] = 1;
      }
    }
  }
  return raster;
}

// ---------------------------------------------------------------------------
// CSPF float rasters: "CSPF" + version/height/width/channels (u32 LE) +
// H*W*C float64 LE, row-major channel-fastest.  Byte length is exactly
// 20 + 8*H*W*C.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& bytes, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

inline std::uint32_t get_u32(const std::string& bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(
             static_cast<unsigned char>(bytes[pos + i]))
         << (8 * i);
  }
  return v;
}

}  // namespace detail

inline void write_float_raster(const std::filesystem::path& path,
                               const Grid& grid) {
  std::string bytes;
  bytes.reserve(20 + grid.size() * 8);
  bytes += "CSPF";
  detail::put_u32(bytes, 1);
  detail::put_u32(bytes, static_cast<std::uint32_t>(grid.height()));
  detail::put_u32(bytes, static_cast<std::uint32_t>(grid.width()));
  detail::put_u32(bytes, static_cast<std::uint32_t>(grid.channels()));
  for (double v : grid.values()) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
  }
  write_file_bytes(path, bytes);
}

inline Grid read_float_raster(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 20) {
    throw FormatError("truncated header at byte " +
                      std::to_string(bytes.size()) + " in " + path.string());
  }
  if (bytes.compare(0, 4, "CSPF") != 0) {
    throw FormatError("bad magic (expected CSPF) at byte 0 in " +
                      path.string());
  }
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != 1) {
    throw FormatError("unsupported version " + std::to_string(version) +
                      " at byte 4 in " + path.string());
  }
  const std::uint32_t height = detail::get_u32(bytes, 8);
  const std::uint32_t width = detail::get_u32(bytes, 12);
  const std::uint32_t channels = detail::get_u32(bytes, 16);
  if (height < 1 || width < 1 || channels < 1) {
    throw FormatError("non-positive dimensions at byte 8 in " +
                      path.string());
  }
  const std::size_t expected =
      20 + 8ULL * height * width * channels;
  if (bytes.size() != expected) {
    throw FormatError("byte length " + std::to_string(bytes.size()) +
                      " does not match header (expected " +
                      std::to_string(expected) + ") in " + path.string());
  }
  Grid grid(static_cast<int>(height), static_cast<int>(width),
            static_cast<int>(channels), 0.0);
  std::size_t pos = 20;
  for (double& v : grid.values()) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) {
      u |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    }
    v = std::bit_cast<double>(u);
    pos += 8;
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Parameter containers <-> rasters
// ---------------------------------------------------------------------------

inline Grid affinity_to_grid(const AffinityField& field) {
  Grid grid(field.height(), field.width(), field.slots(), 0.0);
  grid.values() = field.values();
  return grid;
}

inline AffinityField grid_to_affinity(const Grid& grid) {
  // channels = k_max^2 - 1 determines the window size.
  int k_max = 3;
  while (window_slots(k_max) < grid.channels()) k_max += 2;
  if (window_slots(k_max) != grid.channels()) {
    throw FormatError("affinity raster has " +
                      std::to_string(grid.channels()) +
                      " channels; expected k*k-1 for an odd k >= 3");
  }
  AffinityField field(grid.height(), grid.width(), k_max);
  field.values() = grid.values();
  return field;
}

/// Assembly weights as one raster: K alpha channels, then K*T lambda
/// channels (kernel-major, checkpoint-fastest).
inline Grid weights_to_grid(const AssemblyWeights& weights) {
  const int k = weights.num_kernels();
  const int t = weights.num_checkpoints();
  Grid grid(weights.height(), weights.width(), k + k * t, 0.0);
  for (int y = 0; y < weights.height(); ++y) {
    for (int x = 0; x < weights.width(); ++x) {
      for (int ki = 0; ki < k; ++ki) {
        grid.at(y, x, ki) = weights.alpha_logit(y, x, ki);
        for (int ti = 0; ti < t; ++ti) {
          grid.at(y, x, k + ki * t + ti) =
              weights.lambda_logit(y, x, ki, ti);
        }
      }
    }
  }
  return grid;
}

inline AssemblyWeights grid_to_weights(const Grid& grid, int num_kernels,
                                       int num_checkpoints) {
  if (grid.channels() != num_kernels + num_kernels * num_checkpoints) {
    throw FormatError("weights raster has " +
                      std::to_string(grid.channels()) +
                      " channels; expected K + K*T = " +
                      std::to_string(num_kernels +
                                     num_kernels * num_checkpoints));
  }
  AssemblyWeights weights(grid.height(), grid.width(), num_kernels,
                          num_checkpoints);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      for (int ki = 0; ki < num_kernels; ++ki) {
        weights.alpha_logit(y, x, ki) = grid.at(y, x, ki);
        for (int ti = 0; ti < num_checkpoints; ++ti) {
          weights.lambda_logit(y, x, ki, ti) =
              grid.at(y, x, num_kernels + ki * num_checkpoints + ti);
        }
      }
    }
  }
  return weights;
}

/// Sparse observations from a depth raster plus an optional confidence
/// raster (logits default to 0 when absent).
inline SparseObservations make_observations(const DepthRaster& raster,
                                            const Grid* confidence = nullptr) {
  SparseObservations obs(raster.depth_mm.height(), raster.depth_mm.width());
  if (confidence != nullptr) {
    if (confidence->height() != obs.height() ||
        confidence->width() != obs.width() || confidence->channels() != 1) {
      throw DimensionError("confidence raster shape mismatch");
    }
  }
  for (int y = 0; y < obs.height(); ++y) {
    for (int x = 0; x < obs.width(); ++x) {
      const std::size_t i = obs.index(y, x);
      if (raster.mask[i] == 0) continue;
      obs.mask(y, x) = 1;
      obs.value(y, x) = raster.depth_mm.at(y, x);
      obs.confidence_logit(y, x) =
          confidence != nullptr ? confidence->at(y, x) : 0.0;
    }
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Scene spec JSON
// ---------------------------------------------------------------------------

inline std::string scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["depth_min_mm"] = spec.depth_min_mm;
  j["depth_max_mm"] = spec.depth_max_mm;
  j["base_depth_mm"] = spec.base_depth_mm;
  j["slope_y_mm"] = spec.slope_y_mm;
  j["slope_x_mm"] = spec.slope_x_mm;
  j["random_boxes"] = spec.random_boxes;
  j["density"] = spec.density;
  j["outlier_rate"] = spec.outlier_rate;
  j["outlier_scale"] = spec.outlier_scale;
  j["boxes"] = nlohmann::json::array();
  for (const BoxSpec& box : spec.boxes) {
    j["boxes"].push_back({{"y", box.y},
                          {"x", box.x},
                          {"height", box.height},
                          {"width", box.width},
                          {"depth_mm", box.depth_mm}});
  }
  return j.dump(2) + "\n";
}

inline SceneSpec scene_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene spec JSON: ") + e.what());
  }
  SceneSpec spec;
  try {
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.depth_min_mm = j.value("depth_min_mm", spec.depth_min_mm);
    spec.depth_max_mm = j.value("depth_max_mm", spec.depth_max_mm);
    spec.base_depth_mm = j.value("base_depth_mm", spec.base_depth_mm);
    spec.slope_y_mm = j.value("slope_y_mm", spec.slope_y_mm);
    spec.slope_x_mm = j.value("slope_x_mm", spec.slope_x_mm);
    spec.random_boxes = j.value("random_boxes", spec.random_boxes);
    spec.density = j.value("density", spec.density);
    spec.outlier_rate = j.value("outlier_rate", spec.outlier_rate);
    spec.outlier_scale = j.value("outlier_scale", spec.outlier_scale);
    for (const auto& jb : j.value("boxes", nlohmann::json::array())) {
      BoxSpec box;
      box.y = jb.value("y", 0);
      box.x = jb.value("x", 0);
      box.height = jb.value("height", 0);
      box.width = jb.value("width", 0);
      box.depth_mm = jb.value("depth_mm", 0.0);
      spec.boxes.push_back(box);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene spec JSON: ") + e.what());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<EpochMetrics>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,rmse_mm,mae_mm,irmse_ikm,imae_ikm,e_cost,e_mem\n";
  for (const EpochMetrics& m : history) {
    out << m.epoch << ',' << m.loss << ',' << m.rmse_mm << ',' << m.mae_mm
        << ',' << m.irmse_ikm << ',' << m.imae_ikm << ',' << m.e_cost << ','
        << m.e_mem << '\n';
  }
  write_file_bytes(path, out.str());
}

inline void write_bench_csv(const std::filesystem::path& path,
                            const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "variant,rmse_mm,mae_mm,mean_kernel,mean_iters,mult_adds,"
         "peak_elements,wall_ms\n";
  for (const BenchRow& row : rows) {
    out << row.variant << ',' << row.rmse_mm << ',' << row.mae_mm << ','
        << row.mean_kernel << ',' << row.mean_iters << ',' << row.mult_adds
        << ',' << row.peak_elements << ',' << row.wall_ms << '\n';
  }
  write_file_bytes(path, out.str());
}

inline void write_cost_report_csv(const std::filesystem::path& path,
                                  const CostReport& report) {
  write_file_bytes(path, cost_report_csv_header() + "\n" +
                             cost_report_csv_row(report) + "\n");
}

}  // namespace cspn

#endif  // CSPN_IO_HPP_
