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

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cspn/cspn.hpp"

using namespace cspn;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("cspn_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename F>
std::string catch_format_error(F&& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("depth codes quantize at 1/256 meter") {
  CHECK(encode_depth_mm(1000.0) == 256);
  CHECK(decode_depth_mm(256) == 1000.0);
  CHECK(encode_depth_mm(100003.0) == 25601);
  CHECK(decode_depth_mm(25601) == Approx(100003.90625));
  CHECK(encode_depth_mm(255996.0) == 65535);

  SECTION("round trips stay within half a quantization step") {
    Rng rng(121);
    for (int trial = 0; trial < 200; ++trial) {
      const double depth = rng.uniform(100.0, 250000.0);
      const double back = decode_depth_mm(encode_depth_mm(depth));
      REQUIRE(std::abs(back - depth) <= 1000.0 / 512.0 + 1e-9);
    }
  }
  SECTION("out-of-range and degenerate depths are rejected") {
    CHECK_THROWS_AS(encode_depth_mm(-5.0), RangeError);
    CHECK_THROWS_AS(encode_depth_mm(256000.0), RangeError);
    // A valid-but-tiny depth would collide with the invalid marker.
    CHECK_THROWS_AS(encode_depth_mm(0.0), RangeError);
    CHECK_THROWS_AS(encode_depth_mm(1.0), RangeError);
  }
}

TEST_CASE("depth rasters round trip through 16-bit big-endian pgm") {
  TempDir dir;
  const int h = 5, w = 7;
  Grid depth(h, w, 1, 0.0);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 1);
  Rng rng(122);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Exactly representable depths: multiples of 1000/256 mm.
      depth.at(y, x) =
          decode_depth_mm(static_cast<std::uint16_t>(
              256 + rng.uniform_index(60000)));
    }
  mask[3] = 0;
  mask[10] = 0;

  const fs::path file = dir / "depth.pgm";
  write_depth_raster(file, depth, mask);

  const std::string bytes = slurp(file);
  REQUIRE(bytes.compare(0, 3, "P5\n") == 0);
  CHECK(bytes.find("65535") != std::string::npos);

  const DepthRaster raster = read_depth_raster(file);
  REQUIRE(raster.depth_mm.height() == h);
  REQUIRE(raster.depth_mm.width() == w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      REQUIRE(raster.mask[i] == mask[i]);
      if (mask[i]) {
        REQUIRE(raster.depth_mm.at(y, x) == depth.at(y, x));
      } else {
        REQUIRE(raster.depth_mm.at(y, x) == 0.0);
      }
    }

  SECTION("an empty mask argument stores every pixel") {
    const fs::path dense = dir / "dense.pgm";
    write_depth_raster(dense, depth);
    const DepthRaster full = read_depth_raster(dense);
    for (std::uint8_t m : full.mask) REQUIRE(m == 1);
  }
  SECTION("multi-channel grids are rejected") {
    CHECK_THROWS_AS(write_depth_raster(dir / "x.pgm", Grid(2, 2, 3, 1000.0)),
                    ContractError);
  }
  SECTION("mask size mismatches are rejected") {
    CHECK_THROWS_AS(
        write_depth_raster(dir / "x.pgm", depth,
                           std::vector<std::uint8_t>(4, 1)),
        DimensionError);
  }
}

TEST_CASE("malformed pgm files fail with byte offsets") {
  TempDir dir;
  Grid depth(2, 2, 1, 5000.0);
  const fs::path file = dir / "depth.pgm";
  write_depth_raster(file, depth);
  const std::string good = slurp(file);

  SECTION("wrong magic") {
    std::string bad = good;
    bad[1] = '6';
    spit(dir / "bad.pgm", bad);
    const std::string msg =
        catch_format_error([&] { read_depth_raster(dir / "bad.pgm"); });
    CHECK(msg.find("bad magic") != std::string::npos);
    CHECK(msg.find("byte 0") != std::string::npos);
  }
  SECTION("wrong maxval") {
    const std::string bad = "P5\n2 2\n255\n" + std::string(8, '\0');
    spit(dir / "bad.pgm", bad);
    const std::string msg =
        catch_format_error([&] { read_depth_raster(dir / "bad.pgm"); });
    CHECK(msg.find("maxval") != std::string::npos);
  }
  SECTION("truncated samples") {
    spit(dir / "bad.pgm", good.substr(0, good.size() - 3));
    const std::string msg =
        catch_format_error([&] { read_depth_raster(dir / "bad.pgm"); });
    CHECK(msg.find("truncated raster at byte") != std::string::npos);
  }
  SECTION("missing dimensions") {
    spit(dir / "bad.pgm", "P5\n#comment only\n");
    const std::string msg =
        catch_format_error([&] { read_depth_raster(dir / "bad.pgm"); });
    CHECK(msg.find("at byte") != std::string::npos);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(read_depth_raster(dir / "absent.pgm"), FormatError);
  }
}

TEST_CASE("float rasters round trip bit-exactly") {
  TempDir dir;
  Grid grid(3, 4, 2, 0.0);
  Rng rng(123);
  for (double& v : grid.values()) v = rng.uniform(-1e6, 1e6);
  grid.at(0, 0, 0) = 0.0;
  grid.at(0, 0, 1) = -0.0;
  grid.at(1, 1, 0) = 1e-308;  // subnormal territory survives bit casting

  const fs::path file = dir / "grid.cspf";
  write_float_raster(file, grid);
  REQUIRE(fs::file_size(file) == 20 + 8u * 3 * 4 * 2);

  const Grid back = read_float_raster(file);
  REQUIRE(back.height() == 3);
  REQUIRE(back.width() == 4);
  REQUIRE(back.channels() == 2);
  REQUIRE(back.values() == grid.values());
  CHECK(std::signbit(back.at(0, 0, 1)));
}

TEST_CASE("malformed float rasters are rejected") {
  TempDir dir;
  Grid grid(2, 2, 1, 1.5);
  const fs::path file = dir / "grid.cspf";
  write_float_raster(file, grid);
  const std::string good = slurp(file);

  SECTION("short header") {
    spit(dir / "bad.cspf", good.substr(0, 10));
    const std::string msg =
        catch_format_error([&] { read_float_raster(dir / "bad.cspf"); });
    CHECK(msg.find("truncated header") != std::string::npos);
  }
  SECTION("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(dir / "bad.cspf", bad);
    const std::string msg =
        catch_format_error([&] { read_float_raster(dir / "bad.cspf"); });
    CHECK(msg.find("bad magic") != std::string::npos);
  }
  SECTION("unsupported version") {
    std::string bad = good;
    bad[4] = 2;
    spit(dir / "bad.cspf", bad);
    const std::string msg =
        catch_format_error([&] { read_float_raster(dir / "bad.cspf"); });
    CHECK(msg.find("unsupported version 2") != std::string::npos);
  }
  SECTION("length disagreeing with the header") {
    spit(dir / "long.cspf", good + "x");
    CHECK(catch_format_error([&] { read_float_raster(dir / "long.cspf"); })
              .find("does not match header") != std::string::npos);
    spit(dir / "short.cspf", good.substr(0, good.size() - 1));
    CHECK(catch_format_error([&] { read_float_raster(dir / "short.cspf"); })
              .find("does not match header") != std::string::npos);
  }
  SECTION("zero dimensions") {
    std::string bad = good;
    bad[8] = 0;  // height u32 LE -> 0
    spit(dir / "bad.cspf", bad);
    const std::string msg =
        catch_format_error([&] { read_float_raster(dir / "bad.cspf"); });
    CHECK(msg.find("non-positive dimensions") != std::string::npos);
  }
}

TEST_CASE("affinity fields serialize as slot-channel rasters") {
  Rng rng(124);
  AffinityField field(4, 5, 5);
  for (double& v : field.values()) v = rng.uniform(-2.0, 2.0);

  const Grid grid = affinity_to_grid(field);
  REQUIRE(grid.channels() == 24);
  const AffinityField back = grid_to_affinity(grid);
  CHECK(back.max_kernel() == 5);
  CHECK(back.values() == field.values());

  CHECK_THROWS_AS(grid_to_affinity(Grid(2, 2, 7, 0.0)), FormatError);
  CHECK_THROWS_AS(grid_to_affinity(Grid(2, 2, 3, 0.0)), FormatError);
  CHECK(grid_to_affinity(Grid(2, 2, 8, 0.0)).max_kernel() == 3);
}

TEST_CASE("assembly weights serialize kernel-major, checkpoint-fastest") {
  Rng rng(125);
  AssemblyWeights weights(3, 4, 3, 2);
  for (double& v : weights.alpha_logits()) v = rng.uniform(-2.0, 2.0);
  for (double& v : weights.lambda_logits()) v = rng.uniform(-2.0, 2.0);
  weights.alpha_logit(1, 2, 2) = 5.0;
  weights.lambda_logit(1, 2, 1, 1) = -5.0;

  const Grid grid = weights_to_grid(weights);
  REQUIRE(grid.channels() == 9);  // K + K*T = 3 + 6
  CHECK(grid.at(1, 2, 2) == 5.0);
  CHECK(grid.at(1, 2, 3 + 1 * 2 + 1) == -5.0);

  const AssemblyWeights back = grid_to_weights(grid, 3, 2);
  CHECK(back.alpha_logits() == weights.alpha_logits());
  CHECK(back.lambda_logits() == weights.lambda_logits());

  CHECK_THROWS_AS(grid_to_weights(grid, 3, 4), FormatError);
}

TEST_CASE("observations assemble from depth and confidence rasters") {
  DepthRaster raster;
  raster.depth_mm = Grid(2, 3, 1, 0.0);
  raster.mask.assign(6, 0);
  raster.depth_mm.at(0, 1) = 8000.0;
  raster.mask[1] = 1;
  raster.depth_mm.at(1, 2) = 12000.0;
  raster.mask[5] = 1;

  SECTION("without confidence the logits default to zero") {
    const SparseObservations obs = make_observations(raster);
    CHECK(obs.valid_count() == 2u);
    CHECK(obs.valid(0, 1));
    CHECK(obs.value(0, 1) == 8000.0);
    CHECK(obs.confidence_logit(0, 1) == 0.0);
    CHECK_FALSE(obs.valid(0, 0));
  }
  SECTION("a confidence raster supplies the logits") {
    Grid conf(2, 3, 1, 0.0);
    conf.at(0, 1) = 1.5;
    conf.at(1, 2) = -0.5;
    conf.at(0, 0) = 99.0;  // ignored: not a valid pixel
    const SparseObservations obs = make_observations(raster, &conf);
    CHECK(obs.confidence_logit(0, 1) == 1.5);
    CHECK(obs.confidence_logit(1, 2) == -0.5);
    CHECK(obs.confidence_logit(0, 0) == 0.0);
  }
  SECTION("confidence shape mismatches are rejected") {
    const Grid bad(3, 3, 1, 0.0);
    CHECK_THROWS_AS(make_observations(raster, &bad), DimensionError);
    const Grid multi(2, 3, 2, 0.0);
    CHECK_THROWS_AS(make_observations(raster, &multi), DimensionError);
  }
}

TEST_CASE("scene specs round trip through json") {
  SceneSpec spec;
  spec.height = 48;
  spec.width = 32;
  spec.depth_min_mm = 1500.0;
  spec.slope_x_mm = -25.0;
  spec.random_boxes = 2;
  spec.density = 0.08;
  spec.outlier_rate = 0.1;
  spec.boxes.push_back({4, 6, 10, 12, 7000.0});
  spec.boxes.push_back({-1, 0, 3, 3, 2500.0});

  const SceneSpec back = scene_spec_from_json(scene_spec_to_json(spec));
  CHECK(back.height == 48);
  CHECK(back.width == 32);
  CHECK(back.depth_min_mm == 1500.0);
  CHECK(back.slope_x_mm == -25.0);
  CHECK(back.random_boxes == 2);
  CHECK(back.density == 0.08);
  CHECK(back.outlier_rate == 0.1);
  REQUIRE(back.boxes.size() == 2);
  CHECK(back.boxes[0].y == 4);
  CHECK(back.boxes[0].depth_mm == 7000.0);
  CHECK(back.boxes[1].y == -1);

  SECTION("missing fields fall back to defaults") {
    const SceneSpec defaults = scene_spec_from_json("{}");
    CHECK(defaults.height == 64);
    CHECK(defaults.base_depth_mm == 12000.0);
    CHECK(defaults.boxes.empty());
  }
  SECTION("malformed documents are format errors") {
    CHECK_THROWS_AS(scene_spec_from_json("not json"), FormatError);
    CHECK_THROWS_AS(scene_spec_from_json(R"({"height": "tall"})"),
                    FormatError);
  }
}

TEST_CASE("csv writers emit the documented headers") {
  TempDir dir;

  std::vector<EpochMetrics> history(2);
  history[0].epoch = 0;
  history[0].loss = 1.5;
  history[1].epoch = 1;
  history[1].loss = 0.75;
  const fs::path metrics_file = dir / "metrics.csv";
  write_metrics_csv(metrics_file, history);
  const std::string metrics_text = slurp(metrics_file);
  CHECK(metrics_text.rfind(
            "epoch,loss,rmse_mm,mae_mm,irmse_ikm,imae_ikm,e_cost,e_mem\n",
            0) == 0);
  CHECK(metrics_text.find("\n0,1.5,") != std::string::npos);
  CHECK(metrics_text.find("\n1,0.75,") != std::string::npos);

  std::vector<BenchRow> rows(1);
  rows[0].variant = "cspn";
  rows[0].mult_adds = 42;
  const fs::path bench_file = dir / "bench.csv";
  write_bench_csv(bench_file, rows);
  const std::string bench_text = slurp(bench_file);
  CHECK(bench_text.rfind("variant,rmse_mm,mae_mm,mean_kernel,mean_iters,"
                         "mult_adds,peak_elements,wall_ms\n",
                         0) == 0);
  CHECK(bench_text.find("\ncspn,") != std::string::npos);

  CostReport report;
  report.expected_latency = 0.5;
  report.actual_mult_adds = 7;
  const fs::path cost_file = dir / "cost.csv";
  write_cost_report_csv(cost_file, report);
  const std::string cost_text = slurp(cost_file);
  CHECK(cost_text.rfind(cost_report_csv_header() + "\n", 0) == 0);
  CHECK(cost_text.find("0.5,,,,7,0,0") != std::string::npos);
}
