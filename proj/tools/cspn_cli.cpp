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

// Command-line surface: scene synthesis, propagation, fitting, gradient
// verification, and benchmarking.  Exit codes: 0 success, 1 usage error,
// 2 malformed file, 3 numeric failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cspn/cspn.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cspn;

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> values;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      values.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("malformed ") + what + " list: '" +
                        text + "'");
    }
  }
  if (values.empty()) {
    throw ConfigError(std::string("empty ") + what + " list");
  }
  return values;
}

void write_mask_pgm(const fs::path& path, const std::vector<std::uint8_t>& mask,
                    int height, int width) {
  std::string bytes = "P5\n# validity mask: 65535 = valid\n";
  bytes += std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  for (std::uint8_t m : mask) {
    const std::uint16_t v = m != 0 ? 65535 : 0;
    bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xFF));
  }
  write_file_bytes(path, bytes);
}

struct LoadedScene {
  SyntheticScene scene;
};

LoadedScene load_scene_dir(const fs::path& dir, double init_conf_logit) {
  const DepthRaster gt = read_depth_raster(dir / kGroundTruthFile);
  for (std::uint8_t m : gt.mask) {
    if (m == 0) {
      throw ContractError("ground truth raster must be dense (no zeros)");
    }
  }
  const DepthRaster sparse = read_depth_raster(dir / kSparseFile);
  if (sparse.depth_mm.height() != gt.depth_mm.height() ||
      sparse.depth_mm.width() != gt.depth_mm.width()) {
    throw DimensionError("sparse raster shape does not match ground truth");
  }
  LoadedScene loaded;
  loaded.scene.ground_truth = gt.depth_mm;
  loaded.scene.image_proxy =
      Grid(gt.depth_mm.height(), gt.depth_mm.width(), 1, 0.0);
  loaded.scene.sparse = make_observations(sparse);
  for (int y = 0; y < loaded.scene.sparse.height(); ++y) {
    for (int x = 0; x < loaded.scene.sparse.width(); ++x) {
      if (loaded.scene.sparse.valid(y, x)) {
        loaded.scene.sparse.confidence_logit(y, x) = init_conf_logit;
      }
    }
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// make-scene
// ---------------------------------------------------------------------------

struct MakeSceneArgs {
  std::string spec_path;
  std::uint64_t seed = 1;
  std::string out_dir;
};

void run_make_scene(const MakeSceneArgs& args) {
  SceneSpec spec;
  if (!args.spec_path.empty()) {
    spec = scene_spec_from_json(read_file_bytes(args.spec_path));
  }
  spec.validate();
  const SyntheticScene scene = make_scene(spec, args.seed);
  const SparseObservations sparse =
      sample_sparse(scene, spec.density, spec.outlier_rate,
                    spec.outlier_scale, args.seed + 1);

  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  write_depth_raster(dir / kGroundTruthFile, scene.ground_truth);
  Grid sparse_grid(sparse.height(), sparse.width(), 1, 0.0);
  for (int y = 0; y < sparse.height(); ++y) {
    for (int x = 0; x < sparse.width(); ++x) {
      if (sparse.valid(y, x)) sparse_grid.at(y, x) = sparse.value(y, x);
    }
  }
  write_depth_raster(dir / kSparseFile, sparse_grid, sparse.mask_values());
  write_mask_pgm(dir / kMaskFile, sparse.mask_values(), sparse.height(),
                 sparse.width());
  write_file_bytes(dir / kSceneSpecFile, scene_spec_to_json(spec));
  std::cout << "scene " << spec.height << "x" << spec.width << " seed "
            << args.seed << ": " << sparse.valid_count()
            << " sparse points -> " << args.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// propagate
// ---------------------------------------------------------------------------

struct PropagateArgs {
  std::string mode;
  std::string h0_path;
  std::string affinity_path;
  std::string sparse_path;
  std::string conf_path;
  std::string weights_path;
  std::string kernels = "3,5,7";
  std::string iters = "3,6,9,12";
  std::optional<double> latency_budget;
  std::string out_path;
};

void run_propagate(const PropagateArgs& args) {
  PropagationConfig config;
  config.kernel_sizes = parse_int_list(args.kernels, "kernel");
  config.iteration_checkpoints = parse_int_list(args.iters, "iteration");
  config.channels = 1;
  config.validate();

  const Grid h0 = read_depth_raster(args.h0_path).depth_mm;
  const AffinityField affinity =
      grid_to_affinity(read_float_raster(args.affinity_path));
  if (affinity.height() != h0.height() || affinity.width() != h0.width()) {
    throw DimensionError("affinity raster shape does not match h0");
  }

  SparseObservations obs;
  const SparseObservations* obs_ptr = nullptr;
  if (!args.sparse_path.empty()) {
    const DepthRaster sparse = read_depth_raster(args.sparse_path);
    if (args.conf_path.empty()) {
      obs = make_observations(sparse);
    } else {
      const Grid conf = read_float_raster(args.conf_path);
      obs = make_observations(sparse, &conf);
    }
    if (obs.height() != h0.height() || obs.width() != h0.width()) {
      throw DimensionError("sparse raster shape does not match h0");
    }
    obs_ptr = &obs;
  }

  AssemblyWeights weights(h0.height(), h0.width(), config.num_kernels(),
                          config.num_checkpoints());
  if (!args.weights_path.empty()) {
    weights = grid_to_weights(read_float_raster(args.weights_path),
                              config.num_kernels(), config.num_checkpoints());
    if (weights.height() != h0.height() || weights.width() != h0.width()) {
      throw DimensionError("weights raster shape does not match h0");
    }
  }

  ExecutionTrace trace;
  Grid out;
  CostReport report;
  const auto t0 = std::chrono::steady_clock::now();
  if (args.mode == "cspn") {
    out = run_cspn(h0, affinity, obs_ptr, config.max_kernel(),
                   config.max_iterations(), &trace);
    trace.wall_time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    report = count_ops(trace);
  } else if (args.mode == "ca") {
    out = run_ca_cspn(h0, affinity, obs_ptr, weights, config, &trace);
    trace.wall_time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    report = count_ops(trace, weights, config);
  } else {  // ra
    SelectionMap selection = select_configuration(weights, config);
    if (args.latency_budget) {
      selection = budget_round(selection, config, *args.latency_budget);
    }
    out = run_ra_cspn_scheduled(h0, affinity, obs_ptr, selection, config,
                                &trace);
    trace.wall_time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    report = count_ops(trace, selection, config);
  }

  write_depth_raster(args.out_path, out);
  fs::path csv_path(args.out_path);
  csv_path.replace_extension();
  csv_path += ".cost.csv";
  write_cost_report_csv(csv_path, report);
  std::cout << args.mode << ": " << report.actual_mult_adds
            << " mult-adds -> " << args.out_path << "\n";
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string scene_dir;
  int epochs = 500;
  double step = 400.0;
  double eta1 = 0.0005;
  double eta2 = 0.1;
  std::optional<double> latency_budget;
  std::optional<double> memory_budget;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string kernels = "3,5,7";
  std::string iters = "3,6,9,12";
  std::optional<double> freeze_conf;
  double init_conf = 4.0;
};

void run_fit(const FitArgs& args) {
  PropagationConfig config;
  config.kernel_sizes = parse_int_list(args.kernels, "kernel");
  config.iteration_checkpoints = parse_int_list(args.iters, "iteration");
  config.channels = 1;
  config.validate();

  ObjectiveConfig objective;
  objective.eta1 = args.eta1;
  objective.eta2 = args.eta2;
  objective.latency_budget = args.latency_budget;
  objective.memory_budget = args.memory_budget;
  objective.validate();

  FitOptions options;
  options.epochs = args.epochs;
  options.step_size = args.step;
  options.seed = args.seed;
  options.frozen_confidence_logit = args.freeze_conf;

  const LoadedScene loaded = load_scene_dir(args.scene_dir, args.init_conf);
  const FitResult result = fit(loaded.scene, config, objective, options);

  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  write_float_raster(dir / kH0File, result.params.h0);
  write_float_raster(dir / kAffinityFile,
                     affinity_to_grid(result.params.affinity));
  write_float_raster(dir / kWeightsFile,
                     weights_to_grid(result.params.weights));
  Grid conf(result.params.obs.height(), result.params.obs.width(), 1, 0.0);
  for (int y = 0; y < conf.height(); ++y) {
    for (int x = 0; x < conf.width(); ++x) {
      conf.at(y, x) = result.params.obs.confidence_logit(y, x);
    }
  }
  write_float_raster(dir / kConfidenceFile, conf);
  write_metrics_csv(dir / kMetricsFile, result.history);

  if (!result.diverged) {
    const Grid pred = run_ca_cspn(result.params.h0, result.params.affinity,
                                  &result.params.obs, result.params.weights,
                                  config);
    write_depth_raster(dir / "prediction.pgm", pred);
  }

  nlohmann::json meta;
  meta["seed"] = args.seed;
  meta["epochs"] = args.epochs;
  meta["step_size"] = args.step;
  meta["eta1"] = args.eta1;
  meta["eta2"] = args.eta2;
  if (args.latency_budget) meta["latency_budget"] = *args.latency_budget;
  if (args.memory_budget) meta["memory_budget"] = *args.memory_budget;
  meta["kernels"] = config.kernel_sizes;
  meta["iters"] = config.iteration_checkpoints;
  if (args.freeze_conf) meta["frozen_confidence_logit"] = *args.freeze_conf;
  meta["depth_units"] = "mm";
  meta["diverged"] = result.diverged;
  if (result.diverged) meta["divergence_epoch"] = result.divergence_epoch;
  meta["final_rmse_mm"] = result.history.back().rmse_mm;
  meta["final_e_cost"] = result.history.back().e_cost;
  meta["wall_time_ms"] = result.wall_time_ms;
  write_file_bytes(dir / kMetaFile, meta.dump(2) + "\n");

  if (result.diverged) {
    throw NumericError("fit diverged at epoch " +
                       std::to_string(result.divergence_epoch));
  }
  const EpochMetrics& last = result.history.back();
  std::cout << "fit " << args.epochs << " epochs: rmse "
            << last.rmse_mm << " mm, mae " << last.mae_mm << " mm, E(c) "
            << last.e_cost << " -> " << args.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 1;
  int size = 6;
  double eps = 1e-5;
  int samples = 200;
};

void run_gradcheck(const GradcheckArgs& args) {
  const GradcheckInstance instance =
      make_gradcheck_instance(args.seed, args.size);
  const double err = finite_difference_check(
      instance.params, instance.target, {}, instance.objective, args.eps,
      args.samples, args.seed ^ 0x9E3779B97F4A7C15ULL);
  std::cout << "max relative error: " << err << "\n";
  if (!(err < 1e-5)) {
    throw NumericError("gradient check failed: max relative error " +
                       std::to_string(err) + " >= 1e-5");
  }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string scene_dir;
  std::string params_dir;
  std::string out_csv;
  double latency_budget = 0.15;
  std::string kernels = "3,5,7";
  std::string iters = "3,6,9,12";
  double init_conf = 4.0;
};

void run_bench(const BenchArgs& args) {
  PropagationConfig config;
  config.kernel_sizes = parse_int_list(args.kernels, "kernel");
  config.iteration_checkpoints = parse_int_list(args.iters, "iteration");
  config.channels = 1;

  const fs::path params_dir(args.params_dir);
  const fs::path meta_path = params_dir / kMetaFile;
  if (fs::exists(meta_path)) {
    try {
      const nlohmann::json meta =
          nlohmann::json::parse(read_file_bytes(meta_path));
      if (meta.contains("kernels")) {
        config.kernel_sizes = meta["kernels"].get<std::vector<int>>();
      }
      if (meta.contains("iters")) {
        config.iteration_checkpoints =
            meta["iters"].get<std::vector<int>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("params meta.json: ") + e.what());
    }
  }
  config.validate();

  const LoadedScene loaded = load_scene_dir(args.scene_dir, args.init_conf);

  ModelParams params;
  params.config = config;
  params.h0 = read_float_raster(params_dir / kH0File);
  params.affinity =
      grid_to_affinity(read_float_raster(params_dir / kAffinityFile));
  params.weights =
      grid_to_weights(read_float_raster(params_dir / kWeightsFile),
                      config.num_kernels(), config.num_checkpoints());
  const Grid conf = read_float_raster(params_dir / kConfidenceFile);
  params.obs = loaded.scene.sparse;
  for (int y = 0; y < params.obs.height(); ++y) {
    for (int x = 0; x < params.obs.width(); ++x) {
      if (params.obs.valid(y, x)) {
        params.obs.confidence_logit(y, x) = conf.at(y, x);
      }
    }
  }
  params.use_obs = true;

  const std::vector<BenchRow> rows =
      bench(loaded.scene, params, args.latency_budget);
  write_bench_csv(args.out_csv, rows);
  for (const BenchRow& row : rows) {
    std::cout << row.variant << ": rmse " << row.rmse_mm << " mm, E(k) "
              << row.mean_kernel << ", E(t) " << row.mean_iters << ", "
              << row.mult_adds << " mult-adds, " << row.wall_ms << " ms\n";
  }
  std::cout << "wrote " << args.out_csv << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive spatial-propagation depth completion toolkit"};
  app.require_subcommand(1);

  MakeSceneArgs scene_args;
  CLI::App* make_scene_cmd =
      app.add_subcommand("make-scene", "Generate a synthetic scene");
  make_scene_cmd->add_option("--spec", scene_args.spec_path,
                             "Scene spec JSON file")
      ->check(CLI::ExistingFile);
  make_scene_cmd->add_option("--seed", scene_args.seed, "RNG seed");
  make_scene_cmd->add_option("--out", scene_args.out_dir, "Output directory")
      ->required();
  make_scene_cmd->callback([&] { run_make_scene(scene_args); });

  PropagateArgs prop_args;
  CLI::App* propagate_cmd =
      app.add_subcommand("propagate", "Run one propagation variant");
  propagate_cmd
      ->add_option("--mode", prop_args.mode, "Variant: cspn, ca, or ra")
      ->required()
      ->check(CLI::IsMember({"cspn", "ca", "ra"}));
  propagate_cmd->add_option("--h0", prop_args.h0_path, "Initial depth raster")
      ->required()
      ->check(CLI::ExistingFile);
  propagate_cmd
      ->add_option("--affinity", prop_args.affinity_path,
                   "Affinity logits raster (CSPF)")
      ->required()
      ->check(CLI::ExistingFile);
  propagate_cmd
      ->add_option("--sparse", prop_args.sparse_path, "Sparse depth raster")
      ->check(CLI::ExistingFile);
  propagate_cmd
      ->add_option("--conf", prop_args.conf_path,
                   "Confidence logits raster (CSPF)")
      ->check(CLI::ExistingFile);
  propagate_cmd
      ->add_option("--weights", prop_args.weights_path,
                   "Assembly weights raster (CSPF)")
      ->check(CLI::ExistingFile);
  propagate_cmd->add_option("--kernels", prop_args.kernels,
                            "Comma-separated kernel sizes");
  propagate_cmd->add_option("--iters", prop_args.iters,
                            "Comma-separated iteration checkpoints");
  propagate_cmd->add_option("--budget-latency", prop_args.latency_budget,
                            "Latency budget in (0, 1]");
  propagate_cmd->add_option("--out", prop_args.out_path, "Output raster path")
      ->required();
  propagate_cmd->callback([&] { run_propagate(prop_args); });

  FitArgs fit_args;
  CLI::App* fit_cmd =
      app.add_subcommand("fit", "Fit per-pixel parameters to a scene");
  fit_cmd->add_option("--scene", fit_args.scene_dir, "Scene directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  fit_cmd->add_option("--epochs", fit_args.epochs, "Gradient-descent epochs");
  fit_cmd->add_option("--step", fit_args.step, "Step size");
  fit_cmd->add_option("--eta1", fit_args.eta1, "Weight decay");
  fit_cmd->add_option("--eta2", fit_args.eta2, "Expected-cost weight");
  fit_cmd->add_option("--budget-latency", fit_args.latency_budget,
                      "Latency budget in (0, 1]");
  fit_cmd->add_option("--budget-memory", fit_args.memory_budget,
                      "Memory budget in (0, 1]");
  fit_cmd->add_option("--seed", fit_args.seed, "RNG seed");
  fit_cmd->add_option("--out", fit_args.out_dir, "Output directory")
      ->required();
  fit_cmd->add_option("--kernels", fit_args.kernels,
                      "Comma-separated kernel sizes");
  fit_cmd->add_option("--iters", fit_args.iters,
                      "Comma-separated iteration checkpoints");
  fit_cmd->add_option("--freeze-conf", fit_args.freeze_conf,
                      "Pin confidence logits to this value");
  fit_cmd->add_option("--init-conf", fit_args.init_conf,
                      "Initial confidence logit for sparse points");
  fit_cmd->callback([&] { run_fit(fit_args); });

  GradcheckArgs grad_args;
  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Verify analytic gradients against finite differences");
  gradcheck_cmd->add_option("--seed", grad_args.seed, "RNG seed");
  gradcheck_cmd->add_option("--size", grad_args.size, "Instance side length");
  gradcheck_cmd->add_option("--eps", grad_args.eps, "Perturbation size");
  gradcheck_cmd->add_option("--samples", grad_args.samples,
                            "Coordinates per parameter family");
  gradcheck_cmd->callback([&] { run_gradcheck(grad_args); });

  BenchArgs bench_args;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "Compare variants on fitted parameters");
  bench_cmd->add_option("--scene", bench_args.scene_dir, "Scene directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench_cmd->add_option("--params", bench_args.params_dir,
                        "Fitted parameter directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench_cmd->add_option("--out", bench_args.out_csv, "Output CSV path")
      ->required();
  bench_cmd->add_option("--budget-latency", bench_args.latency_budget,
                        "Latency budget for the rounded row");
  bench_cmd->add_option("--kernels", bench_args.kernels,
                        "Comma-separated kernel sizes");
  bench_cmd->add_option("--iters", bench_args.iters,
                        "Comma-separated iteration checkpoints");
  bench_cmd->callback([&] { run_bench(bench_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
