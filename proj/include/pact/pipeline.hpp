#pragma once

// Experiment orchestration: simulate -> reconstruct (ubp | mb | nr) ->
// evaluate -> compare, in memory and through an output directory.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pact/config.hpp"

namespace pact {

using LogFn = std::function<void(const std::string&)>;

struct SimulationResult {
  Sinogram sinogram;
  HeatImage ground_truth;
};

/// Rasterizes the phantom `oversample` times finer than the grid, applies the
/// forward model (plus noise if configured) and rasterizes the ground truth
/// on the reconstruction grid.
SimulationResult simulate(const ExperimentConfig& config);

struct Reconstruction {
  Method method = Method::ubp;
  std::size_t k = 0;
  HeatImage image;
  double runtime_s = 0.0;
  /// Per-iteration (MB) or per-epoch (NR) trace; empty for UBP.
  std::vector<std::string> history_columns;
  std::vector<std::vector<double>> history;
};

/// Keeps k projections of `full` and runs one method on the config's grid.
Reconstruction reconstruct(const ExperimentConfig& config, const Sinogram& full, Method method, std::size_t k,
                           const LogFn& log = {});

struct MetricRow {
  std::string method;
  std::size_t k = 0;
  std::optional<double> ssim;
  std::optional<double> psnr_db;
  std::optional<double> snr_db;
  std::optional<double> cnr_db;
  double runtime_s = 0.0;
};

/// SSIM/PSNR against `truth` when given, SNR/CNR when regions are configured.
MetricRow evaluate(const ExperimentConfig& config, const Reconstruction& rec, const HeatImage* truth);

/// Header "method,k,ssim,psnr_db,snr_db,cnr_db,runtime_s"; missing values are
/// empty, numbers use the shortest round-trip form.
std::string metrics_csv(const std::vector<MetricRow>& rows);

/// File names inside an output directory.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path sinogram() const { return root / "sinogram.parf"; }
  std::filesystem::path ground_truth() const { return root / "ground_truth.paim"; }
  std::filesystem::path resolved_config() const { return root / "config.resolved.toml"; }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path image(Method m, std::size_t k) const;
  std::filesystem::path history(Method m, std::size_t k) const;
  std::filesystem::path summary(Method m, std::size_t k) const;
  std::filesystem::path png(Method m, std::size_t k) const;
  std::filesystem::path strip(std::size_t k) const;
};

/// Writes the sinogram, ground truth (binary and PNG) and resolved config.
void run_simulate(const ExperimentConfig& config, const LogFn& log = {});

/// Input sinogram: config.sinogram_path, or the simulated one in the output
/// directory.
Sinogram load_input_sinogram(const ExperimentConfig& config);
/// Ground truth: config.ground_truth_path, or the simulated one if present.
std::optional<HeatImage> load_ground_truth(const ExperimentConfig& config);

/// Reconstructs and writes image, PNG, history CSV and a JSON summary.  The
/// summary is written last, so its presence marks a complete result.
Reconstruction run_reconstruct(const ExperimentConfig& config, Method method, std::size_t k, const LogFn& log = {});

struct CompareResult {
  std::vector<MetricRow> rows;
  /// "method k" pairs without a complete reconstruction.
  std::vector<std::string> missing;
};

/// Scores every (method, k) reconstruction present in the output directory,
/// writes metrics.csv and one image strip per k (ground truth first when
/// known, then methods in config order).
CompareResult run_compare(const ExperimentConfig& config, const LogFn& log = {});

}  // namespace pact
