#pragma once

// Experiment configuration: a TOML file (optionally starting from a named
// preset) plus "key=value" overrides using the same dotted keys.  Lengths are
// in millimetres, rates in MHz and times in microseconds.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pact/core.hpp"
#include "pact/inr.hpp"
#include "pact/mb.hpp"
#include "pact/metrics.hpp"
#include "pact/phantom.hpp"
#include "pact/ubp.hpp"

namespace pact {

/// Invalid configuration.  The message starts with the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class Method { ubp, mb, nr };

std::string_view method_name(Method m);
/// Throws std::invalid_argument for unknown names.
Method parse_method(std::string_view name);

struct NrSettings {
  TrainConfig train;
  HashEncodingConfig encoding;
  std::size_t hidden_width = 128;
  /// Untrained field value.  Sparse targets (a point source) need a start
  /// near zero; from 0.5 the first updates can saturate the sigmoid.
  double initial_output = 0.5;
  /// Epoch budget per projection count; counts not listed use train.max_epochs.
  std::map<std::size_t, std::size_t> epochs_by_k;

  std::size_t epochs_for(std::size_t k) const;
};

struct ExperimentConfig {
  std::string preset;
  RingGeometry geometry{0.04, 256};
  Medium medium;
  Acquisition acquisition{20e6, 1024, 0.0};
  ImageGrid grid{512, 512, 0.05e-3};

  /// Simulation input.  The phantom is rasterized `oversample` times finer
  /// than `grid` before the forward model is applied.
  std::optional<PhantomSpec> phantom;
  std::size_t oversample = 1;
  std::optional<double> noise_snr_db;

  /// Measured input: a sinogram file and optionally a ground-truth image.
  std::optional<std::filesystem::path> sinogram_path;
  std::optional<std::filesystem::path> ground_truth_path;

  std::vector<std::size_t> projections{32, 64, 128, 256};
  std::vector<Method> methods{Method::ubp, Method::mb, Method::nr};
  UbpConfig ubp;
  MbConfig mb;
  NrSettings nr;
  std::optional<RegionSpec> regions;

  std::filesystem::path output_dir = "pact_out";
  /// Seeds noise, MB power iteration and NR initialisation and shuffling.
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

std::vector<std::string> preset_names();
/// "simulation": the full-size in-silico setup (256 elements, 512 x 512 at
/// 0.05 mm, vessel phantom).  "desk": a 64 x 64 scale model with 64
/// elements.  "phantom": the 512-element measured-data setup with sphere
/// phantom, lambda 0.05 and eta 0.02.
ExperimentConfig preset_config(std::string_view name);

/// Parses TOML text.  A top-level `preset` key selects the base values;
/// otherwise the bare defaults apply (no phantom).  Each override is
/// "dotted.key=value" with a TOML value; bare words are taken as strings.
ExperimentConfig parse_config(std::string_view toml_text, std::span<const std::string> overrides = {},
                              std::string_view source = "config");
ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});
/// Configuration from overrides alone (which may name a preset).
ExperimentConfig config_from_overrides(std::span<const std::string> overrides);

/// Complete TOML rendering; parse_config(to_toml(c)) reproduces c.
std::string to_toml(const ExperimentConfig& config);

}  // namespace pact
