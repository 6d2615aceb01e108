#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pact/io.hpp"
#include "pact/pipeline.hpp"

using namespace pact;

namespace {

enum Exit { ok = 0, config_error = 1, runtime_failure = 2, partial = 3 };

struct Options {
  std::string config_path;
  std::string preset;
  std::vector<std::string> sets;
  std::string output;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  bool quiet = false;

  std::vector<std::string> methods;
  std::vector<std::size_t> ks;

  std::vector<std::string> files;
  std::string truth;

  std::string raw;
  std::string layout = "element";
  std::string out_file;
};

ExperimentConfig resolve(const Options& o) {
  std::vector<std::string> overrides;
  if (!o.preset.empty()) overrides.push_back("preset=\"" + o.preset + "\"");
  overrides.insert(overrides.end(), o.sets.begin(), o.sets.end());
  if (!o.output.empty()) overrides.push_back("output_dir=\"" + o.output + "\"");
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = load_config(o.config_path, overrides);
  } else {
    c = config_from_overrides(overrides);
  }
  c.validate();
  return c;
}

std::vector<Method> chosen_methods(const Options& o, const ExperimentConfig& c) {
  if (o.methods.empty()) return c.methods;
  std::vector<Method> m;
  for (const auto& name : o.methods) {
    try {
      m.push_back(parse_method(name));
    } catch (const std::invalid_argument&) {
      throw ConfigError("--method", "unknown method '" + name + "' (expected ubp, mb or nr)");
    }
  }
  return m;
}

std::vector<std::size_t> chosen_ks(const Options& o, const ExperimentConfig& c) {
  if (o.ks.empty()) return c.projections;
  for (std::size_t k : o.ks) {
    if (k == 0 || c.geometry.num_elements() % k != 0) {
      throw ConfigError("--k", std::to_string(k) + " must divide the element count " +
                                   std::to_string(c.geometry.num_elements()));
    }
  }
  return o.ks;
}

LogFn logger() {
  return [](const std::string& msg) { spdlog::info("{}", msg); };
}

int reconstruct_all(const Options& o, const ExperimentConfig& c) {
  for (std::size_t k : chosen_ks(o, c)) {
    for (Method m : chosen_methods(o, c)) run_reconstruct(c, m, k, logger());
  }
  return ok;
}

int compare(const ExperimentConfig& c) {
  const CompareResult r = run_compare(c, logger());
  std::cout << metrics_csv(r.rows);
  if (!r.missing.empty()) {
    std::string list;
    for (const auto& m : r.missing) list += (list.empty() ? "" : ", ") + m;
    spdlog::warn("missing reconstructions: {}", list);
    return partial;
  }
  return ok;
}

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{:.6g}", *v) : "-"; }

int metrics(const Options& o, const ExperimentConfig& c) {
  std::optional<HeatImage> truth;
  if (!o.truth.empty()) {
    truth = read_image(o.truth);
  } else {
    truth = load_ground_truth(c);
  }
  if (!truth && !c.regions) throw ConfigError("--truth", "no ground truth and no regions configured");
  std::cout << "file,ssim,psnr_db,snr_db,cnr_db\n";
  for (const auto& f : o.files) {
    Reconstruction rec;
    rec.image = read_image(f);
    const MetricRow row = evaluate(c, rec, truth ? &*truth : nullptr);
    std::cout << f << ',' << opt(row.ssim) << ',' << opt(row.psnr_db) << ',' << opt(row.snr_db) << ','
              << opt(row.cnr_db) << '\n';
  }
  return ok;
}

bool has_magic(const std::string& path, const char* magic) {
  std::ifstream is(path, std::ios::binary);
  char buf[4] = {};
  is.read(buf, 4);
  return is && std::equal(buf, buf + 4, magic);
}

int inspect(const Options& o) {
  for (const auto& f : o.files) {
    if (has_magic(f, "PARF")) {
      const Sinogram s = read_sinogram(f);
      std::cout << f << ": sinogram\n"
                << fmt::format("  elements      {}\n  samples       {}\n  radius        {} mm\n", s.num_elements(),
                               s.num_samples(), s.geometry().radius_m() * 1e3)
                << fmt::format("  sound speed   {} m/s\n  grueneisen    {}\n  sample rate   {} MHz\n",
                               s.medium().sos_mps, s.medium().grueneisen, s.acquisition().sample_rate_hz * 1e-6)
                << fmt::format("  start time    {} us\n  max |p|       {:.6g}\n", s.acquisition().t_start_s * 1e6,
                               s.max_abs());
    } else if (has_magic(f, "PAIM")) {
      const HeatImage img = read_image(f);
      const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
      const ImageGrid& g = img.grid();
      std::cout << f << ": image\n"
                << fmt::format("  size          {} x {}\n  pixel         {} mm\n  centre        ({}, {}) mm\n", g.nx(),
                               g.ny(), g.pixel_size_m() * 1e3, g.center().x * 1e3, g.center().y * 1e3)
                << fmt::format("  range         [{:.6g}, {:.6g}]\n", *lo, *hi);
    } else {
      std::cout << "# " << f << " (resolved)\n" << to_toml(load_config(f)) << '\n';
    }
  }
  return ok;
}

int import(const Options& o, const ExperimentConfig& c) {
  RawLayout layout = RawLayout::element_major;
  if (o.layout == "sample") {
    layout = RawLayout::sample_major;
  } else if (o.layout != "element") {
    throw ConfigError("--layout", "expected element or sample");
  }
  const Sinogram s = import_raw(o.raw, c.geometry, c.medium, c.acquisition, layout);
  const std::filesystem::path out = o.out_file.empty() ? OutputLayout{c.output_dir}.sinogram() : std::filesystem::path(o.out_file);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_sinogram(out, s);
  spdlog::info("imported {} elements x {} samples -> {}", s.num_elements(), s.num_samples(), out.string());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view photoacoustic reconstruction: UBP, model-based and neural-field methods."};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_path, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_option("-p,--preset", o.preset, "Start from a preset: simulation, desk or phantom");
  app.add_option("-s,--set", o.sets, "Override a config key, e.g. --set mb.lambda=0.05 (repeatable)");
  app.add_option("-o,--output", o.output, "Output directory (output_dir)");
  app.add_option("--seed", o.seed, "Random seed (seed)");
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");
  app.add_flag("-q,--quiet", o.quiet, "Warnings and errors only");

  auto* sim = app.add_subcommand("simulate", "Simulate the phantom's sinogram and ground truth");
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct from the sinogram");
  rec->add_option("-m,--method", o.methods, "ubp, mb or nr (repeatable; default: config methods)");
  rec->add_option("-k,--projections", o.ks, "Projection count (repeatable; default: config projections)");
  auto* cmp = app.add_subcommand("compare", "Score all reconstructions, write metrics.csv and image strips");
  auto* run = app.add_subcommand("run", "simulate (unless an input sinogram is set), reconstruct, compare");
  run->add_option("-m,--method", o.methods, "ubp, mb or nr (repeatable)");
  run->add_option("-k,--projections", o.ks, "Projection count (repeatable)");
  auto* met = app.add_subcommand("metrics", "Score image files against a ground truth or the configured regions");
  met->add_option("images", o.files, "PAIM images")->required()->check(CLI::ExistingFile);
  met->add_option("-t,--truth", o.truth, "Ground-truth PAIM image")->check(CLI::ExistingFile);
  auto* ins = app.add_subcommand("inspect", "Print the header of a sinogram or image, or a resolved config");
  ins->add_option("files", o.files, "PARF, PAIM or TOML files")->required()->check(CLI::ExistingFile);
  auto* imp = app.add_subcommand("import", "Convert raw f32 amplitudes to a sinogram using the config geometry");
  imp->add_option("raw", o.raw, "Raw little-endian f32 file")->required()->check(CLI::ExistingFile);
  imp->add_option("--layout", o.layout, "element (element-major, default) or sample (sample-major)");
  imp->add_option("--out", o.out_file, "Output PARF path (default: <output_dir>/sinogram.parf)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  auto console = spdlog::stderr_color_mt("pactrecon");
  console->set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::set_default_logger(console);
  spdlog::set_level(o.quiet ? spdlog::level::warn : o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*ins) return inspect(o);
    const ExperimentConfig c = resolve(o);
    spdlog::debug("resolved configuration:\n{}", to_toml(c));
    if (*sim) {
      run_simulate(c, logger());
      return ok;
    }
    if (*rec) return reconstruct_all(o, c);
    if (*cmp) return compare(c);
    if (*met) return metrics(o, c);
    if (*imp) return import(o, c);
    if (*run) {
      if (!c.sinogram_path) run_simulate(c, logger());
      reconstruct_all(o, c);
      return compare(c);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return config_error;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return runtime_failure;
  }
  return ok;
}
