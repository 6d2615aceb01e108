#include "pact/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pact/io.hpp"

namespace pact {

namespace {

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string shortest(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string stem(Method m, std::size_t k) { return std::string(method_name(m)) + "_k" + std::to_string(k); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SimulationResult simulate(const ExperimentConfig& config) {
  if (!config.phantom) throw ConfigError("phantom", "missing phantom spec");
  config.validate();
  const ImageGrid& g = config.grid;
  const std::size_t o = config.oversample;
  const ImageGrid fine(g.nx() * o, g.ny() * o, g.pixel_size_m() / static_cast<double>(o), g.center());
  const HeatImage source = rasterize(*config.phantom, fine);
  Sinogram sino = synthesize_sinogram(source, config.geometry, config.medium, config.acquisition,
                                      config.noise_snr_db, config.seed);
  return {std::move(sino), rasterize(*config.phantom, g)};
}

Reconstruction reconstruct(const ExperimentConfig& config, const Sinogram& full, Method method, std::size_t k,
                           const LogFn& log) {
  const Sinogram sino = subsample_projections(full, k);
  Reconstruction rec;
  rec.method = method;
  rec.k = k;
  const auto t0 = std::chrono::steady_clock::now();
  switch (method) {
    case Method::ubp:
      rec.image = ubp_reconstruct(sino, config.grid, sino.medium(), config.ubp);
      break;
    case Method::mb: {
      MbConfig cfg = config.mb;
      cfg.seed = config.seed;
      ForwardConfig fc;
      fc.representation = Representation::assembled_sparse;
      std::optional<ForwardOperator> op;
      try {
        op.emplace(sino.geometry(), sino.medium(), sino.acquisition(), config.grid, fc);
      } catch (const MemoryBudgetExceeded& e) {
        say(log, std::string("mb: ") + e.what() + "; using the matrix-free operator");
        op.emplace(sino.geometry(), sino.medium(), sino.acquisition(), config.grid);
      }
      MbResult r = mb_reconstruct(sino, *op, cfg);
      if (!r.converged_line_search) say(log, "mb: line search stalled before max_iters");
      rec.image = std::move(r.image);
      rec.history_columns = {"iter", "data_term", "tv_term", "objective", "step"};
      for (const auto& it : r.history) {
        rec.history.push_back({static_cast<double>(it.iter), it.data_term, it.tv_term, it.objective, it.step});
      }
      break;
    }
    case Method::nr: {
      TrainConfig cfg = config.nr.train;
      cfg.seed = config.seed;
      cfg.max_epochs = config.nr.epochs_for(k);
      auto field = make_field(config.grid, config.nr.encoding, config.nr.hidden_width, config.seed,
                              config.nr.initial_output);
      const TrainResult r = train(field, sino, config.grid, cfg, [&](const EpochStats& e) {
        std::ostringstream os;
        os << "nr k=" << k << " epoch " << e.epoch + 1 << "/" << cfg.max_epochs << " loss " << e.loss
           << " lr " << e.lr;
        say(log, os.str());
        return true;
      });
      rec.image = field.render(config.grid);
      rec.history_columns = {"epoch", "loss", "data_term", "tv_term", "lr"};
      for (const auto& e : r.history) {
        rec.history.push_back({static_cast<double>(e.epoch), e.loss, e.data_term, e.tv_term, e.lr});
      }
      if (r.reached_threshold) say(log, "nr: loss below threshold after " + std::to_string(r.history.size()) + " epochs");
      break;
    }
  }
  rec.runtime_s = seconds_since(t0);
  return rec;
}

MetricRow evaluate(const ExperimentConfig& config, const Reconstruction& rec, const HeatImage* truth) {
  MetricRow row;
  row.method = std::string(method_name(rec.method));
  row.k = rec.k;
  row.runtime_s = rec.runtime_s;
  if (truth) {
    const auto f = compare_to_ground_truth(rec.image, *truth);
    row.ssim = f.ssim;
    row.psnr_db = f.psnr_db;
  }
  if (config.regions) {
    row.snr_db = snr(rec.image, *config.regions).db;
    row.cnr_db = cnr(rec.image, *config.regions);
  }
  return row;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "method,k,ssim,psnr_db,snr_db,cnr_db,runtime_s\n";
  auto opt = [](const std::optional<double>& v) { return v ? shortest(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.method << ',' << r.k << ',' << opt(r.ssim) << ',' << opt(r.psnr_db) << ',' << opt(r.snr_db) << ','
       << opt(r.cnr_db) << ',' << shortest(r.runtime_s) << '\n';
  }
  return os.str();
}

std::filesystem::path OutputLayout::image(Method m, std::size_t k) const { return root / "recon" / (stem(m, k) + ".paim"); }
std::filesystem::path OutputLayout::history(Method m, std::size_t k) const {
  return root / "recon" / (stem(m, k) + ".history.csv");
}
std::filesystem::path OutputLayout::summary(Method m, std::size_t k) const {
  return root / "recon" / (stem(m, k) + ".json");
}
std::filesystem::path OutputLayout::png(Method m, std::size_t k) const { return root / "images" / (stem(m, k) + ".png"); }
std::filesystem::path OutputLayout::strip(std::size_t k) const {
  return root / "images" / ("compare_k" + std::to_string(k) + ".png");
}

void run_simulate(const ExperimentConfig& config, const LogFn& log) {
  if (!config.phantom) throw ConfigError("phantom", "missing phantom spec");
  const OutputLayout out{config.output_dir};
  std::filesystem::create_directories(out.root / "images");
  {
    std::ostringstream os;
    os << "ring " << config.geometry.radius_m() * 1e3 << " mm, " << config.geometry.num_elements() << " elements; "
       << config.acquisition.num_samples << " samples at " << config.acquisition.sample_rate_hz * 1e-6 << " MHz; c "
       << config.medium.sos_mps << " m/s; grid " << config.grid.nx() << "x" << config.grid.ny() << " at "
       << config.grid.pixel_size_m() * 1e3 << " mm (simulated " << config.oversample << "x finer)";
    say(log, os.str());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const SimulationResult sim = simulate(config);
  write_sinogram(out.sinogram(), sim.sinogram);
  write_image(out.ground_truth(), sim.ground_truth);
  write_png(out.root / "images" / "ground_truth.png", sim.ground_truth);
  write_text(out.resolved_config(), to_toml(config));
  say(log, "simulated in " + shortest(seconds_since(t0)) + " s -> " + out.sinogram().string());
}

Sinogram load_input_sinogram(const ExperimentConfig& config) {
  const OutputLayout out{config.output_dir};
  const auto path = config.sinogram_path.value_or(out.sinogram());
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("sinogram " + path.string() + " not found (run simulate first or set input.sinogram)");
  }
  return read_sinogram(path);
}

std::optional<HeatImage> load_ground_truth(const ExperimentConfig& config) {
  if (config.ground_truth_path) return read_image(*config.ground_truth_path);
  if (config.sinogram_path) return std::nullopt;
  const OutputLayout out{config.output_dir};
  if (std::filesystem::exists(out.ground_truth())) return read_image(out.ground_truth());
  return std::nullopt;
}

Reconstruction run_reconstruct(const ExperimentConfig& config, Method method, std::size_t k, const LogFn& log) {
  const OutputLayout out{config.output_dir};
  std::filesystem::create_directories(out.root / "recon");
  std::filesystem::create_directories(out.root / "images");
  std::filesystem::remove(out.summary(method, k));
  const Sinogram full = load_input_sinogram(config);
  say(log, std::string(method_name(method)) + " k=" + std::to_string(k) + ": reconstructing");
  const Reconstruction rec = reconstruct(config, full, method, k, log);
  write_image(out.image(method, k), rec.image);
  write_png(out.png(method, k), rec.image);
  if (!rec.history_columns.empty()) {
    std::ostringstream os;
    for (std::size_t c = 0; c < rec.history_columns.size(); ++c) os << (c ? "," : "") << rec.history_columns[c];
    os << '\n';
    for (const auto& row : rec.history) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << shortest(row[c]);
      os << '\n';
    }
    write_text(out.history(method, k), os.str());
  }
  nlohmann::json summary = {{"method", method_name(method)},
                            {"k", k},
                            {"runtime_s", rec.runtime_s},
                            {"history_rows", rec.history.size()}};
  write_text(out.summary(method, k), summary.dump(2) + "\n");
  say(log, std::string(method_name(method)) + " k=" + std::to_string(k) + ": done in " + shortest(rec.runtime_s) + " s");
  return rec;
}

CompareResult run_compare(const ExperimentConfig& config, const LogFn& log) {
  const OutputLayout out{config.output_dir};
  const auto truth = load_ground_truth(config);
  if (!truth && !config.regions) say(log, "compare: no ground truth and no regions; only runtimes are reported");
  CompareResult result;
  std::filesystem::create_directories(out.root / "images");
  for (std::size_t k : config.projections) {
    std::vector<HeatImage> strip;
    if (truth) strip.push_back(*truth);
    for (Method m : config.methods) {
      if (!std::filesystem::exists(out.summary(m, k)) || !std::filesystem::exists(out.image(m, k))) {
        result.missing.push_back(std::string(method_name(m)) + " " + std::to_string(k));
        say(log, "compare: missing " + stem(m, k) + ", skipped");
        continue;
      }
      std::ifstream is(out.summary(m, k));
      const auto summary = nlohmann::json::parse(is);
      Reconstruction rec;
      rec.method = m;
      rec.k = k;
      rec.image = read_image(out.image(m, k));
      rec.runtime_s = summary.at("runtime_s").get<double>();
      result.rows.push_back(evaluate(config, rec, truth ? &*truth : nullptr));
      strip.push_back(std::move(rec.image));
    }
    if (strip.size() > (truth ? 1u : 0u)) write_png_strip(out.strip(k), strip);
  }
  write_text(out.metrics(), metrics_csv(result.rows));
  say(log, "compare: " + std::to_string(result.rows.size()) + " rows -> " + out.metrics().string());
  return result;
}

}  // namespace pact
