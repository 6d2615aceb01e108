#include "pact/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

namespace pact {

ConfigError::ConfigError(const std::string& key, const std::string& message)
    : std::runtime_error(key + ": " + message), key_(key) {}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ubp: return "ubp";
    case Method::mb: return "mb";
    case Method::nr: return "nr";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "ubp") return Method::ubp;
  if (name == "mb") return Method::mb;
  if (name == "nr") return Method::nr;
  throw std::invalid_argument("unknown method '" + std::string(name) + "' (expected ubp, mb or nr)");
}

std::size_t NrSettings::epochs_for(std::size_t k) const {
  const auto it = epochs_by_k.find(k);
  return it == epochs_by_k.end() ? train.max_epochs : it->second;
}

namespace {

constexpr double kMm = 1e-3;
constexpr double kMHz = 1e6;
constexpr double kUs = 1e-6;

std::string join(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

// Typed access to one TOML table that remembers which keys were read, so
// misspelled keys are reported instead of silently ignored.
class Section {
 public:
  Section(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  bool has(std::string_view key) const { return table_ && table_->contains(key); }
  std::string key(std::string_view k) const { return join(prefix_, k); }

  const toml::node* node(std::string_view k) {
    if (!table_) return nullptr;
    const toml::node* n = table_->get(k);
    if (n) used_.insert(std::string(k));
    return n;
  }

  Section sub(std::string_view k) {
    const toml::node* n = node(k);
    if (n && !n->is_table()) throw ConfigError(key(k), "expected a table");
    return Section(n ? n->as_table() : nullptr, key(k));
  }

  void number(std::string_view k, double& out, double scale = 1.0) {
    if (const auto* n = node(k)) out = as_number(*n, key(k)) * scale;
  }
  void count(std::string_view k, std::size_t& out) {
    if (const auto* n = node(k)) out = as_count(*n, key(k));
  }
  void seed(std::string_view k, std::uint64_t& out) {
    if (const auto* n = node(k)) out = as_count(*n, key(k));
  }
  void flag(std::string_view k, bool& out) {
    if (const auto* n = node(k)) {
      const auto v = n->value<bool>();
      if (!v) throw ConfigError(key(k), "expected true or false");
      out = *v;
    }
  }
  std::optional<std::string> text(std::string_view k) {
    const auto* n = node(k);
    if (!n) return std::nullopt;
    const auto v = n->value<std::string>();
    if (!v) throw ConfigError(key(k), "expected a string");
    return *v;
  }
  void point_mm(std::string_view k, Point2& out) {
    if (const auto* n = node(k)) out = as_point_mm(*n, key(k));
  }

  /// Rejects keys that were never read.
  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_) {
      if (!used_.count(std::string(k.str()))) throw ConfigError(key(k.str()), "unknown key");
    }
  }

  static double as_number(const toml::node& n, const std::string& key) {
    if (const auto i = n.value_exact<std::int64_t>()) return static_cast<double>(*i);
    if (const auto d = n.value_exact<double>()) return *d;
    throw ConfigError(key, "expected a number");
  }
  static std::size_t as_count(const toml::node& n, const std::string& key) {
    const auto i = n.value_exact<std::int64_t>();
    if (!i || *i < 0) throw ConfigError(key, "expected a non-negative integer");
    return static_cast<std::size_t>(*i);
  }
  static Point2 as_point_mm(const toml::node& n, const std::string& key) {
    const auto* a = n.as_array();
    if (!a || a->size() != 2) throw ConfigError(key, "expected [x, y] in millimetres");
    return {as_number(*a->get(0), key) * kMm, as_number(*a->get(1), key) * kMm};
  }

 private:
  const toml::table* table_;
  std::string prefix_;
  std::set<std::string> used_;
};

const toml::array* array_at(Section& s, std::string_view k) {
  const auto* n = s.node(k);
  if (!n) return nullptr;
  if (!n->is_array()) throw ConfigError(s.key(k), "expected an array");
  return n->as_array();
}

std::vector<Section> table_array(Section& s, std::string_view k) {
  std::vector<Section> out;
  if (const auto* a = array_at(s, k)) {
    for (std::size_t i = 0; i < a->size(); ++i) {
      const std::string key = s.key(k) + "[" + std::to_string(i) + "]";
      if (!a->get(i)->is_table()) throw ConfigError(key, "expected a table");
      out.emplace_back(a->get(i)->as_table(), key);
    }
  }
  return out;
}

PixelRect parse_rect(const toml::node& n, const std::string& key) {
  const auto* a = n.as_array();
  if (!a || a->size() != 4) throw ConfigError(key, "expected [x0, y0, width, height] in pixels");
  std::size_t v[4];
  for (std::size_t i = 0; i < 4; ++i) v[i] = Section::as_count(*a->get(i), key);
  return {v[0], v[1], v[2], v[3]};
}

PhantomKind parse_kind(const std::string& s, const std::string& key) {
  if (s == "vessel_branches") return PhantomKind::vessel_branches;
  if (s == "spheres") return PhantomKind::spheres;
  if (s == "wire_polyline") return PhantomKind::wire_polyline;
  throw ConfigError(key, "unknown phantom kind '" + s + "' (expected vessel_branches, spheres or wire_polyline)");
}

std::string_view kind_name(PhantomKind k) {
  switch (k) {
    case PhantomKind::vessel_branches: return "vessel_branches";
    case PhantomKind::spheres: return "spheres";
    case PhantomKind::wire_polyline: return "wire_polyline";
  }
  return "?";
}

void read_phantom(Section s, PhantomSpec& p) {
  if (auto kind = s.text("kind")) p.kind = parse_kind(*kind, s.key("kind"));
  s.seed("seed", p.seed);
  Section v = s.sub("vessel");
  v.number("extent_mm", p.vessel.extent_m, kMm);
  v.count("depth", p.vessel.depth);
  v.number("trunk_width_mm", p.vessel.trunk_width_m, kMm);
  v.number("min_width_mm", p.vessel.min_width_m, kMm);
  v.number("min_amplitude", p.vessel.min_amplitude);
  v.number("max_amplitude", p.vessel.max_amplitude);
  v.finish();
  if (s.has("discs")) {
    p.discs.clear();
    for (auto& d : table_array(s, "discs")) {
      Disc disc;
      d.point_mm("center_mm", disc.center);
      d.number("radius_mm", disc.radius_m, kMm);
      d.number("amplitude", disc.amplitude);
      d.finish();
      p.discs.push_back(disc);
    }
  }
  if (s.has("segments")) {
    p.segments.clear();
    for (auto& d : table_array(s, "segments")) {
      TaperedSegment seg;
      d.point_mm("a_mm", seg.a);
      d.point_mm("b_mm", seg.b);
      d.number("width_a_mm", seg.width_a_m, kMm);
      d.number("width_b_mm", seg.width_b_m, kMm);
      d.number("amplitude", seg.amplitude);
      d.finish();
      p.segments.push_back(seg);
    }
  }
  if (s.has("wires")) {
    p.wires.clear();
    for (auto& d : table_array(s, "wires")) {
      Polyline w;
      if (const auto* pts = array_at(d, "points_mm")) {
        for (std::size_t i = 0; i < pts->size(); ++i) {
          w.points.push_back(Section::as_point_mm(*pts->get(i), d.key("points_mm")));
        }
      }
      d.number("width_mm", w.width_m, kMm);
      d.number("amplitude", w.amplitude);
      d.finish();
      p.wires.push_back(std::move(w));
    }
  }
  s.finish();
}

void read_nr(Section s, NrSettings& nr) {
  TrainConfig& t = nr.train;
  s.number("initial_lr", t.initial_lr);
  s.count("lr_decay_every", t.lr_decay_every);
  s.number("lr_decay_factor", t.lr_decay_factor);
  s.number("loss_stop_threshold", t.loss_stop_threshold);
  s.count("max_epochs", t.max_epochs);
  s.number("eta", t.eta);
  s.number("tv_epsilon", t.tv_epsilon);
  s.count("tv_grid_size", t.tv_grid_size);
  s.count("rays_per_batch", t.rays_per_batch);
  s.count("ray_block", t.ray_block);
  s.number("beta1", t.beta1);
  s.number("beta2", t.beta2);
  s.number("adam_epsilon", t.adam_epsilon);
  s.number("signal_scale", t.signal_scale);
  s.number("signal_gain", t.signal_gain);
  s.count("hidden_width", nr.hidden_width);
  s.number("initial_output", nr.initial_output);
  if (s.has("epochs_by_k")) {
    Section e = s.sub("epochs_by_k");
    nr.epochs_by_k.clear();
    const auto* table = s.node("epochs_by_k")->as_table();
    for (auto&& [k, v] : *table) {
      const std::string name(k.str());
      std::size_t proj = 0;
      const auto [end, ec] = std::from_chars(name.data(), name.data() + name.size(), proj);
      if (ec != std::errc() || end != name.data() + name.size() || proj == 0) {
        throw ConfigError(e.key(name), "keys must be projection counts");
      }
      std::size_t epochs = 0;
      e.count(name, epochs);
      nr.epochs_by_k[proj] = epochs;
    }
    e.finish();
  }
  Section enc = s.sub("encoding");
  enc.count("levels", nr.encoding.num_levels);
  enc.count("features_per_level", nr.encoding.features_per_level);
  enc.count("table_size_log2", nr.encoding.table_size_log2);
  enc.count("base_resolution", nr.encoding.base_resolution);
  enc.count("finest_resolution", nr.encoding.finest_resolution);
  enc.finish();
  s.finish();
}

void read_config(const toml::table& root, ExperimentConfig& c) {
  Section top(&root, "");
  top.text("preset");  // consumed by the caller
  if (auto dir = top.text("output_dir")) c.output_dir = *dir;
  top.seed("seed", c.seed);
  if (const auto* a = array_at(top, "projections")) {
    c.projections.clear();
    for (std::size_t i = 0; i < a->size(); ++i) c.projections.push_back(Section::as_count(*a->get(i), "projections"));
  }
  if (const auto* a = array_at(top, "methods")) {
    c.methods.clear();
    for (std::size_t i = 0; i < a->size(); ++i) {
      const auto name = a->get(i)->value<std::string>();
      if (!name) throw ConfigError("methods", "expected method names");
      c.methods.push_back(wrap("methods", [&] { return parse_method(*name); }));
    }
  }

  Section g = top.sub("geometry");
  double radius = c.geometry.radius_m();
  std::size_t elements = c.geometry.num_elements();
  g.number("radius_mm", radius, kMm);
  g.count("elements", elements);
  g.finish();
  c.geometry = wrap("geometry", [&] { return RingGeometry(radius, elements); });

  Section m = top.sub("medium");
  m.number("sos_mps", c.medium.sos_mps);
  m.number("grueneisen", c.medium.grueneisen);
  m.finish();

  Section a = top.sub("acquisition");
  a.number("sample_rate_mhz", c.acquisition.sample_rate_hz, kMHz);
  a.count("samples", c.acquisition.num_samples);
  a.number("t_start_us", c.acquisition.t_start_s, kUs);
  a.finish();

  Section gr = top.sub("grid");
  std::size_t nx = c.grid.nx();
  std::size_t ny = c.grid.ny();
  double px = c.grid.pixel_size_m();
  Point2 center = c.grid.center();
  gr.count("nx", nx);
  gr.count("ny", ny);
  gr.number("pixel_mm", px, kMm);
  gr.point_mm("center_mm", center);
  gr.finish();
  c.grid = wrap("grid", [&] { return ImageGrid(nx, ny, px, center); });

  if (top.has("phantom")) {
    if (!c.phantom) c.phantom = PhantomSpec{};
    read_phantom(top.sub("phantom"), *c.phantom);
  }
  Section sim = top.sub("simulation");
  sim.count("oversample", c.oversample);
  if (sim.has("noise_snr_db")) {
    double db = 0.0;
    sim.number("noise_snr_db", db);
    c.noise_snr_db = db;
  }
  sim.finish();

  Section in = top.sub("input");
  if (auto p = in.text("sinogram")) c.sinogram_path = *p;
  if (auto p = in.text("ground_truth")) c.ground_truth_path = *p;
  in.finish();

  Section u = top.sub("ubp");
  u.flag("clamp_negatives", c.ubp.clamp_negatives);
  u.number("solid_angle_sr", c.ubp.solid_angle);
  u.number("element_height_mm", c.ubp.element_height_m, kMm);
  u.count("workers", c.ubp.workers);
  u.finish();

  Section mb = top.sub("mb");
  mb.number("lambda", c.mb.lambda);
  mb.count("max_iters", c.mb.max_iters);
  mb.number("tv_epsilon", c.mb.tv_epsilon);
  if (auto rule = mb.text("step_rule")) {
    if (*rule == "fixed") {
      c.mb.step_rule = StepRule::fixed;
    } else if (*rule == "backtracking") {
      c.mb.step_rule = StepRule::backtracking;
    } else {
      throw ConfigError("mb.step_rule", "expected fixed or backtracking");
    }
  }
  mb.number("step", c.mb.step);
  mb.number("backtrack_factor", c.mb.backtrack_factor);
  mb.number("armijo", c.mb.armijo);
  mb.count("max_backtracks", c.mb.max_backtracks);
  mb.flag("fista", c.mb.fista);
  mb.count("power_iterations", c.mb.power_iterations);
  mb.finish();

  read_nr(top.sub("nr"), c.nr);

  if (top.has("regions")) {
    Section r = top.sub("regions");
    RegionSpec spec = c.regions.value_or(RegionSpec{});
    if (const auto* n = r.node("signal")) spec.signal = parse_rect(*n, r.key("signal"));
    if (const auto* n = r.node("background")) spec.background = parse_rect(*n, r.key("background"));
    r.finish();
    c.regions = spec;
  }
  top.finish();
}

void merge(toml::table& dst, const toml::table& src) {
  for (auto&& [k, v] : src) {
    if (v.is_table() && dst.contains(k) && dst.get(k)->is_table()) {
      merge(*dst.get(k)->as_table(), *v.as_table());
    } else {
      dst.insert_or_assign(k, v);
    }
  }
}

toml::table parse_override(const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(item, "overrides take the form key=value");
  const std::string key = item.substr(0, eq);
  const std::string value = item.substr(eq + 1);
  try {
    return toml::parse(key + " = " + value);
  } catch (const toml::parse_error&) {
  }
  std::string quoted;
  for (char ch : value) {
    if (ch == '"' || ch == '\\') quoted += '\\';
    quoted += ch;
  }
  try {
    return toml::parse(key + " = \"" + quoted + "\"");
  } catch (const toml::parse_error& e) {
    throw ConfigError(key, std::string("cannot parse override: ") + std::string(e.description()));
  }
}

ExperimentConfig from_table(const toml::table& root) {
  ExperimentConfig c;
  if (const auto* p = root.get("preset")) {
    const auto name = p->value<std::string>();
    if (!name) throw ConfigError("preset", "expected a preset name");
    c = preset_config(*name);
  }
  read_config(root, c);
  c.validate();
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  wrap("medium", [&] { medium.validate(); });
  wrap("acquisition", [&] { acquisition.validate(); });
  wrap("grid", [&] { require_grid_inside_ring(grid, geometry); });
  if (projections.empty()) throw ConfigError("projections", "at least one projection count is required");
  for (std::size_t k : projections) {
    if (k == 0 || k > geometry.num_elements() || geometry.num_elements() % k != 0) {
      throw ConfigError("projections", std::to_string(k) + " must divide the element count " +
                                           std::to_string(geometry.num_elements()));
    }
  }
  if (methods.empty()) throw ConfigError("methods", "at least one method is required");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (std::find(methods.begin() + static_cast<std::ptrdiff_t>(i) + 1, methods.end(), methods[i]) != methods.end()) {
      throw ConfigError("methods", "method listed twice");
    }
  }
  if (oversample < 1) throw ConfigError("simulation.oversample", "must be at least 1");
  if (noise_snr_db && !std::isfinite(*noise_snr_db)) throw ConfigError("simulation.noise_snr_db", "must be finite");
  if (phantom) wrap("phantom", [&] { pact::validate(*phantom, grid); });
  if (sinogram_path && !std::filesystem::exists(*sinogram_path)) {
    throw ConfigError("input.sinogram", "file not found: " + sinogram_path->string());
  }
  if (ground_truth_path && !std::filesystem::exists(*ground_truth_path)) {
    throw ConfigError("input.ground_truth", "file not found: " + ground_truth_path->string());
  }
  wrap("ubp", [&] { ubp.validate(); });
  wrap("mb", [&] { mb.validate(); });
  wrap("nr", [&] { nr.train.validate(); });
  wrap("nr.encoding", [&] { nr.encoding.validate(); });
  if (nr.hidden_width < 1) throw ConfigError("nr.hidden_width", "must be positive");
  if (!(nr.initial_output > 0.0 && nr.initial_output < 1.0)) throw ConfigError("nr.initial_output", "must be in (0, 1)");
  for (const auto& [k, e] : nr.epochs_by_k) {
    if (e < 1) throw ConfigError("nr.epochs_by_k." + std::to_string(k), "must be positive");
  }
  if (regions) wrap("regions", [&] { regions->validate(grid); });
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

std::vector<std::string> preset_names() { return {"simulation", "desk", "phantom"}; }

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  c.mb.lambda = 0.01;
  c.nr.train.eta = 0.02;
  if (name == "simulation") {
    PhantomSpec p;
    p.kind = PhantomKind::vessel_branches;
    p.vessel.extent_m = 24e-3;
    p.seed = 7;
    c.phantom = p;
    c.oversample = 2;
    c.nr.epochs_by_k = {{32, 100}, {64, 60}, {128, 40}, {256, 20}};
    return c;
  }
  if (name == "desk") {
    c.geometry = RingGeometry(0.04, 64);
    c.acquisition = Acquisition{10e6, 512, 0.0};
    c.grid = ImageGrid(64, 64, 0.4e-3);
    PhantomSpec p;
    p.kind = PhantomKind::vessel_branches;
    p.vessel.extent_m = 22e-3;
    p.seed = 7;
    c.phantom = p;
    c.oversample = 4;
    c.projections = {8, 16, 32, 64};
    c.nr.epochs_by_k = {{8, 100}, {16, 60}, {32, 40}, {64, 20}};
    c.nr.train.initial_lr = 1e-2;
    c.nr.train.rays_per_batch = 256;
    c.nr.train.signal_scale = 20.0;
    c.nr.initial_output = 0.01;
    c.nr.train.tv_grid_size = 0;
    return c;
  }
  if (name == "phantom") {
    c.geometry = RingGeometry(0.04, 512);
    PhantomSpec p;
    p.kind = PhantomKind::spheres;
    p.discs = {{{0.0, 0.0}, 3e-3, 1.0},
               {{5e-3, 4e-3}, 1.5e-3, 0.8},
               {{-5e-3, 3e-3}, 1e-3, 0.6},
               {{3e-3, -6e-3}, 2e-3, 0.9}};
    c.phantom = p;
    c.oversample = 2;
    c.projections = {64, 128, 256, 512};
    c.mb.lambda = 0.05;
    c.nr.train.max_epochs = 50;
    // Inside the central disc, and an empty corner.
    c.regions = RegionSpec{{236, 236, 40, 40}, {32, 32, 64, 64}};
    return c;
  }
  throw ConfigError("preset", "unknown preset '" + std::string(name) + "' (expected simulation, desk or phantom)");
}

ExperimentConfig parse_config(std::string_view toml_text, std::span<const std::string> overrides, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(std::string(source), os.str());
  }
  for (const auto& o : overrides) merge(root, parse_override(o));
  return from_table(root);
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), overrides, path.string());
}

ExperimentConfig config_from_overrides(std::span<const std::string> overrides) {
  return parse_config("", overrides, "command line");
}

namespace {

toml::array mm_point(Point2 p) { return toml::array{p.x / kMm, p.y / kMm}; }

toml::array rect(const PixelRect& r) {
  return toml::array{static_cast<std::int64_t>(r.x0), static_cast<std::int64_t>(r.y0),
                     static_cast<std::int64_t>(r.width), static_cast<std::int64_t>(r.height)};
}

std::int64_t i64(std::size_t v) { return static_cast<std::int64_t>(v); }

}  // namespace

std::string to_toml(const ExperimentConfig& c) {
  toml::table root;
  if (!c.preset.empty()) root.insert("preset", c.preset);
  root.insert("output_dir", c.output_dir.string());
  root.insert("seed", static_cast<std::int64_t>(c.seed));
  toml::array proj;
  for (auto k : c.projections) proj.push_back(i64(k));
  root.insert("projections", proj);
  toml::array methods;
  for (auto m : c.methods) methods.push_back(std::string(method_name(m)));
  root.insert("methods", methods);

  root.insert("geometry", toml::table{{"radius_mm", c.geometry.radius_m() / kMm},
                                      {"elements", i64(c.geometry.num_elements())}});
  root.insert("medium", toml::table{{"sos_mps", c.medium.sos_mps}, {"grueneisen", c.medium.grueneisen}});
  root.insert("acquisition", toml::table{{"sample_rate_mhz", c.acquisition.sample_rate_hz / kMHz},
                                         {"samples", i64(c.acquisition.num_samples)},
                                         {"t_start_us", c.acquisition.t_start_s / kUs}});
  root.insert("grid", toml::table{{"nx", i64(c.grid.nx())},
                                  {"ny", i64(c.grid.ny())},
                                  {"pixel_mm", c.grid.pixel_size_m() / kMm},
                                  {"center_mm", mm_point(c.grid.center())}});

  toml::table sim{{"oversample", i64(c.oversample)}};
  if (c.noise_snr_db) sim.insert("noise_snr_db", *c.noise_snr_db);
  root.insert("simulation", sim);

  if (c.phantom) {
    const PhantomSpec& p = *c.phantom;
    toml::table t{{"kind", std::string(kind_name(p.kind))}, {"seed", static_cast<std::int64_t>(p.seed)}};
    t.insert("vessel", toml::table{{"extent_mm", p.vessel.extent_m / kMm},
                                   {"depth", i64(p.vessel.depth)},
                                   {"trunk_width_mm", p.vessel.trunk_width_m / kMm},
                                   {"min_width_mm", p.vessel.min_width_m / kMm},
                                   {"min_amplitude", p.vessel.min_amplitude},
                                   {"max_amplitude", p.vessel.max_amplitude}});
    toml::array discs;
    for (const auto& d : p.discs) {
      discs.push_back(toml::table{
          {"center_mm", mm_point(d.center)}, {"radius_mm", d.radius_m / kMm}, {"amplitude", d.amplitude}});
    }
    t.insert("discs", discs);
    toml::array segs;
    for (const auto& s : p.segments) {
      segs.push_back(toml::table{{"a_mm", mm_point(s.a)},
                                 {"b_mm", mm_point(s.b)},
                                 {"width_a_mm", s.width_a_m / kMm},
                                 {"width_b_mm", s.width_b_m / kMm},
                                 {"amplitude", s.amplitude}});
    }
    t.insert("segments", segs);
    toml::array wires;
    for (const auto& w : p.wires) {
      toml::array pts;
      for (const auto& q : w.points) pts.push_back(mm_point(q));
      wires.push_back(toml::table{{"points_mm", pts}, {"width_mm", w.width_m / kMm}, {"amplitude", w.amplitude}});
    }
    t.insert("wires", wires);
    root.insert("phantom", t);
  }

  toml::table input;
  if (c.sinogram_path) input.insert("sinogram", c.sinogram_path->string());
  if (c.ground_truth_path) input.insert("ground_truth", c.ground_truth_path->string());
  if (!input.empty()) root.insert("input", input);

  root.insert("ubp", toml::table{{"clamp_negatives", c.ubp.clamp_negatives},
                                 {"solid_angle_sr", c.ubp.solid_angle},
                                 {"element_height_mm", c.ubp.element_height_m / kMm},
                                 {"workers", i64(c.ubp.workers)}});
  root.insert("mb", toml::table{{"lambda", c.mb.lambda},
                                {"max_iters", i64(c.mb.max_iters)},
                                {"tv_epsilon", c.mb.tv_epsilon},
                                {"step_rule", c.mb.step_rule == StepRule::fixed ? "fixed" : "backtracking"},
                                {"step", c.mb.step},
                                {"backtrack_factor", c.mb.backtrack_factor},
                                {"armijo", c.mb.armijo},
                                {"max_backtracks", i64(c.mb.max_backtracks)},
                                {"fista", c.mb.fista},
                                {"power_iterations", i64(c.mb.power_iterations)}});

  const TrainConfig& t = c.nr.train;
  toml::table nr{{"initial_lr", t.initial_lr},
                 {"lr_decay_every", i64(t.lr_decay_every)},
                 {"lr_decay_factor", t.lr_decay_factor},
                 {"loss_stop_threshold", t.loss_stop_threshold},
                 {"max_epochs", i64(t.max_epochs)},
                 {"eta", t.eta},
                 {"tv_epsilon", t.tv_epsilon},
                 {"tv_grid_size", i64(t.tv_grid_size)},
                 {"rays_per_batch", i64(t.rays_per_batch)},
                 {"ray_block", i64(t.ray_block)},
                 {"beta1", t.beta1},
                 {"beta2", t.beta2},
                 {"adam_epsilon", t.adam_epsilon},
                 {"signal_scale", t.signal_scale},
                 {"signal_gain", t.signal_gain},
                 {"hidden_width", i64(c.nr.hidden_width)},
                 {"initial_output", c.nr.initial_output}};
  toml::table epochs;
  for (const auto& [k, e] : c.nr.epochs_by_k) epochs.insert(std::to_string(k), i64(e));
  nr.insert("epochs_by_k", epochs);
  nr.insert("encoding", toml::table{{"levels", i64(c.nr.encoding.num_levels)},
                                    {"features_per_level", i64(c.nr.encoding.features_per_level)},
                                    {"table_size_log2", i64(c.nr.encoding.table_size_log2)},
                                    {"base_resolution", i64(c.nr.encoding.base_resolution)},
                                    {"finest_resolution", i64(c.nr.encoding.finest_resolution)}});
  root.insert("nr", nr);

  if (c.regions) root.insert("regions", toml::table{{"signal", rect(c.regions->signal)}, {"background", rect(c.regions->background)}});

  std::ostringstream os;
  os << root << "\n";
  return os.str();
}

}  // namespace pact
