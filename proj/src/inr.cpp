#include "pact/inr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "binary.hpp"
#include "pact/mb.hpp"
#include "pact/parallel.hpp"

namespace pact {

void HashEncodingConfig::validate() const {
  if (num_levels < 1) throw std::invalid_argument("hash encoding needs at least one level");
  if (features_per_level < 1) throw std::invalid_argument("hash encoding needs at least one feature");
  if (table_size_log2 < 4 || table_size_log2 > 30) throw std::invalid_argument("hash table size out of range");
  if (base_resolution < 1) throw std::invalid_argument("base resolution must be positive");
  if (num_levels > 1 && !(base_resolution < finest_resolution)) {
    throw std::invalid_argument("base resolution must be below the finest resolution");
  }
}

std::vector<std::size_t> HashEncodingConfig::level_resolutions() const {
  std::vector<std::size_t> n(num_levels, base_resolution);
  if (num_levels == 1) return n;
  const double b = std::exp((std::log(static_cast<double>(finest_resolution)) -
                             std::log(static_cast<double>(base_resolution))) /
                            static_cast<double>(num_levels - 1));
  for (std::size_t l = 0; l < num_levels; ++l) {
    // The small offset keeps exact powers (e.g. the finest level) from rounding down.
    n[l] = static_cast<std::size_t>(
        std::floor(static_cast<double>(base_resolution) * std::pow(b, static_cast<double>(l)) + 1e-9));
  }
  return n;
}

FieldDomain FieldDomain::covering(const ImageGrid& grid) {
  const double half = std::max(grid.half_width_m(), grid.half_height_m());
  return {{grid.center().x - half, grid.center().y - half}, 2.0 * half};
}

Point2 FieldDomain::to_unit(Point2 w) const {
  return {std::clamp((w.x - min_corner.x) / side_m, 0.0, 1.0), std::clamp((w.y - min_corner.y) / side_m, 0.0, 1.0)};
}

template <typename Scalar>
NeuralField<Scalar>::NeuralField(HashEncodingConfig encoding, std::size_t hidden_width, FieldDomain domain,
                                 std::uint64_t seed)
    : encoding_(encoding), hidden_(hidden_width), domain_(domain) {
  encoding_.validate();
  if (hidden_ < 1) throw std::invalid_argument("hidden width must be positive");
  if (!(domain_.side_m > 0.0)) throw std::invalid_argument("field domain must have positive size");
  resolutions_ = encoding_.level_resolutions();
  const std::size_t F = encoding_.features_per_level;
  const std::size_t D = encoding_.output_dims();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < encoding_.num_levels; ++l) {
    const std::size_t vertices = (resolutions_[l] + 1) * (resolutions_[l] + 1);
    level_entries_.push_back(std::min(vertices, encoding_.table_size()));
    level_offset_.push_back(offset);
    groups_.push_back({"table" + std::to_string(l), offset, level_entries_.back() * F});
    offset += level_entries_.back() * F;
  }
  auto add = [&](const char* name, std::size_t size) {
    groups_.push_back({name, offset, size});
    offset += size;
    return offset - size;
  };
  w1_ = add("W1", hidden_ * D);
  b1_ = add("b1", hidden_);
  w2_ = add("W2", hidden_ * hidden_);
  b2_ = add("b2", hidden_);
  w3_ = add("W3", hidden_);
  b3_ = add("b3", 1);
  params_.assign(offset, Scalar(0));

  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t off, std::size_t size, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < size; ++k) params_[off + k] = static_cast<Scalar>(u(rng));
  };
  fill(0, level_offset_.back() + level_entries_.back() * F, 1e-4);
  fill(w1_, hidden_ * D, std::sqrt(6.0 / static_cast<double>(D)));
  fill(w2_, hidden_ * hidden_, std::sqrt(6.0 / static_cast<double>(hidden_)));
  fill(w3_, hidden_, std::sqrt(6.0 / static_cast<double>(hidden_)));
}

template <typename Scalar>
std::pair<std::size_t, std::size_t> NeuralField<Scalar>::group_shape(std::size_t g) const {
  const std::size_t L = encoding_.num_levels;
  if (g < L) return {level_entries_[g], encoding_.features_per_level};
  switch (g - L) {
    case 0: return {hidden_, encoding_.output_dims()};
    case 1: return {hidden_, 1};
    case 2: return {hidden_, hidden_};
    case 3: return {hidden_, 1};
    case 4: return {1, hidden_};
    default: return {1, 1};
  }
}

template <typename Scalar>
void NeuralField<Scalar>::require_finite() const {
  for (const Scalar v : params_) {
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument("neural field has non-finite parameters");
  }
}

template <typename Scalar>
std::uint32_t NeuralField<Scalar>::vertex_slot(std::size_t level, std::uint32_t vx, std::uint32_t vy) const {
  const std::size_t n = resolutions_[level] + 1;
  if (n * n <= encoding_.table_size()) return static_cast<std::uint32_t>(vy * n + vx);
  const std::uint32_t h = (vx * encoding_.prime_x) ^ (vy * encoding_.prime_y);
  return h & static_cast<std::uint32_t>(encoding_.table_size() - 1);
}

template <typename Scalar>
void NeuralField<Scalar>::corners(std::size_t level, Point2 unit, std::uint32_t* slot, Scalar* weight) const {
  const auto n = static_cast<double>(resolutions_[level]);
  const double px = std::clamp(unit.x, 0.0, 1.0) * n;
  const double py = std::clamp(unit.y, 0.0, 1.0) * n;
  const double cx = std::min(std::floor(px), n - 1.0);
  const double cy = std::min(std::floor(py), n - 1.0);
  const double fx = px - cx;
  const double fy = py - cy;
  const auto ix = static_cast<std::uint32_t>(cx);
  const auto iy = static_cast<std::uint32_t>(cy);
  slot[0] = vertex_slot(level, ix, iy);
  slot[1] = vertex_slot(level, ix + 1, iy);
  slot[2] = vertex_slot(level, ix, iy + 1);
  slot[3] = vertex_slot(level, ix + 1, iy + 1);
  weight[0] = static_cast<Scalar>((1.0 - fx) * (1.0 - fy));
  weight[1] = static_cast<Scalar>(fx * (1.0 - fy));
  weight[2] = static_cast<Scalar>((1.0 - fx) * fy);
  weight[3] = static_cast<Scalar>(fx * fy);
}

template <typename Scalar>
void NeuralField<Scalar>::encode(Point2 unit, std::span<Scalar> features) const {
  const std::size_t F = encoding_.features_per_level;
  for (std::size_t l = 0; l < encoding_.num_levels; ++l) {
    std::uint32_t slot[4];
    Scalar w[4];
    corners(l, unit, slot, w);
    const Scalar* table = params_.data() + level_offset_[l];
    for (std::size_t f = 0; f < F; ++f) {
      Scalar acc = 0;
      for (int c = 0; c < 4; ++c) acc += w[c] * table[slot[c] * F + f];
      features[l * F + f] = acc;
    }
  }
}

namespace {

std::size_t padded(std::size_t n) { return (n + kFieldBlock - 1) / kFieldBlock * kFieldBlock; }

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

}  // namespace

template <typename Scalar>
void NeuralField<Scalar>::forward_block(const Point2* unit, std::size_t count, std::size_t column,
                                        Tape& tape) const {
  const std::size_t L = encoding_.num_levels;
  const std::size_t F = encoding_.features_per_level;
  const std::size_t D = encoding_.output_dims();
  for (std::size_t j = 0; j < kFieldBlock; ++j) {
    // Padding columns repeat the last real point.
    const Point2 u = unit[std::min(j, count - 1)];
    const std::size_t p = column + j;
    for (std::size_t l = 0; l < L; ++l) {
      std::uint32_t* slot = tape.corner_index.data() + (p * L + l) * 4;
      Scalar* w = tape.corner_weight.data() + (p * L + l) * 4;
      corners(l, u, slot, w);
      const Scalar* table = params_.data() + level_offset_[l];
      for (std::size_t f = 0; f < F; ++f) {
        Scalar acc = 0;
        for (int c = 0; c < 4; ++c) acc += w[c] * table[slot[c] * F + f];
        tape.features(static_cast<Eigen::Index>(l * F + f), static_cast<Eigen::Index>(p)) = acc;
      }
    }
  }
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto H = static_cast<Eigen::Index>(hidden_);
  // Owned (aligned) copies: Eigen's vectorized kernels round differently
  // depending on operand alignment, which would make results vary with the
  // heap address of the parameter buffer.
  const Matrix W1 = Eigen::Map<const Matrix>(params_.data() + w1_, H, static_cast<Eigen::Index>(D));
  const Vector b1 = Eigen::Map<const Vector>(params_.data() + b1_, H);
  const Matrix W2 = Eigen::Map<const Matrix>(params_.data() + w2_, H, H);
  const Vector b2 = Eigen::Map<const Vector>(params_.data() + b2_, H);
  const Matrix W3 = Eigen::Map<const Matrix>(params_.data() + w3_, 1, H);
  const Scalar b3 = params_[b3_];
  const auto col = static_cast<Eigen::Index>(column);
  const auto B = static_cast<Eigen::Index>(kFieldBlock);
  auto h1 = tape.hidden1.middleCols(col, B);
  auto h2 = tape.hidden2.middleCols(col, B);
  h1.noalias() = W1 * tape.features.middleCols(col, B);
  h1.colwise() += b1;
  h1 = h1.cwiseMax(Scalar(0));
  h2.noalias() = W2 * h1;
  h2.colwise() += b2;
  h2 = h2.cwiseMax(Scalar(0));
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> z = W3 * h2;
  for (Eigen::Index j = 0; j < B; ++j) tape.output[column + static_cast<std::size_t>(j)] = sigmoid(z(j) + b3);
}

template <typename Scalar>
void NeuralField<Scalar>::forward(std::span<const Point2> world, Tape& tape) const {
  const std::size_t P = padded(world.size());
  const std::size_t L = encoding_.num_levels;
  const auto rows = static_cast<Eigen::Index>(hidden_);
  tape.count = world.size();
  tape.features.resize(static_cast<Eigen::Index>(encoding_.output_dims()), static_cast<Eigen::Index>(P));
  tape.hidden1.resize(rows, static_cast<Eigen::Index>(P));
  tape.hidden2.resize(rows, static_cast<Eigen::Index>(P));
  tape.output.assign(P, Scalar(0));
  tape.corner_index.assign(P * L * 4, 0);
  tape.corner_weight.assign(P * L * 4, Scalar(0));
  if (world.empty()) return;
  std::vector<Point2> unit(world.size());
  for (std::size_t k = 0; k < world.size(); ++k) unit[k] = domain_.to_unit(world[k]);
  // Blocks write disjoint columns.
  parallel_for(P / kFieldBlock, [&](std::size_t b) {
    const std::size_t first = b * kFieldBlock;
    forward_block(unit.data() + first, std::min(kFieldBlock, world.size() - first), first, tape);
  });
}

template <typename Scalar>
void NeuralField<Scalar>::backward(const Tape& tape, std::span<const Scalar> d_output, std::span<Scalar> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient size does not match parameters");
  if (d_output.size() < tape.count) throw std::invalid_argument("output gradient shorter than the batch");
  if (tape.count == 0) return;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const std::size_t L = encoding_.num_levels;
  const std::size_t F = encoding_.features_per_level;
  const std::size_t D = encoding_.output_dims();
  const auto H = static_cast<Eigen::Index>(hidden_);
  const auto P = static_cast<Eigen::Index>(tape.output.size());

  Row dz3 = Row::Zero(P);
  for (std::size_t p = 0; p < tape.count; ++p) {
    const Scalar y = tape.output[p];
    dz3(static_cast<Eigen::Index>(p)) = d_output[p] * y * (Scalar(1) - y);
  }
  // Aligned copies and temporaries, as in forward_block.
  const Matrix W1 = Eigen::Map<const Matrix>(params_.data() + w1_, H, static_cast<Eigen::Index>(D));
  const Matrix W2 = Eigen::Map<const Matrix>(params_.data() + w2_, H, H);
  const Matrix W3 = Eigen::Map<const Matrix>(params_.data() + w3_, 1, H);
  auto accumulate = [&](std::size_t offset, const auto& g) {
    Scalar* dst = grad.data() + offset;
    for (Eigen::Index i = 0; i < g.size(); ++i) dst[i] += g.data()[i];
  };

  const Matrix gW3 = dz3 * tape.hidden2.transpose();
  accumulate(w3_, gW3);
  grad[b3_] += dz3.sum();
  Matrix d2 = W3.transpose() * dz3;
  d2 = d2.cwiseProduct((tape.hidden2.array() > Scalar(0)).template cast<Scalar>().matrix());
  const Matrix gW2 = d2 * tape.hidden1.transpose();
  accumulate(w2_, gW2);
  const Vector gb2 = d2.rowwise().sum();
  accumulate(b2_, gb2);
  Matrix d1 = W2.transpose() * d2;
  d1 = d1.cwiseProduct((tape.hidden1.array() > Scalar(0)).template cast<Scalar>().matrix());
  const Matrix gW1 = d1 * tape.features.transpose();
  accumulate(w1_, gW1);
  const Vector gb1 = d1.rowwise().sum();
  accumulate(b1_, gb1);
  const Matrix dfeat = W1.transpose() * d1;
  for (std::size_t p = 0; p < tape.count; ++p) {
    for (std::size_t l = 0; l < L; ++l) {
      const std::uint32_t* slot = tape.corner_index.data() + (p * L + l) * 4;
      const Scalar* w = tape.corner_weight.data() + (p * L + l) * 4;
      Scalar* table = grad.data() + level_offset_[l];
      for (std::size_t f = 0; f < F; ++f) {
        const Scalar g = dfeat(static_cast<Eigen::Index>(l * F + f), static_cast<Eigen::Index>(p));
        for (int c = 0; c < 4; ++c) table[slot[c] * F + f] += w[c] * g;
      }
    }
  }
}

template <typename Scalar>
std::vector<Scalar> NeuralField<Scalar>::evaluate(std::span<const Point2> world) const {
  std::vector<Scalar> out(world.size());
  if (world.empty()) return out;
  const std::size_t blocks = padded(world.size()) / kFieldBlock;
  const std::size_t workers = std::min(blocks, default_workers());
  // One scratch tape per worker slot; blocks are assigned statically.
  const std::size_t per = (blocks + workers - 1) / workers;
  parallel_for(workers, [&](std::size_t w) {
    Tape tape;
    tape.features.resize(static_cast<Eigen::Index>(encoding_.output_dims()), static_cast<Eigen::Index>(kFieldBlock));
    tape.hidden1.resize(static_cast<Eigen::Index>(hidden_), static_cast<Eigen::Index>(kFieldBlock));
    tape.hidden2.resize(static_cast<Eigen::Index>(hidden_), static_cast<Eigen::Index>(kFieldBlock));
    tape.output.assign(kFieldBlock, Scalar(0));
    tape.corner_index.assign(kFieldBlock * encoding_.num_levels * 4, 0);
    tape.corner_weight.assign(kFieldBlock * encoding_.num_levels * 4, Scalar(0));
    std::vector<Point2> unit(kFieldBlock);
    for (std::size_t b = w * per; b < std::min(blocks, (w + 1) * per); ++b) {
      const std::size_t first = b * kFieldBlock;
      const std::size_t count = std::min(kFieldBlock, world.size() - first);
      for (std::size_t j = 0; j < count; ++j) unit[j] = domain_.to_unit(world[first + j]);
      forward_block(unit.data(), count, 0, tape);
      std::copy_n(tape.output.begin(), count, out.begin() + static_cast<std::ptrdiff_t>(first));
    }
  });
  return out;
}

template <typename Scalar>
Scalar NeuralField<Scalar>::evaluate(Point2 world) const {
  return evaluate(std::span<const Point2>(&world, 1))[0];
}

template <typename Scalar>
HeatImage NeuralField<Scalar>::render(const ImageGrid& grid) const {
  std::vector<Point2> pts(grid.size());
  for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
    for (std::size_t ix = 0; ix < grid.nx(); ++ix) pts[grid.index(ix, iy)] = grid.pixel_center(ix, iy);
  }
  const auto v = evaluate(pts);
  return HeatImage(grid, std::vector<double>(v.begin(), v.end()));
}

template class NeuralField<float>;
template class NeuralField<double>;

std::vector<Ray> trainable_rays(const ForwardOperator& op) {
  std::vector<Ray> rays;
  const std::size_t ns = op.acquisition().num_samples;
  for (std::size_t e = 0; e < op.geometry().num_elements(); ++e) {
    for (std::size_t i = 1; i + 1 < ns; ++i) {
      if (op.sample_active(i - 1) || op.sample_active(i + 1)) {
        rays.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(i)});
      }
    }
  }
  return rays;
}

namespace {

constexpr std::size_t kNoArc = static_cast<std::size_t>(-1);

/// Arc geometry shared by a set of rays: each distinct (element, sample)
/// shell appears once.
struct ArcSet {
  std::vector<std::size_t> begin;  // arcs + 1 offsets into points
  std::vector<Point2> points;
  std::vector<double> coeff;       // trapezoid/distance weight times grid support
  std::vector<std::size_t> plus;   // per ray: arc of t + dt
  std::vector<std::size_t> minus;  // per ray: arc of t - dt
};

ArcSet build_arcs(const ForwardOperator& op, std::span<const Ray> rays) {
  const std::size_t ns = op.acquisition().num_samples;
  std::vector<std::uint64_t> ids;
  ids.reserve(2 * rays.size());
  for (const Ray& r : rays) {
    if (r.element >= op.geometry().num_elements() || r.sample < 1 || r.sample + 1 >= ns) {
      throw std::invalid_argument("ray outside the acquisition interior");
    }
    ids.push_back(std::uint64_t{r.element} * ns + r.sample - 1);
    ids.push_back(std::uint64_t{r.element} * ns + r.sample + 1);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  ArcSet set;
  set.begin.push_back(0);
  std::vector<ArcSample> samples;
  for (const std::uint64_t id : ids) {
    op.arc_samples(static_cast<std::size_t>(id / ns), static_cast<std::size_t>(id % ns), samples);
    for (const ArcSample& a : samples) {
      const double s = support_weight(op.grid(), a.point);
      if (s <= 0.0) continue;
      set.points.push_back(a.point);
      set.coeff.push_back(a.coeff * s);
    }
    set.begin.push_back(set.points.size());
  }
  auto find = [&](std::uint64_t id) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  for (const Ray& r : rays) {
    const std::size_t a = find(std::uint64_t{r.element} * ns + r.sample + 1);
    const std::size_t b = find(std::uint64_t{r.element} * ns + r.sample - 1);
    set.plus.push_back(set.begin[a + 1] > set.begin[a] ? a : kNoArc);
    set.minus.push_back(set.begin[b + 1] > set.begin[b] ? b : kNoArc);
  }
  return set;
}

template <typename Values>
std::vector<double> shell_sums(const ArcSet& set, const Values& values) {
  std::vector<double> I(set.begin.size() - 1, 0.0);
  for (std::size_t a = 0; a + 1 < set.begin.size(); ++a) {
    double acc = 0.0;
    for (std::size_t k = set.begin[a]; k < set.begin[a + 1]; ++k) acc += set.coeff[k] * static_cast<double>(values[k]);
    I[a] = acc;
  }
  return I;
}

double arc_value(const std::vector<double>& I, std::size_t a) { return a == kNoArc ? 0.0 : I[a]; }

}  // namespace

template <typename Scalar>
std::vector<double> predict_signals(const NeuralField<Scalar>& field, const ForwardOperator& op,
                                    std::span<const Ray> rays, double gain) {
  field.require_finite();
  const ArcSet set = build_arcs(op, rays);
  const auto values = field.evaluate(set.points);
  const auto I = shell_sums(set, values);
  std::vector<double> out(rays.size());
  const double scale = gain * op.difference_scale();
  for (std::size_t r = 0; r < rays.size(); ++r) out[r] = scale * (arc_value(I, set.plus[r]) - arc_value(I, set.minus[r]));
  return out;
}

template <typename Scalar>
LossTerms loss_and_gradients(const NeuralField<Scalar>& field, const ForwardOperator& op, std::span<const Ray> rays,
                             std::span<const double> measured, const LossSettings& settings, std::span<Scalar> grad) {
  if (measured.size() != rays.size()) throw std::invalid_argument("one measurement per ray is required");
  if (grad.size() != field.num_params()) throw std::invalid_argument("gradient size does not match parameters");
  if (!(settings.eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  std::fill(grad.begin(), grad.end(), Scalar(0));
  const ArcSet set = build_arcs(op, rays);
  const bool with_tv = settings.eta > 0.0;
  if (with_tv && !settings.tv_grid) throw std::invalid_argument("a TV grid is required when eta > 0");

  std::vector<Point2> points = set.points;
  const std::size_t ray_points = points.size();
  if (with_tv) {
    const ImageGrid& g = *settings.tv_grid;
    for (std::size_t iy = 0; iy < g.ny(); ++iy) {
      for (std::size_t ix = 0; ix < g.nx(); ++ix) points.push_back(g.pixel_center(ix, iy));
    }
  }
  typename NeuralField<Scalar>::Tape tape;
  field.forward(points, tape);

  LossTerms terms;
  std::vector<double> d_out(points.size(), 0.0);
  if (!rays.empty()) {
    const auto I = shell_sums(set, tape.output);
    std::vector<double> dI(I.size(), 0.0);
    const double scale = settings.gain * op.difference_scale();
    const double inv_n = 1.0 / static_cast<double>(rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const double pred = scale * (arc_value(I, set.plus[r]) - arc_value(I, set.minus[r]));
      const double res = pred - measured[r];
      terms.data_term += res * res * inv_n;
      const double d = 2.0 * res * inv_n * scale;
      if (set.plus[r] != kNoArc) dI[set.plus[r]] += d;
      if (set.minus[r] != kNoArc) dI[set.minus[r]] -= d;
    }
    for (std::size_t a = 0; a < dI.size(); ++a) {
      for (std::size_t k = set.begin[a]; k < set.begin[a + 1]; ++k) d_out[k] = dI[a] * set.coeff[k];
    }
  }
  if (with_tv) {
    const ImageGrid& g = *settings.tv_grid;
    std::vector<double> img(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) img[k] = static_cast<double>(tape.output[ray_points + k]);
    const double npix = static_cast<double>(g.size());
    terms.tv_term = tv_value(img, g.nx(), g.ny(), settings.tv_epsilon) / npix;
    std::vector<double> gtv(g.size());
    tv_gradient(img, g.nx(), g.ny(), settings.tv_epsilon, gtv);
    for (std::size_t k = 0; k < g.size(); ++k) d_out[ray_points + k] = settings.eta * gtv[k] / npix;
  }
  terms.loss = terms.data_term + settings.eta * terms.tv_term;
  if (!std::isfinite(terms.loss)) throw TrainingDiverged("loss is not finite");
  std::vector<Scalar> d_scalar(d_out.begin(), d_out.end());
  field.backward(tape, d_scalar, grad);
  return terms;
}

template std::vector<double> predict_signals(const NeuralField<float>&, const ForwardOperator&, std::span<const Ray>,
                                             double);
template std::vector<double> predict_signals(const NeuralField<double>&, const ForwardOperator&, std::span<const Ray>,
                                             double);
template LossTerms loss_and_gradients(const NeuralField<float>&, const ForwardOperator&, std::span<const Ray>,
                                      std::span<const double>, const LossSettings&, std::span<float>);
template LossTerms loss_and_gradients(const NeuralField<double>&, const ForwardOperator&, std::span<const Ray>,
                                      std::span<const double>, const LossSettings&, std::span<double>);

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("initial_lr must be positive");
  if (lr_decay_every < 1) throw std::invalid_argument("lr_decay_every must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw std::invalid_argument("lr_decay_factor must be in (0, 1)");
  if (!(loss_stop_threshold > 0.0)) throw std::invalid_argument("loss_stop_threshold must be positive");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be positive");
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  if (!(tv_epsilon > 0.0)) throw std::invalid_argument("tv_epsilon must be positive");
  if (rays_per_batch < 1 || ray_block < 1) throw std::invalid_argument("batch sizes must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("Adam betas must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("adam_epsilon must be positive");
  if (!(signal_gain >= 0.0)) throw std::invalid_argument("signal_gain must be >= 0");
  if (!(signal_scale > 0.0)) throw std::invalid_argument("signal_scale must be positive");
}

namespace {

class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& cfg) : m_(n, 0.0f), v_(n, 0.0f), cfg_(cfg) {}

  void step(std::span<float> params, std::span<const float> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(cfg_.beta1);
    const auto b2 = static_cast<float>(cfg_.beta2);
    const auto a = static_cast<float>(lr / c1);
    const auto s2 = static_cast<float>(1.0 / std::sqrt(c2));
    const auto eps = static_cast<float>(cfg_.adam_epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = b1 * m_[k] + (1.0f - b1) * grad[k];
      v_[k] = b2 * v_[k] + (1.0f - b2) * grad[k] * grad[k];
      params[k] -= a * m_[k] / (std::sqrt(v_[k]) * s2 + eps);
    }
  }

 private:
  std::vector<float> m_;
  std::vector<float> v_;
  const TrainConfig& cfg_;
  std::size_t t_ = 0;
};

}  // namespace

TrainResult train(NeuralField<float>& field, const Sinogram& sino, const ImageGrid& grid, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  field.require_finite();
  if (!(field.domain() == FieldDomain::covering(grid))) {
    throw std::invalid_argument("neural field domain does not cover the reconstruction grid");
  }
  const double peak = sino.max_abs();
  if (peak == 0.0) throw std::invalid_argument("cannot train on an all-zero sinogram");
  const ForwardOperator op(sino.geometry(), sino.medium(), sino.acquisition(), grid);
  const std::size_t ns = sino.num_samples();

  LossSettings settings;
  const double scale = cfg.signal_scale / peak;
  settings.gain = cfg.signal_gain > 0.0 ? cfg.signal_gain : scale;
  settings.eta = cfg.eta;
  settings.tv_epsilon = cfg.tv_epsilon;
  if (cfg.eta > 0.0) {
    if (cfg.tv_grid_size == 0) {
      settings.tv_grid = grid;
    } else {
      const FieldDomain d = field.domain();
      const double px = d.side_m / static_cast<double>(cfg.tv_grid_size);
      settings.tv_grid = ImageGrid(cfg.tv_grid_size, cfg.tv_grid_size, px,
                                   {d.min_corner.x + 0.5 * d.side_m, d.min_corner.y + 0.5 * d.side_m});
    }
  }

  const auto rays = trainable_rays(op);
  if (rays.empty()) throw std::invalid_argument("no trainable rays: arcs never reach the ROI");
  // Runs of consecutive rays of one element.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (std::size_t k = 0; k < rays.size();) {
    std::size_t end = k + 1;
    while (end < rays.size() && end - k < cfg.ray_block && rays[end].element == rays[k].element &&
           rays[end].sample == rays[end - 1].sample + 1) {
      ++end;
    }
    blocks.emplace_back(k, end);
    k = end;
  }

  std::mt19937_64 rng(cfg.seed);
  Adam adam(field.num_params(), cfg);
  std::vector<float> grad(field.num_params());
  std::vector<Ray> batch;
  std::vector<double> measured;
  TrainResult result;
  double initial_loss = 0.0;
  std::size_t diverging = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.initial_lr * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
    std::shuffle(blocks.begin(), blocks.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < blocks.size();) {
      batch.clear();
      measured.clear();
      while (b < blocks.size() && batch.size() < cfg.rays_per_batch) {
        for (std::size_t k = blocks[b].first; k < blocks[b].second; ++k) {
          batch.push_back(rays[k]);
          measured.push_back(sino.data()[rays[k].element * ns + rays[k].sample] * scale);
        }
        ++b;
      }
      const LossTerms t = loss_and_gradients(field, op, batch, measured, settings, std::span<float>(grad));
      adam.step(field.parameters(), grad, lr);
      stats.loss += t.loss;
      stats.data_term += t.data_term;
      stats.tv_term += t.tv_term;
      ++batches;
    }
    stats.loss /= static_cast<double>(batches);
    stats.data_term /= static_cast<double>(batches);
    stats.tv_term /= static_cast<double>(batches);
    result.history.push_back(stats);
    if (!std::isfinite(stats.loss)) throw TrainingDiverged("epoch loss is not finite");
    if (epoch == 0) initial_loss = stats.loss;
    diverging = stats.loss > 10.0 * initial_loss ? diverging + 1 : 0;
    if (diverging >= 5) {
      throw TrainingDiverged("loss above ten times its initial value for 5 consecutive epochs");
    }
    if (stats.loss < cfg.loss_stop_threshold) {
      result.reached_threshold = true;
      if (on_epoch) on_epoch(stats);
      break;
    }
    if (on_epoch && !on_epoch(stats)) {
      result.stopped_by_callback = true;
      break;
    }
  }
  return result;
}

NeuralField<float> make_field(const ImageGrid& grid, const HashEncodingConfig& encoding, std::size_t hidden_width,
                              std::uint64_t seed, double initial_output) {
  if (!(initial_output > 0.0 && initial_output < 1.0)) throw std::invalid_argument("initial_output must be in (0, 1)");
  NeuralField<float> field(encoding, hidden_width, FieldDomain::covering(grid), seed);
  field.parameters().back() = static_cast<float>(std::log(initial_output / (1.0 - initial_output)));
  return field;
}

namespace {
constexpr char kCheckpointMagic[5] = "PANF";
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NeuralField<float>& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  using namespace binary;
  const auto& e = field.encoding();
  put_magic(os, kCheckpointMagic);
  put_u16(os, kCheckpointVersion);
  put_u16(os, 0);
  for (const std::size_t v : {e.num_levels, e.features_per_level, e.table_size_log2, e.base_resolution,
                              e.finest_resolution, field.hidden_width()}) {
    put_u32(os, static_cast<std::uint32_t>(v));
  }
  put_u32(os, e.prime_x);
  put_u32(os, e.prime_y);
  put_f64(os, field.domain().min_corner.x);
  put_f64(os, field.domain().min_corner.y);
  put_f64(os, field.domain().side_m);
  const auto& groups = field.groups();
  put_u32(os, static_cast<std::uint32_t>(groups.size()));
  const auto params = field.parameters();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [rows, cols] = field.group_shape(g);
    put_u32(os, 2);
    put_u32(os, static_cast<std::uint32_t>(rows));
    put_u32(os, static_cast<std::uint32_t>(cols));
    for (std::size_t k = 0; k < groups[g].size; ++k) put_f32(os, params[groups[g].offset + k]);
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

NeuralField<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  using namespace binary;
  expect_magic(is, kCheckpointMagic, "neural field checkpoint");
  if (get_u16(is) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  get_u16(is);
  HashEncodingConfig e;
  e.num_levels = get_u32(is);
  e.features_per_level = get_u32(is);
  e.table_size_log2 = get_u32(is);
  e.base_resolution = get_u32(is);
  e.finest_resolution = get_u32(is);
  const std::size_t hidden = get_u32(is);
  e.prime_x = get_u32(is);
  e.prime_y = get_u32(is);
  FieldDomain d;
  d.min_corner.x = get_f64(is);
  d.min_corner.y = get_f64(is);
  d.side_m = get_f64(is);
  NeuralField<float> field(e, hidden, d, 0);
  const auto& groups = field.groups();
  if (get_u32(is) != groups.size()) throw FormatError("checkpoint tensor count does not match its config");
  auto params = field.parameters();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [rows, cols] = field.group_shape(g);
    if (get_u32(is) != 2 || get_u32(is) != rows || get_u32(is) != cols) {
      throw FormatError("checkpoint tensor shape does not match its config");
    }
    for (std::size_t k = 0; k < groups[g].size; ++k) params[groups[g].offset + k] = get_f32(is);
  }
  return field;
}

}  // namespace pact
