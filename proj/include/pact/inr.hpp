#pragma once

// Neural representation of the heat image: a multiresolution hash encoding
// followed by a two-hidden-layer ReLU MLP with sigmoid output, trained
// through the ring-array forward model.  Gradients are computed by hand.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pact/core.hpp"
#include "pact/forward.hpp"

namespace pact {

struct HashEncodingConfig {
  std::size_t num_levels = 8;
  std::size_t features_per_level = 2;
  std::size_t table_size_log2 = 16;
  std::size_t base_resolution = 16;
  std::size_t finest_resolution = 512;
  std::uint32_t prime_x = 2654435761u;
  std::uint32_t prime_y = 805459861u;

  void validate() const;
  std::size_t table_size() const { return std::size_t{1} << table_size_log2; }
  /// Cells per side at each level: floor(N_min * b^l).
  std::vector<std::size_t> level_resolutions() const;
  std::size_t output_dims() const { return num_levels * features_per_level; }
};

/// Axis-aligned square of world coordinates mapped onto [0, 1]^2.
struct FieldDomain {
  Point2 min_corner;
  double side_m = 1.0;

  /// Square covering the grid's pixel-edge extent.
  static FieldDomain covering(const ImageGrid& grid);
  /// Clamped to [0, 1]^2.
  Point2 to_unit(Point2 world) const;
  bool operator==(const FieldDomain&) const = default;
};

/// Network outputs are computed over blocks of this many points, so a point's
/// value never depends on which batch it is evaluated in.
inline constexpr std::size_t kFieldBlock = 256;

template <typename Scalar>
class NeuralField {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Group {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  /// Cached activations of a batched forward pass.
  struct Tape {
    std::size_t count = 0;
    Matrix features;  // (L*F) x P
    Matrix hidden1;   // H x P, post-ReLU
    Matrix hidden2;   // H x P, post-ReLU
    std::vector<Scalar> output;
    std::vector<std::uint32_t> corner_index;  // P x L x 4
    std::vector<Scalar> corner_weight;        // P x L x 4
  };

  NeuralField(HashEncodingConfig encoding, std::size_t hidden_width, FieldDomain domain, std::uint64_t seed);

  const HashEncodingConfig& encoding() const { return encoding_; }
  std::size_t hidden_width() const { return hidden_; }
  const FieldDomain& domain() const { return domain_; }

  std::size_t num_params() const { return params_.size(); }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }
  /// Named parameter tensors in storage order: one table per level, then
  /// W1, b1, W2, b2, W3, b3.
  const std::vector<Group>& groups() const { return groups_; }
  /// Rows and columns of a group (tables: entries x features).
  std::pair<std::size_t, std::size_t> group_shape(std::size_t g) const;
  /// Throws std::invalid_argument if any parameter is not finite.
  void require_finite() const;

  /// Per-level bilinear blend of corner features for a point in [0, 1]^2.
  void encode(Point2 unit, std::span<Scalar> features) const;
  /// Table slot of an integer vertex at a level (dense or hashed).
  std::uint32_t vertex_slot(std::size_t level, std::uint32_t vx, std::uint32_t vy) const;

  Scalar evaluate(Point2 world) const;
  std::vector<Scalar> evaluate(std::span<const Point2> world) const;
  HeatImage render(const ImageGrid& grid) const;

  void forward(std::span<const Point2> world, Tape& tape) const;
  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Tape& tape, std::span<const Scalar> d_output, std::span<Scalar> grad) const;

  template <typename Other>
  NeuralField<Other> cast() const {
    NeuralField<Other> out(encoding_, hidden_, domain_, 0);
    auto dst = out.parameters();
    for (std::size_t k = 0; k < params_.size(); ++k) dst[k] = static_cast<Other>(params_[k]);
    return out;
  }

 private:
  void corners(std::size_t level, Point2 unit, std::uint32_t* slot, Scalar* weight) const;
  void forward_block(const Point2* unit, std::size_t count, std::size_t column, Tape& tape) const;

  HashEncodingConfig encoding_;
  std::size_t hidden_;
  FieldDomain domain_;
  std::vector<std::size_t> resolutions_;
  std::vector<std::size_t> level_offset_;  // parameter offset of each level's table
  std::vector<std::size_t> level_entries_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
  std::vector<Scalar> params_;
  std::vector<Group> groups_;
};

extern template class NeuralField<float>;
extern template class NeuralField<double>;

/// One measured amplitude: (element, time sample).
struct Ray {
  std::uint32_t element = 0;
  std::uint32_t sample = 0;
};

/// Rays whose sample is interior and whose neighbouring arcs can reach the ROI.
std::vector<Ray> trainable_rays(const ForwardOperator& op);

/// gain * Gamma/(4 pi c) * (I(t+dt) - I(t-dt)) / (2 dt) with I sampled from the
/// field.  The field is weighted by the grid's bilinear support, so it matches
/// forward.apply(render(field)) up to interpolation of the field.
template <typename Scalar>
std::vector<double> predict_signals(const NeuralField<Scalar>& field, const ForwardOperator& op,
                                    std::span<const Ray> rays, double gain = 1.0);

struct LossTerms {
  double loss = 0.0;
  double data_term = 0.0;
  /// TV of the rendered field divided by its pixel count.
  double tv_term = 0.0;
};

struct LossSettings {
  double gain = 1.0;
  double eta = 0.0;
  double tv_epsilon = 1e-6;
  /// Grid the field is rendered on for the TV term; unused when eta is 0.
  std::optional<ImageGrid> tv_grid;
};

/// mean((predicted - measured)^2) + eta * TV(render) / pixels.  `grad` is
/// overwritten with the gradient with respect to every parameter.
template <typename Scalar>
LossTerms loss_and_gradients(const NeuralField<Scalar>& field, const ForwardOperator& op,
                             std::span<const Ray> rays, std::span<const double> measured,
                             const LossSettings& settings, std::span<Scalar> grad);

struct TrainConfig {
  double initial_lr = 1e-3;
  std::size_t lr_decay_every = 20;
  double lr_decay_factor = 0.5;
  double loss_stop_threshold = 1e-4;
  std::size_t max_epochs = 100;
  double eta = 0.0;
  double tv_epsilon = 1e-6;
  /// Side of the square TV grid; 0 uses the reconstruction grid.
  std::size_t tv_grid_size = 128;
  std::size_t rays_per_batch = 4096;
  /// Consecutive rays of one element kept together when shuffling; they
  /// share arcs.
  std::size_t ray_block = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Measured samples enter the loss as signal_scale * p / max|p|, and model
  /// signals are scaled to match, so the field fits the initial pressure in
  /// its own units.  Larger values weight the data term more against TV.
  double signal_scale = 1.0;
  /// Explicit model signal gain; overrides signal_scale / max|p| when positive.
  double signal_gain = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double data_term = 0.0;
  double tv_term = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  bool reached_threshold = false;
  bool stopped_by_callback = false;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochStats&)>;

/// Adam over shuffled batches of trainable rays.  The field must cover `grid`.
TrainResult train(NeuralField<float>& field, const Sinogram& sino, const ImageGrid& grid,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Field with the configured encoding and a 128-wide MLP covering `grid`.
/// The output bias is set so the untrained field is close to
/// `initial_output` everywhere (0.5 leaves it at zero).
NeuralField<float> make_field(const ImageGrid& grid, const HashEncodingConfig& encoding = {},
                              std::size_t hidden_width = 128, std::uint64_t seed = 1, double initial_output = 0.5);

void save_checkpoint(const std::filesystem::path& path, const NeuralField<float>& field);
NeuralField<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace pact
