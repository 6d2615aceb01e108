#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pact/core.hpp"
#include "pact/forward.hpp"

namespace pact {

enum class PhantomKind { vessel_branches, spheres, wire_polyline };

/// Filled disc (a sphere's cross-section in the imaging plane).
struct Disc {
  Point2 center;
  double radius_m = 0.0;
  double amplitude = 1.0;
};

/// Capsule whose full width tapers linearly from `width_a_m` at `a` to
/// `width_b_m` at `b`.
struct TaperedSegment {
  Point2 a;
  Point2 b;
  double width_a_m = 0.0;
  double width_b_m = 0.0;
  double amplitude = 1.0;
};

struct Polyline {
  std::vector<Point2> points;
  double width_m = 1e-4;
  double amplitude = 1.0;
};

/// Parameters of the random branching-vessel generator.
struct VesselTreeParams {
  /// Side of the square the tree is grown in, centred on the origin.
  double extent_m = 0.02;
  std::size_t depth = 5;
  double trunk_width_m = 1.2e-3;
  double min_width_m = 0.5e-3;
  double min_amplitude = 0.7;
  double max_amplitude = 1.0;
};

struct PhantomSpec {
  PhantomKind kind = PhantomKind::spheres;
  std::vector<Disc> discs;
  std::vector<TaperedSegment> segments;
  std::vector<Polyline> wires;
  VesselTreeParams vessel;
  std::uint64_t seed = 1;
};

/// Deterministic branching tree of tapered segments.
std::vector<TaperedSegment> generate_vessel_tree(const VesselTreeParams& params, std::uint64_t seed);

/// Every explicit and generated structure of the spec as tapered segments and discs.
struct PhantomStructures {
  std::vector<Disc> discs;
  std::vector<TaperedSegment> segments;
};
PhantomStructures expand(const PhantomSpec& spec);

/// Throws std::invalid_argument if a structure leaves the grid or has an
/// amplitude outside (0, 1].
void validate(const PhantomSpec& spec, const ImageGrid& grid);

/// Pixel value = max amplitude over structures containing the pixel centre.
HeatImage rasterize(const PhantomSpec& spec, const ImageGrid& grid);

/// A*H through the matrix-free forward operator, optionally with additive
/// white Gaussian noise at the given SNR (dB, relative to the sinogram RMS).
Sinogram synthesize_sinogram(const HeatImage& img, const RingGeometry& geometry, const Medium& medium,
                             const Acquisition& acquisition, std::optional<double> noise_snr_db = {},
                             std::uint64_t noise_seed = 0, ForwardConfig forward = {});

}  // namespace pact
