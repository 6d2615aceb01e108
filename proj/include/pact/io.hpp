#pragma once

// On-disk formats.  Sinograms ("PARF") and heat images ("PAIM") are
// little-endian: 4-byte magic, u16 version, u16 reserved, a fixed header of
// u32 dimensions and f64 scalars, then a row-major f32 payload.
//
//   PARF header: u32 elements, u32 samples, f64 ring radius, f64 speed of
//                sound, f64 Grueneisen, f64 sample rate, f64 start time.
//                Payload: element-major traces.
//   PAIM header: u32 nx, u32 ny, f64 pixel size, f64 centre x, f64 centre y.
//                Payload: rows of increasing y, x fastest.
//
// Values are stored as 32-bit floats, so a write-read cycle rounds once and
// every later cycle is bit-exact.

#include <filesystem>
#include <stdexcept>

#include "pact/core.hpp"

namespace pact {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_sinogram(const std::filesystem::path& path, const Sinogram& sino);
Sinogram read_sinogram(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const HeatImage& img);
HeatImage read_image(const std::filesystem::path& path);

/// 8-bit grayscale PNG, min-max normalized per image (a constant image is
/// black).  +y points up.
void write_png(const std::filesystem::path& path, const HeatImage& img);
/// Several images of one size side by side, each normalized on its own, with
/// a `gap`-pixel white separator.
void write_png_strip(const std::filesystem::path& path, std::span<const HeatImage> images, std::size_t gap = 2);

enum class RawLayout {
  /// All samples of element 0, then element 1, ...
  element_major,
  /// Sample 0 of every element, then sample 1, ...
  sample_major,
};

/// Imports a headerless file of little-endian f32 amplitudes recorded by an
/// external system.  Geometry, medium and timing come from the caller.
Sinogram import_raw(const std::filesystem::path& path, const RingGeometry& geometry, const Medium& medium,
                    const Acquisition& acquisition, RawLayout layout = RawLayout::element_major);

}  // namespace pact
