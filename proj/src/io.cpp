#include "pact/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "binary.hpp"

namespace pact {

namespace {

constexpr char kSinogramMagic[5] = "PARF";
constexpr char kImageMagic[5] = "PAIM";
constexpr std::uint16_t kVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

void read_header(std::istream& is, const char (&magic)[5], const std::string& what) {
  binary::expect_magic(is, magic, what);
  const auto version = binary::get_u16(is);
  if (version != kVersion) throw FormatError("unsupported " + what + " version " + std::to_string(version));
  binary::get_u16(is);
}

void write_payload(std::ostream& os, std::span<const double> values) {
  for (double v : values) binary::put_f32(os, static_cast<float>(v));
}

std::vector<double> read_payload(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<double> values(n);
  for (auto& v : values) v = static_cast<double>(binary::get_f32(is));
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after " + what + " payload");
  return values;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

void write_sinogram(const std::filesystem::path& path, const Sinogram& sino) {
  auto os = open_out(path);
  using namespace binary;
  put_magic(os, kSinogramMagic);
  put_u16(os, kVersion);
  put_u16(os, 0);
  put_u32(os, static_cast<std::uint32_t>(sino.num_elements()));
  put_u32(os, static_cast<std::uint32_t>(sino.num_samples()));
  put_f64(os, sino.geometry().radius_m());
  put_f64(os, sino.medium().sos_mps);
  put_f64(os, sino.medium().grueneisen);
  put_f64(os, sino.acquisition().sample_rate_hz);
  put_f64(os, sino.acquisition().t_start_s);
  write_payload(os, sino.data());
  finish(os, path);
}

Sinogram read_sinogram(const std::filesystem::path& path) {
  auto is = open_in(path);
  using namespace binary;
  read_header(is, kSinogramMagic, "sinogram");
  const std::size_t elements = get_u32(is);
  const std::size_t samples = get_u32(is);
  const double radius = get_f64(is);
  Medium medium;
  medium.sos_mps = get_f64(is);
  medium.grueneisen = get_f64(is);
  Acquisition acq;
  acq.sample_rate_hz = get_f64(is);
  acq.t_start_s = get_f64(is);
  acq.num_samples = samples;
  try {
    medium.validate();
    acq.validate();
    return Sinogram(RingGeometry(radius, elements), medium, acq, read_payload(is, elements * samples, "sinogram"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": invalid sinogram header: " + e.what());
  }
}

void write_image(const std::filesystem::path& path, const HeatImage& img) {
  auto os = open_out(path);
  using namespace binary;
  const auto& g = img.grid();
  put_magic(os, kImageMagic);
  put_u16(os, kVersion);
  put_u16(os, 0);
  put_u32(os, static_cast<std::uint32_t>(g.nx()));
  put_u32(os, static_cast<std::uint32_t>(g.ny()));
  put_f64(os, g.pixel_size_m());
  put_f64(os, g.center().x);
  put_f64(os, g.center().y);
  write_payload(os, img.values());
  finish(os, path);
}

HeatImage read_image(const std::filesystem::path& path) {
  auto is = open_in(path);
  using namespace binary;
  read_header(is, kImageMagic, "image");
  const std::size_t nx = get_u32(is);
  const std::size_t ny = get_u32(is);
  const double px = get_f64(is);
  const double cx = get_f64(is);
  const double cy = get_f64(is);
  try {
    const ImageGrid grid(nx, ny, px, {cx, cy});
    return HeatImage(grid, read_payload(is, nx * ny, "image"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": invalid image header: " + e.what());
  }
}

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& pixels) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw std::runtime_error("libpng initialisation failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw std::runtime_error("libpng initialisation failed");
  std::vector<png_bytep> rows(height);
  for (std::size_t r = 0; r < height; ++r) rows[r] = const_cast<png_bytep>(pixels.data() + r * width);
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("failed writing " + path.string());
  png_init_io(w.png, file.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

// Paints `img` into a canvas row-major buffer with its top-left at column x0.
void paint(const HeatImage& img, std::vector<std::uint8_t>& canvas, std::size_t width, std::size_t x0) {
  const auto& g = img.grid();
  const double lo = img.min();
  const double span = img.max() - lo;
  for (std::size_t iy = 0; iy < g.ny(); ++iy) {
    const std::size_t row = g.ny() - 1 - iy;
    for (std::size_t ix = 0; ix < g.nx(); ++ix) {
      const double v = span > 0.0 ? (img.at(ix, iy) - lo) / span : 0.0;
      canvas[row * width + x0 + ix] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const HeatImage& img) {
  const auto& g = img.grid();
  std::vector<std::uint8_t> canvas(g.size());
  paint(img, canvas, g.nx(), 0);
  write_gray_png(path, g.nx(), g.ny(), canvas);
}

void write_png_strip(const std::filesystem::path& path, std::span<const HeatImage> images, std::size_t gap) {
  if (images.empty()) throw std::invalid_argument("an image strip needs at least one image");
  const std::size_t nx = images[0].grid().nx();
  const std::size_t ny = images[0].grid().ny();
  for (const auto& img : images) {
    if (img.grid().nx() != nx || img.grid().ny() != ny) throw std::invalid_argument("strip images differ in size");
  }
  const std::size_t width = images.size() * nx + (images.size() - 1) * gap;
  std::vector<std::uint8_t> canvas(width * ny, 255);
  for (std::size_t k = 0; k < images.size(); ++k) paint(images[k], canvas, width, k * (nx + gap));
  write_gray_png(path, width, ny, canvas);
}

Sinogram import_raw(const std::filesystem::path& path, const RingGeometry& geometry, const Medium& medium,
                    const Acquisition& acquisition, RawLayout layout) {
  medium.validate();
  acquisition.validate();
  const std::size_t ne = geometry.num_elements();
  const std::size_t ns = acquisition.num_samples;
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw std::runtime_error("cannot open " + path.string());
  if (bytes != ne * ns * 4) {
    throw FormatError(path.string() + ": expected " + std::to_string(ne * ns * 4) + " bytes for " +
                      std::to_string(ne) + " elements x " + std::to_string(ns) + " samples, found " +
                      std::to_string(bytes));
  }
  auto is = open_in(path);
  Sinogram sino(geometry, medium, acquisition);
  for (std::size_t k = 0; k < ne * ns; ++k) {
    const auto v = static_cast<double>(binary::get_f32(is));
    if (layout == RawLayout::element_major) {
      sino.at(k / ns, k % ns) = v;
    } else {
      sino.at(k % ne, k / ne) = v;
    }
  }
  return sino;
}

}  // namespace pact
