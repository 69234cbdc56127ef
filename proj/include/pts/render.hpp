#pragma once

// Flat-fill rasterization (pixel-center sampling, no anti-aliasing) and a
// reproducible PNG writer: fixed zlib level, a single row filter, and no
// ancillary chunks, so identical buffers always produce identical bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>
#include <zlib.h>

#include "pts/error.hpp"
#include "pts/geometry.hpp"
#include "pts/scenegen.hpp"

namespace pts {

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
  friend bool operator==(Rgb, Rgb) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB8

  ImageBuffer() = default;
  ImageBuffer(int w, int h, Rgb fill = kWhite)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = fill.r;
      pixels[i + 1] = fill.g;
      pixels[i + 2] = fill.b;
    }
  }

  Rgb at(int x, int y) const {
    const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
    return {pixels[o], pixels[o + 1], pixels[o + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[o] = c.r;
    pixels[o + 1] = c.g;
    pixels[o + 2] = c.b;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

inline Rgb color_rgb(const std::string& name) {
  const PaletteColor* c = find_palette_color(name);
  if (c == nullptr) throw Error(Errc::invalid_scene, "unknown color '" + name + "'");
  return {c->r, c->g, c->b};
}

// Fills `shape` into `img` at every pixel whose center lies inside it.
// Returns the number of pixels written.
inline std::size_t fill_shape(ImageBuffer& img, const Shape& shape, Rgb color) {
  const Bounds b = bounds(shape);
  const int x0 = std::max(0, static_cast<int>(std::floor(b.min_x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.min_y - 0.5)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(b.max_x)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(b.max_y)));

  std::vector<Vec2> poly;
  if (shape.kind() != ShapeKind::circle && shape.kind() != ShapeKind::rectangle) {
    poly = vertices(shape);
  }
  auto inside = [&](Vec2 p) {
    if (poly.empty()) return contains(shape, p);
    return point_in_polygon(poly, p);
  };

  std::size_t count = 0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (inside({x + 0.5, y + 0.5})) {
        img.set(x, y, color);
        ++count;
      }
    }
  }
  return count;
}

inline ImageBuffer rasterize(const Scene& scene, const SceneLimits& limits = {}) {
  const auto violations = validate_scene(scene, limits);
  if (!violations.empty()) {
    std::string report;
    for (const auto& v : violations) report += "\n  " + format_violation(v);
    throw Error(Errc::invalid_scene, "refusing to render invalid scene:" + report);
  }
  ImageBuffer img(scene.width, scene.height);
  for (const auto& shape : scene.shapes) fill_shape(img, shape, color_rgb(shape.color));
  return img;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char* type,
                      const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw Error(Errc::invalid_config, "image buffer dimensions do not match its pixels");
  }
  // Each scanline is prefixed with filter type 2 (Up).
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(2);
    const std::uint8_t* row = img.pixels.data() + y * stride;
    const std::uint8_t* prev = y > 0 ? row - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      raw.push_back(static_cast<std::uint8_t>(row[i] - (prev ? prev[i] : 0)));
    }
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error(Errc::io, "zlib compression failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, truecolor, deflate, adaptive, no interlace
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", packed);
  detail::put_chunk(out, "IEND", {});
  return out;
}

inline void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw Error(Errc::io, "write failed for '" + path.string() + "'");
}

inline void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  write_file(path, bytes.data(), bytes.size());
}

// Decoding goes through libpng, independent of the encoder above.
inline ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(Errc::io, std::string("png decode: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageBuffer img;
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(Errc::io, std::string("png decode: ") + image.message);
  }
  return img;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

}  // namespace pts
