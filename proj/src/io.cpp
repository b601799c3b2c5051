#include "screcon/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace screcon {

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

std::uint32_t swap32(std::uint32_t v) {
  return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

DepthMap read_pfm(const std::string& path, DepthStage stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open depth file", path);
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (!in || (magic != "Pf" && magic != "PF")) fail("not a PFM file", path);
  if (magic == "PF") fail("color PFM is not supported (expected single channel)", path);
  if (width < 1 || height < 1) fail("bad PFM dimensions", path);
  if (scale == 0.0) fail("bad PFM scale", path);
  in.get();  // single whitespace byte separating header from samples

  const bool file_little = scale < 0.0;
  const bool host_little = std::endian::native == std::endian::little;
  std::vector<float> row(static_cast<std::size_t>(width));
  DepthMap depth(width, height, stage);
  // PFM stores rows bottom-to-top.
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) fail("truncated PFM data", path);
    for (int x = 0; x < width; ++x) {
      float v = row[static_cast<std::size_t>(x)];
      if (file_little != host_little) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        bits = swap32(bits);
        std::memcpy(&v, &bits, 4);
      }
      depth.at(x, y) = static_cast<double>(v);
    }
  }
  depth.refresh_validity(kDepthEpsilon);
  return depth;
}

void write_pfm(const std::string& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write depth file", path);
  const bool host_little = std::endian::native == std::endian::little;
  out << "Pf\n" << depth.width() << " " << depth.height() << "\n"
      << (host_little ? "-1.0" : "1.0") << "\n";
  std::vector<float> row(static_cast<std::size_t>(depth.width()));
  for (int y = depth.height() - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width(); ++x)
      row[static_cast<std::size_t>(x)] = static_cast<float>(depth.at(x, y));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail("short write", path);
}

ImageBuffer read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open image", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("corrupt PNG", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize to 8-bit gray or RGB without alpha.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported PNG channel layout", path);
  }
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  pixels.resize(stride * static_cast<std::size_t>(height));
  row_ptrs.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) row_ptrs[static_cast<std::size_t>(y)] = &pixels[stride * y];
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageBuffer img(width, height, channels);
  const std::size_t n = pixels.size();
  for (std::size_t i = 0; i < n; ++i) img.data()[i] = pixels[i] / 255.0;
  return img;
}

void write_png(const std::string& path, const ImageBuffer& image) {
  if (image.channels() != 1 && image.channels() != 3)
    throw std::invalid_argument("write_png: only gray or RGB images");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot write image", path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  const int width = image.width(), height = image.height(), channels = image.channels();
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<png_byte> pixels(stride * static_cast<std::size_t>(height));
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(image.data()[i]);
  for (int y = 0; y < height; ++y) row_ptrs[static_cast<std::size_t>(y)] = &pixels[stride * y];

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG write failed", path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

ImageBuffer read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open image", path);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P6") fail("not a binary PPM", path);
  if (width < 1 || height < 1 || maxval != 255) fail("unsupported PPM variant", path);
  in.get();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!in) fail("truncated PPM data", path);
  ImageBuffer img(width, height, 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) img.data()[i] = pixels[i] / 255.0;
  return img;
}

void write_ppm(const std::string& path, const ImageBuffer& image) {
  if (image.channels() != 3) throw std::invalid_argument("write_ppm: RGB images only");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write image", path);
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<std::uint8_t> pixels(image.data().size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(image.data()[i]);
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) fail("short write", path);
}

ImageBuffer read_image(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  fail("unsupported image extension", path);
}

PixelMask mask_from_image(const ImageBuffer& image) {
  PixelMask mask(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      double sum = 0.0;
      for (int c = 0; c < image.channels(); ++c) sum += image.at(x, y, c);
      mask.set(x, y, sum / image.channels() >= 0.5);
    }
  return mask;
}

nlohmann::ordered_json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open JSON file", path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("invalid JSON (") + e.what() + ")", path);
  }
  return j;
}

void save_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) fail("cannot write JSON file", path);
  out << j.dump(2) << "\n";
  if (!out) fail("short write", path);
}

}  // namespace screcon
