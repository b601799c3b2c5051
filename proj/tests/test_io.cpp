#include <doctest.h>

#include <cstdint>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "screcon/io.hpp"
#include "screcon/rng.hpp"

using namespace screcon;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "screcon_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("PFM round-trip preserves float32 values, stage, and validity") {
  Rng rng(5);
  DepthMap d(7, 5, DepthStage::ScaleConsistent);
  for (auto& v : d.data()) v = rng.uniform(0.5, 4.0);
  d.at(3, 2) = 0.0;  // becomes invalid on read
  const auto path = temp_file("roundtrip.pfm").string();
  write_pfm(path, d);
  DepthMap back = read_pfm(path, DepthStage::ScaleConsistent);
  CHECK(back.width() == 7);
  CHECK(back.height() == 5);
  CHECK(back.stage() == DepthStage::ScaleConsistent);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      CHECK(back.at(x, y) == static_cast<double>(static_cast<float>(d.at(x, y))));
  CHECK_FALSE(back.valid(3, 2));
  CHECK(back.valid(0, 0));
}

TEST_CASE("PFM stores rows bottom to top with a negative little-endian scale") {
  DepthMap d(2, 2, DepthStage::AffineInvariant);
  d.at(0, 0) = 1.0;
  d.at(1, 0) = 2.0;
  d.at(0, 1) = 3.0;
  d.at(1, 1) = 4.0;
  const auto path = temp_file("layout.pfm").string();
  write_pfm(path, d);

  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w, h;
  double scale;
  in >> magic >> w >> h >> scale;
  in.get();
  CHECK(magic == "Pf");
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(scale < 0.0);
  float vals[4];
  in.read(reinterpret_cast<char*>(vals), sizeof vals);
  REQUIRE(in.good());
  // First stored row is the bottom image row (y = height-1).
  CHECK(vals[0] == 3.0f);
  CHECK(vals[1] == 4.0f);
  CHECK(vals[2] == 1.0f);
  CHECK(vals[3] == 2.0f);
}

TEST_CASE("PFM rejects missing files and wrong magic") {
  CHECK_THROWS_AS(read_pfm("/nonexistent/depth.pfm", DepthStage::AffineInvariant),
                  std::runtime_error);
  const auto path = temp_file("bad.pfm").string();
  std::ofstream(path) << "P6\n2 2\n255\n";
  CHECK_THROWS_AS(read_pfm(path, DepthStage::AffineInvariant), std::runtime_error);
}

TEST_CASE("PNG round-trip is exact at 8-bit resolution") {
  Rng rng(9);
  ImageBuffer img(9, 6, 3);
  for (auto& v : img.data()) v = rng.uniform(0.0, 1.0);
  const auto path = temp_file("roundtrip.png").string();
  write_png(path, img);
  ImageBuffer back = read_png(path);
  CHECK(back.width() == 9);
  CHECK(back.height() == 6);
  CHECK(back.channels() == 3);
  for (std::size_t i = 0; i < img.data().size(); ++i)
    CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255.0 + 1e-12);

  // A second write of identical content is byte-identical (determinism).
  const auto path2 = temp_file("roundtrip2.png").string();
  write_png(path2, img);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("grayscale PNG round-trip") {
  ImageBuffer gray(4, 3, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) gray.at(x, y, 0) = (x + y) / 6.0;
  const auto path = temp_file("gray.png").string();
  write_png(path, gray);
  ImageBuffer back = read_png(path);
  CHECK(back.channels() == 1);
  CHECK(back.at(3, 2, 0) == doctest::Approx(5.0 / 6.0).epsilon(1.0 / 200.0));
}

TEST_CASE("PPM round-trip is exact at 8-bit resolution") {
  Rng rng(10);
  ImageBuffer img(5, 4, 3);
  for (auto& v : img.data()) v = rng.uniform(0.0, 1.0);
  const auto path = temp_file("roundtrip.ppm").string();
  write_ppm(path, img);
  ImageBuffer back = read_ppm(path);
  CHECK(back.width() == 5);
  CHECK(back.height() == 4);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    const double quantized = std::lround(std::clamp(img.data()[i], 0.0, 1.0) * 255.0) / 255.0;
    CHECK(back.data()[i] == doctest::Approx(quantized).epsilon(1e-12));
  }
}

TEST_CASE("read_image dispatches on extension") {
  ImageBuffer img(3, 3, 3);
  for (auto& v : img.data()) v = 0.25;
  const auto png_path = temp_file("dispatch.png").string();
  const auto ppm_path = temp_file("dispatch.ppm").string();
  write_png(png_path, img);
  write_ppm(ppm_path, img);
  CHECK(read_image(png_path).width() == 3);
  CHECK(read_image(ppm_path).width() == 3);
  CHECK_THROWS_AS(read_image("frame.jpg"), std::runtime_error);
}

TEST_CASE("mask_from_image thresholds at mid gray") {
  ImageBuffer img(2, 1, 1);
  img.at(0, 0, 0) = 0.2;
  img.at(1, 0, 0) = 0.8;
  PixelMask mask = mask_from_image(img);
  CHECK_FALSE(mask.eligible(0, 0));
  CHECK(mask.eligible(1, 0));
}

TEST_CASE("JSON file round-trip") {
  nlohmann::ordered_json j;
  j["fx"] = 57.6;
  j["fy"] = 57.6;
  j["cx"] = 32.0;
  j["cy"] = 24.0;
  const auto path = temp_file("intrinsics.json").string();
  save_json_file(path, j);
  nlohmann::ordered_json back = load_json_file(path);
  CHECK(back["fx"].get<double>() == 57.6);
  CHECK(back == j);
  CHECK_THROWS_AS(load_json_file("/nonexistent/x.json"), std::runtime_error);
  const auto bad = temp_file("bad.json").string();
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(load_json_file(bad), std::runtime_error);
}
