#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "screcon/image.hpp"

namespace screcon {

// PFM: single-channel float map, header "Pf", dimensions line, scale line
// (negative scale means little-endian), rows stored bottom-to-top. Validity
// on read marks non-finite and near-zero entries invalid.
DepthMap read_pfm(const std::string& path, DepthStage stage);
void write_pfm(const std::string& path, const DepthMap& depth);

// PNG (8-bit; palette/16-bit/alpha inputs are normalized) and binary PPM.
// Samples map between bytes and [0, 1] doubles.
ImageBuffer read_png(const std::string& path);
void write_png(const std::string& path, const ImageBuffer& image);
ImageBuffer read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageBuffer& image);

// Reads rgb/NNNN.png or .ppm interchangeably by extension.
ImageBuffer read_image(const std::string& path);

// Eligibility mask from a grayscale image: bright pixels (mean sample
// >= 0.5) are eligible.
PixelMask mask_from_image(const ImageBuffer& image);

nlohmann::ordered_json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const nlohmann::ordered_json& j);

}  // namespace screcon
