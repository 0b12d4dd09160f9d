#pragma once

#include <cstdint>
#include <filesystem>

#include "datamodel.hpp"

namespace mduit {

// [-1, 1] <-> 8-bit by the linear map v = u / 127.5 - 1.
std::uint8_t to_u8(double v);
double from_u8(std::uint8_t u);

// 8-bit RGB PNG. Grayscale and alpha inputs are converted on read.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Image after an 8-bit round trip, without touching the filesystem.
Image quantize_u8(const Image& image);

}  // namespace mduit
