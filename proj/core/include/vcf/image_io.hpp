#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace vcf {

/// Encodes an 8-bit greyscale image as binary PGM (P5).
std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels);
void write_pgm(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> pixels);

/// Maps `value` linearly from [lo, hi] onto [0, 255] with clamping.
std::uint8_t to_grey(double value, double lo, double hi);

}  // namespace vcf
