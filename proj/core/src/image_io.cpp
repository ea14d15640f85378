#include "vcf/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vcf/volume.hpp"

namespace vcf {

std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("pgm pixel count does not match dimensions");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> pixels) {
  write_file_atomic(path, encode_pgm(width, height, pixels));
}

std::uint8_t to_grey(double value, double lo, double hi) {
  const double t = std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

}  // namespace vcf
