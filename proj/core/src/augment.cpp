#include "vcf/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vcf::cls {

std::vector<float> augment_patch(std::span<const float> patch, int size, double angle_degrees, float fill) {
  if (!(std::abs(angle_degrees) <= kMaxRotationDegrees))
    throw std::invalid_argument("rotation angle must lie in [-18, 18] degrees");
  if (size <= 0 || patch.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size))
    throw std::invalid_argument("augment_patch expects a size x size patch");

  const double theta = angle_degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double centre = 0.5 * (size - 1);
  const double last = size - 1;
  constexpr double kEdge = 1e-9;

  std::vector<float> out(patch.size(), fill);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dx = c - centre;
      const double dy = r - centre;
      const double sx = centre + cs * dx + sn * dy;
      const double sy = centre - sn * dx + cs * dy;
      if (sx < -kEdge || sy < -kEdge || sx > last + kEdge || sy > last + kEdge) continue;
      const double cx = std::clamp(sx, 0.0, last);
      const double cy = std::clamp(sy, 0.0, last);
      const int x0 = static_cast<int>(std::floor(cx));
      const int y0 = static_cast<int>(std::floor(cy));
      const int x1 = std::min(x0 + 1, size - 1);
      const int y1 = std::min(y0 + 1, size - 1);
      const double fx = cx - x0;
      const double fy = cy - y0;
      auto px = [&](int y, int x) { return static_cast<double>(patch[static_cast<std::size_t>(y) * size + x]); };
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                       fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
      out[static_cast<std::size_t>(r) * size + c] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace vcf::cls
