#pragma once

#include <span>
#include <vector>

namespace vcf::cls {

inline constexpr double kMaxRotationDegrees = 18.0;

/// Rotates a square patch about its centre by `angle_degrees` (counter-clockwise
/// in row-up display), resampling bilinearly. Pixels whose source falls outside
/// the patch take `fill`. No flips, crops or intensity changes are applied.
/// Throws std::invalid_argument for |angle| > 18 degrees.
std::vector<float> augment_patch(std::span<const float> patch, int size, double angle_degrees, float fill = 0.0f);

}  // namespace vcf::cls
