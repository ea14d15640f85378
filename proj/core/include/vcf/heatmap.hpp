#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vcf/cnn.hpp"

namespace vcf {

/// Normalised value of 40 HU soft tissue in the patch intensity window.
inline constexpr float kSoftTissueFill = static_cast<float>((40.0 + 100.0) / 1100.0);

struct Heatmap {
  int size = 32;
  std::vector<float> values;  ///< size x size in [0, 1]
  std::string method;
  double base_probability = 0.0;
  int window = 8;
  int stride = 4;

  /// Row-major index of the hottest pixel (first on ties).
  std::size_t argmax() const;
};

/// Occlusion sensitivity: a window x window square at each stride step is set
/// to `fill`; the drop in fracture probability is averaged over the windows
/// covering each pixel, clamped at 0 and scaled to max 1. A map whose largest
/// drop is under 1e-6 is all zeros. Throws std::invalid_argument on bad shapes.
Heatmap occlusion_heatmap(cls::CnnModel& model, std::span<const float> patch, int window = 8, int stride = 4,
                          float fill = kSoftTissueFill);

std::string heatmap_json(const Heatmap& h);
/// Writes `<base>.pgm` and `<base>.json`.
void write_heatmap(const std::filesystem::path& base, const Heatmap& h);

}  // namespace vcf
