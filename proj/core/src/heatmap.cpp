#include "vcf/heatmap.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "vcf/image_io.hpp"
#include "vcf/volume.hpp"

namespace vcf {

std::size_t Heatmap::argmax() const {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Heatmap occlusion_heatmap(cls::CnnModel& model, std::span<const float> patch, int window, int stride, float fill) {
  constexpr int n = cls::kPatchSize;
  if (patch.size() != static_cast<std::size_t>(n * n)) throw std::invalid_argument("heatmap needs a 32x32 patch");
  if (window < 1 || window > n || stride < 1) throw std::invalid_argument("heatmap window must lie in [1, 32], stride >= 1");

  std::vector<int> starts;
  for (int s = 0; s + window <= n; s += stride) starts.push_back(s);
  if (starts.back() + window < n) starts.push_back(n - window);

  std::vector<std::vector<float>> occluded;
  occluded.reserve(starts.size() * starts.size());
  for (int r0 : starts)
    for (int c0 : starts) {
      std::vector<float> p(patch.begin(), patch.end());
      for (int r = r0; r < r0 + window; ++r)
        std::fill_n(p.begin() + r * n + c0, window, fill);
      occluded.push_back(std::move(p));
    }
  std::vector<std::span<const float>> views{patch};
  for (const auto& p : occluded) views.emplace_back(p);
  const auto probs = cls::predict_patches(model, views);

  std::vector<double> drop(n * n, 0.0), cover(n * n, 0.0);
  std::size_t k = 1;
  for (int r0 : starts)
    for (int c0 : starts) {
      const double d = probs[0] - probs[k++];
      for (int r = r0; r < r0 + window; ++r)
        for (int c = c0; c < c0 + window; ++c) {
          drop[r * n + c] += d;
          cover[r * n + c] += 1.0;
        }
    }
  Heatmap h;
  h.method = "occlusion";
  h.base_probability = probs[0];
  h.window = window;
  h.stride = stride;
  h.values.assign(n * n, 0.0f);
  double peak = 0.0;
  for (std::size_t i = 0; i < drop.size(); ++i) {
    drop[i] = std::max(0.0, drop[i] / cover[i]);
    peak = std::max(peak, drop[i]);
  }
  if (peak >= 1e-6)
    for (std::size_t i = 0; i < drop.size(); ++i) h.values[i] = static_cast<float>(drop[i] / peak);
  return h;
}

std::string heatmap_json(const Heatmap& h) {
  nlohmann::ordered_json j;
  j["method"] = h.method;
  j["window"] = h.window;
  j["stride"] = h.stride;
  j["size"] = h.size;
  j["base_probability"] = h.base_probability;
  j["argmax"] = {{"row", h.argmax() / h.size}, {"col", h.argmax() % h.size}};
  auto& rows = j["values"] = nlohmann::ordered_json::array();
  for (int r = 0; r < h.size; ++r)
    rows.push_back(std::vector<float>(h.values.begin() + r * h.size, h.values.begin() + (r + 1) * h.size));
  return j.dump() + "\n";
}

void write_heatmap(const std::filesystem::path& base, const Heatmap& h) {
  std::vector<std::uint8_t> grey(h.values.size());
  for (std::size_t i = 0; i < grey.size(); ++i) grey[i] = to_grey(h.values[i], 0.0, 1.0);
  auto pgm = base, json = base;
  pgm += ".pgm";
  json += ".json";
  write_file_atomic(pgm, encode_pgm(h.size, h.size, grey));
  write_file_atomic(json, heatmap_json(h));
}

}  // namespace vcf
