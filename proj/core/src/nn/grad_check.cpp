#include "vcf/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vcf/rng.hpp"

namespace vcf::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss, const std::vector<GradTarget>& targets,
                           const GradCheckOptions& options,
                           const std::function<std::vector<std::uint32_t>()>& signature) {
  GradCheckResult result;
  Rng rng(options.seed);
  const double eps = options.epsilon;

  std::vector<std::uint32_t> base_signature;
  if (signature) {
    loss();
    base_signature = signature();
  }

  for (const auto& target : targets) {
    if (!target.value || !target.analytic || target.value->size() != target.analytic->size())
      throw std::invalid_argument("grad_check target '" + target.name + "' is malformed");
    if (!target.analytic->all_finite()) throw std::domain_error("non-finite analytic gradient in " + target.name);

    std::vector<std::size_t> indices(target.value->size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_probes_per_target > 0 && indices.size() > options.max_probes_per_target) {
      rng.shuffle(std::span<std::size_t>(indices));
      indices.resize(options.max_probes_per_target);
      std::sort(indices.begin(), indices.end());
    }

    for (std::size_t idx : indices) {
      double& v = (*target.value)[idx];
      const double saved = v;
      v = saved + eps;
      const double plus = loss();
      const bool plus_same = !signature || signature() == base_signature;
      v = saved - eps;
      const double minus = loss();
      const bool minus_same = !signature || signature() == base_signature;
      v = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw std::domain_error("non-finite loss while probing " + target.name);
      if (!plus_same || !minus_same) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = (*target.analytic)[idx];
      const double err = relative_error(analytic, numeric, options.denominator_floor);
      ++result.probes;
      if (err > result.max_relative_error || result.probes == 1) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_target = target.name;
          result.worst_index = idx;
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  if (signature) loss();  // leave layer caches at the unperturbed point
  return result;
}

}  // namespace vcf::nn
