#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vcf/nn/tensor.hpp"

namespace vcf::nn {

/// A tensor to perturb and the analytic gradient computed for it beforehand.
struct GradTarget {
  std::string name;
  Tensor<double>* value = nullptr;
  const Tensor<double>* analytic = nullptr;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// 0 probes every element; otherwise a seeded random subset of this size.
  std::size_t max_probes_per_target = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the relative-error denominator, so two near-zero
  /// gradients do not produce a large ratio.
  double denominator_floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  std::size_t skipped = 0;
  std::string worst_target;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Central differences (L(v + eps) - L(v - eps)) / 2 eps against the stored
/// analytic gradient, one element at a time. When `signature` is given, a probe
/// whose perturbed passes change the activation pattern (a relu sign or a pool
/// winner) is skipped. Throws std::domain_error on a non-finite loss or gradient.
GradCheckResult grad_check(const std::function<double()>& loss, const std::vector<GradTarget>& targets,
                           const GradCheckOptions& options = {},
                           const std::function<std::vector<std::uint32_t>()>& signature = {});

}  // namespace vcf::nn
