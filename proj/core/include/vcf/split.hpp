#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcf/cohort.hpp"

namespace vcf::cls {

struct StudySplit {
  std::vector<std::string> train;  ///< manifest order
  std::vector<std::string> val;    ///< manifest order
};

/// Study-level split with a class-balanced validation side: round(fraction * N / 2)
/// studies of each class are drawn (seeded) into validation, everything else
/// trains. Throws std::invalid_argument unless 0 < fraction < 1 and each class
/// keeps at least one training study.
StudySplit split_by_study(const std::vector<cohort::StudyRecord>& records, double val_fraction, std::uint64_t seed);

}  // namespace vcf::cls
