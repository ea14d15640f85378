#include "vcf/split.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <unordered_set>

#include "vcf/rng.hpp"

namespace vcf::cls {

StudySplit split_by_study(const std::vector<cohort::StudyRecord>& records, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("validation fraction must lie in (0, 1)");
  cohort::validate_records(records);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) (records[i].positive ? pos : neg).push_back(i);
  const auto k = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(records.size()) / 2.0));
  if (k == 0 || k >= pos.size() || k >= neg.size())
    throw std::invalid_argument("too few studies of each class for a balanced validation set of " +
                                std::to_string(2 * k) + " (" + std::to_string(pos.size()) + " positive, " +
                                std::to_string(neg.size()) + " negative)");
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  std::unordered_set<std::size_t> chosen(pos.begin(), pos.begin() + static_cast<long>(k));
  chosen.insert(neg.begin(), neg.begin() + static_cast<long>(k));
  StudySplit out;
  for (std::size_t i = 0; i < records.size(); ++i) (chosen.count(i) ? out.val : out.train).push_back(records[i].study_id);
  return out;
}

}  // namespace vcf::cls
