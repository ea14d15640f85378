#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vcf::cls {

/// Per-patch fracture probabilities for one study, cranial to caudal.
struct ProbabilityVector {
  std::string study_id;
  std::vector<double> values;
  std::optional<int> label;  ///< 1 positive, 0 negative

  /// Throws std::invalid_argument when empty or a value lies outside [0, 1].
  void validate() const;
};

/// One line per study: `study_id,label,p1;p2;...` with label `positive`,
/// `negative` or empty. Header line `study_id,label,probabilities`.
std::string format_probability_csv(const std::vector<ProbabilityVector>& vectors);
std::vector<ProbabilityVector> parse_probability_csv(const std::string& text);

void write_probability_csv(const std::filesystem::path& path, const std::vector<ProbabilityVector>& vectors);
std::vector<ProbabilityVector> read_probability_csv(const std::filesystem::path& path);

}  // namespace vcf::cls
