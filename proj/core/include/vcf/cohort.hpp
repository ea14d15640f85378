#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace vcf::cohort {

struct StudyRecord {
  std::string study_id;
  int age = 0;       ///< years, in [18, 110]
  char sex = 'F';    ///< 'F' or 'M'
  bool positive = false;
  std::string volume_path;  ///< relative to the manifest's directory unless absolute

  friend bool operator==(const StudyRecord&, const StudyRecord&) = default;
};

/// Manifest CSV: header `study_id,age,sex,label,volume_path`, label is
/// `positive` or `negative`, UTF-8 with LF line endings.
std::string format_manifest(const std::vector<StudyRecord>& records);
std::vector<StudyRecord> parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const std::vector<StudyRecord>& records);
std::vector<StudyRecord> read_manifest(const std::filesystem::path& path);

/// Resolves a record's volume path against the manifest location.
std::filesystem::path resolve_volume(const std::filesystem::path& manifest_path,
                                     const StudyRecord& record);

/// Throws std::invalid_argument on out-of-range age, unknown sex, or duplicate id.
void validate_records(const std::vector<StudyRecord>& records);

struct BalanceConfig {
  /// A positive is only paired with a same-sex negative within this many years.
  int caliper_years = 10;
  /// After matching, pairs are trimmed until the inter-class mean-age gap is at
  /// most this many years.
  double max_mean_age_gap = 1.0;
};

struct MatchedPair {
  std::size_t positive = 0;  ///< index into the input records
  std::size_t negative = 0;
};

/// Same-sex nearest-age matching: within each sex, the assignment of positives
/// to distinct negatives that first maximises the number of pairs inside the
/// caliper and then minimises the total absolute age difference. Pairs are
/// returned sorted by positive study id.
std::vector<MatchedPair> match_pairs(const std::vector<StudyRecord>& records, int caliper_years);

/// Age- and sex-balanced subset: matched pairs, trimmed to the mean-age gap
/// bound, returned as interleaved (positive, negative) records.
std::vector<StudyRecord> balance_cohort(const std::vector<StudyRecord>& records,
                                        const BalanceConfig& config = {});

struct ClassDemographics {
  std::size_t count = 0;
  double female_fraction = 0.0;
  double male_fraction = 0.0;
  double age_mean = 0.0;
  double age_std = 0.0;  ///< population standard deviation
  double female_age_mean = 0.0;
  double female_age_std = 0.0;
  double male_age_mean = 0.0;
  double male_age_std = 0.0;
};

struct Demographics {
  ClassDemographics positive;
  ClassDemographics negative;
};

ClassDemographics summarize(const std::vector<StudyRecord>& records);
Demographics demographics(const std::vector<StudyRecord>& records);
std::string demographics_json(const Demographics& d);

struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  double sensitivity = 0.0;  ///< 0 when there are no positives
  double specificity = 0.0;  ///< 0 when there are no negatives

  std::size_t total() const { return tp + fp + tn + fn; }
};

/// A prediction p counts as positive when p >= threshold.
Metrics compute_metrics(const std::vector<double>& predictions, const std::vector<bool>& labels,
                        double threshold = 0.5);

/// Area under the ROC curve (Mann-Whitney statistic, ties count one half).
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

}  // namespace vcf::cohort
