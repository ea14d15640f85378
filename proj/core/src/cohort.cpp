#include "vcf/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vcf/error.hpp"
#include "vcf/volume.hpp"

namespace vcf::cohort {

namespace fs = std::filesystem;

std::string format_manifest(const std::vector<StudyRecord>& records) {
  std::string out = "study_id,age,sex,label,volume_path\n";
  for (const auto& r : records) {
    out += r.study_id + ',' + std::to_string(r.age) + ',' + r.sex + ',' + (r.positive ? "positive" : "negative") +
           ',' + r.volume_path + '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto c = line.find(',', pos);
    out.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  return out;
}

}  // namespace

std::vector<StudyRecord> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<StudyRecord> out;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw IoError("manifest line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "study_id,age,sex,label,volume_path") fail("expected header 'study_id,age,sex,label,volume_path'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 5) fail("expected 5 fields, found " + std::to_string(f.size()));
    StudyRecord r;
    r.study_id = f[0];
    if (r.study_id.empty()) fail("empty study_id");
    try {
      std::size_t used = 0;
      r.age = std::stoi(f[1], &used);
      if (used != f[1].size()) fail("bad age '" + f[1] + "'");
    } catch (const std::logic_error&) {
      fail("bad age '" + f[1] + "'");
    }
    if (f[2] != "F" && f[2] != "M") fail("sex must be F or M");
    r.sex = f[2][0];
    if (f[3] == "positive") r.positive = true;
    else if (f[3] != "negative") fail("label must be positive or negative");
    r.volume_path = f[4];
    out.push_back(std::move(r));
  }
  if (lineno == 0) throw IoError("manifest is empty");
  try {
    validate_records(out);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<StudyRecord>& records) {
  validate_records(records);
  write_file_atomic(path, format_manifest(records));
}

std::vector<StudyRecord> read_manifest(const fs::path& path) { return parse_manifest(read_file(path)); }

fs::path resolve_volume(const fs::path& manifest_path, const StudyRecord& record) {
  const fs::path p(record.volume_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

void validate_records(const std::vector<StudyRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.age < 18 || r.age > 110) throw std::invalid_argument("study '" + r.study_id + "' has age outside [18, 110]");
    if (r.sex != 'F' && r.sex != 'M') throw std::invalid_argument("study '" + r.study_id + "' has unknown sex");
    if (!ids.insert(r.study_id).second) throw std::invalid_argument("duplicate study id '" + r.study_id + "'");
  }
}

namespace {

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column chosen for each row.
std::vector<std::size_t> hungarian(const std::vector<std::vector<long long>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  constexpr long long kInf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(m + 1, 0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<long long> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      long long delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j]) assignment[p[j] - 1] = j - 1;
  return assignment;
}

}  // namespace

std::vector<MatchedPair> match_pairs(const std::vector<StudyRecord>& records, int caliper_years) {
  if (caliper_years < 0) throw std::invalid_argument("caliper must be non-negative");
  validate_records(records);
  // Unmatched costs more than any sum of in-caliper distances; crossing the caliper is never chosen.
  constexpr long long kDrop = 1'000'000'000LL;
  constexpr long long kForbidden = 1'000'000'000'000LL;
  std::vector<MatchedPair> pairs;
  for (char sex : {'F', 'M'}) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].sex != sex) continue;
      (records[i].positive ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) continue;
    std::vector<std::vector<long long>> cost(pos.size(), std::vector<long long>(neg.size() + pos.size(), kDrop));
    for (std::size_t a = 0; a < pos.size(); ++a)
      for (std::size_t b = 0; b < neg.size(); ++b) {
        const int d = std::abs(records[pos[a]].age - records[neg[b]].age);
        cost[a][b] = d <= caliper_years ? d : kForbidden;
      }
    const auto assignment = hungarian(cost);
    for (std::size_t a = 0; a < pos.size(); ++a)
      if (assignment[a] < neg.size() && cost[a][assignment[a]] < kDrop) pairs.push_back({pos[a], neg[assignment[a]]});
  }
  std::sort(pairs.begin(), pairs.end(), [&](const MatchedPair& x, const MatchedPair& y) {
    return records[x.positive].study_id < records[y.positive].study_id;
  });
  return pairs;
}

std::vector<StudyRecord> balance_cohort(const std::vector<StudyRecord>& records, const BalanceConfig& config) {
  const bool any_pos = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.positive; });
  const bool any_neg = std::any_of(records.begin(), records.end(), [](const auto& r) { return !r.positive; });
  if (!any_pos || !any_neg) throw std::invalid_argument("balancing needs both positive and negative studies");
  if (config.max_mean_age_gap < 0.0) throw std::invalid_argument("mean age gap bound must be non-negative");

  auto pairs = match_pairs(records, config.caliper_years);
  long long diff_sum = 0;
  for (const auto& p : pairs) diff_sum += records[p.positive].age - records[p.negative].age;
  // Drop the pair pulling hardest in the direction of the gap until the gap is within bound.
  while (!pairs.empty() &&
         std::abs(static_cast<double>(diff_sum)) > config.max_mean_age_gap * static_cast<double>(pairs.size())) {
    const int sign = diff_sum > 0 ? 1 : -1;
    std::size_t worst = 0;
    int worst_d = std::numeric_limits<int>::min();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const int d = sign * (records[pairs[i].positive].age - records[pairs[i].negative].age);
      if (d > worst_d) {
        worst_d = d;
        worst = i;
      }
    }
    diff_sum -= sign * worst_d;
    pairs.erase(pairs.begin() + static_cast<long>(worst));
  }
  std::vector<StudyRecord> out;
  out.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    out.push_back(records[p.positive]);
    out.push_back(records[p.negative]);
  }
  return out;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace

ClassDemographics summarize(const std::vector<StudyRecord>& records) {
  ClassDemographics d;
  d.count = records.size();
  if (records.empty()) return d;
  std::vector<double> all, female, male;
  for (const auto& r : records) {
    all.push_back(r.age);
    (r.sex == 'F' ? female : male).push_back(r.age);
  }
  d.female_fraction = static_cast<double>(female.size()) / static_cast<double>(records.size());
  d.male_fraction = static_cast<double>(male.size()) / static_cast<double>(records.size());
  mean_std(all, d.age_mean, d.age_std);
  mean_std(female, d.female_age_mean, d.female_age_std);
  mean_std(male, d.male_age_mean, d.male_age_std);
  return d;
}

Demographics demographics(const std::vector<StudyRecord>& records) {
  std::vector<StudyRecord> pos, neg;
  for (const auto& r : records) (r.positive ? pos : neg).push_back(r);
  return {summarize(pos), summarize(neg)};
}

std::string demographics_json(const Demographics& d) {
  auto one = [](const ClassDemographics& c) {
    nlohmann::ordered_json j;
    j["count"] = c.count;
    j["female_fraction"] = c.female_fraction;
    j["male_fraction"] = c.male_fraction;
    j["age_mean"] = c.age_mean;
    j["age_std"] = c.age_std;
    j["female_age_mean"] = c.female_age_mean;
    j["female_age_std"] = c.female_age_std;
    j["male_age_mean"] = c.male_age_mean;
    j["male_age_std"] = c.male_age_std;
    return j;
  };
  nlohmann::ordered_json j;
  j["positive"] = one(d.positive);
  j["negative"] = one(d.negative);
  j["age_mean_gap"] = std::abs(d.positive.age_mean - d.negative.age_mean);
  j["male_fraction_gap"] = std::abs(d.positive.male_fraction - d.negative.male_fraction);
  return j.dump(2) + "\n";
}

}  // namespace vcf::cohort
