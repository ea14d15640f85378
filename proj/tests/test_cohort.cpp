#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vcf/cohort.hpp"
#include "vcf/error.hpp"
#include "vcf/rng.hpp"

using namespace vcf;
using namespace vcf::cohort;

namespace {

StudyRecord rec(const std::string& id, int age, char sex, bool positive) {
  return {id, age, sex, positive, id + ".vcfv"};
}

/// Random manifest; positives skew older and more female than negatives.
std::vector<StudyRecord> skewed(std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<StudyRecord> out;
  for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
    const bool pos = i < n_pos;
    const double mean = pos ? 74.0 : 62.0;
    const int age = std::clamp(static_cast<int>(std::lround(rng.normal(mean, 10.0))), 50, 100);
    const char sex = rng.bernoulli(pos ? 0.7 : 0.5) ? 'F' : 'M';
    char id[16];
    std::snprintf(id, sizeof id, "R%04zu", i);
    out.push_back(rec(id, age, sex, pos));
  }
  Rng order(seed + 1);
  order.shuffle(std::span<StudyRecord>(out));
  return out;
}

vcf::testing::oracle::MatchScore score_of(const std::vector<StudyRecord>& records,
                                          const std::vector<MatchedPair>& pairs) {
  vcf::testing::oracle::MatchScore s;
  for (const auto& p : pairs) {
    ++s.pairs;
    s.total_age_gap += std::abs(records[p.positive].age - records[p.negative].age);
  }
  return s;
}

}  // namespace

// manifest

TEST(Manifest, RoundTrip) {
  const std::vector<StudyRecord> r{rec("A1", 55, 'F', true), rec("B2", 81, 'M', false)};
  const auto text = format_manifest(r);
  EXPECT_EQ(text, "study_id,age,sex,label,volume_path\nA1,55,F,positive,A1.vcfv\nB2,81,M,negative,B2.vcfv\n");
  EXPECT_EQ(parse_manifest(text), r);
  vcf::testing::TempDir dir("manifest");
  write_manifest(dir / "m.csv", r);
  EXPECT_EQ(read_manifest(dir / "m.csv"), r);
}

TEST(Manifest, ToleratesCrlfAndBlankLines) {
  const auto r = parse_manifest("study_id,age,sex,label,volume_path\r\nA,60,F,negative,a.vcfv\r\n\r\n");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].volume_path, "a.vcfv");
}

TEST(Manifest, ParseErrors) {
  const std::string h = "study_id,age,sex,label,volume_path\n";
  EXPECT_THROW(parse_manifest(""), IoError);
  EXPECT_THROW(parse_manifest("id,age\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,60,F,negative\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,sixty,F,negative,a\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,60x,F,negative,a\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,60,X,negative,a\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,60,F,maybe,a\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,17,F,negative,a\n"), IoError);
  EXPECT_THROW(parse_manifest(h + "A,60,F,negative,a\nA,61,M,positive,b\n"), IoError);
  try {
    parse_manifest(h + "A,60,F,negative,a\nB,60,F,nope,b\n");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  vcf::testing::TempDir dir("manifest_err");
  EXPECT_THROW(read_manifest(dir / "none.csv"), IoError);
}

TEST(Manifest, ValidationAndPaths) {
  EXPECT_THROW(validate_records({rec("A", 111, 'F', true)}), std::invalid_argument);
  EXPECT_THROW(validate_records({rec("A", 60, 'U', true)}), std::invalid_argument);
  EXPECT_THROW(validate_records({rec("A", 60, 'F', true), rec("A", 61, 'F', false)}), std::invalid_argument);
  EXPECT_NO_THROW(validate_records({rec("A", 18, 'F', true), rec("B", 110, 'M', false)}));
  EXPECT_EQ(resolve_volume("/data/m.csv", rec("A", 60, 'F', true)), std::filesystem::path("/data/A.vcfv"));
  auto abs = rec("A", 60, 'F', true);
  abs.volume_path = "/vol/x.vcfv";
  EXPECT_EQ(resolve_volume("/data/m.csv", abs), std::filesystem::path("/vol/x.vcfv"));
}

// balancing

TEST(Balance, PerfectlyPairedInputIsUnchanged) {
  std::vector<StudyRecord> r;
  for (int i = 0; i < 6; ++i) {
    const char sex = i % 2 ? 'M' : 'F';
    r.push_back(rec("P" + std::to_string(i), 55 + 5 * i, sex, true));
    r.push_back(rec("N" + std::to_string(i), 55 + 5 * i, sex, false));
  }
  const auto out = balance_cohort(r);
  ASSERT_EQ(out.size(), r.size());
  auto sorted = [](std::vector<StudyRecord> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.study_id < b.study_id; });
    return v;
  };
  EXPECT_EQ(sorted(out), sorted(r));
  for (std::size_t i = 0; i < out.size(); i += 2) {
    EXPECT_TRUE(out[i].positive);
    EXPECT_FALSE(out[i + 1].positive);
    EXPECT_EQ(out[i].age, out[i + 1].age);
  }
}

TEST(Balance, MatchingEqualsBruteForceOnFortyRecords) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto r = skewed(16, 24, seed);
    // the oracle enumerates negative subsets per sex
    std::size_t nf = 0, nm = 0;
    for (const auto& s : r)
      if (!s.positive) (s.sex == 'F' ? nf : nm) += 1;
    ASSERT_LE(std::max(nf, nm), 20u);
    const auto pairs = match_pairs(r, 10);
    const auto best = vcf::testing::oracle::brute_force_matching(r, 10);
    const auto got = score_of(r, pairs);
    EXPECT_EQ(got.pairs, best.pairs) << "seed " << seed;
    EXPECT_EQ(got.total_age_gap, best.total_age_gap) << "seed " << seed;
  }
}

TEST(Balance, PairsAreSameSexDistinctAndInsideCaliper) {
  const auto r = skewed(120, 280, 7);
  const auto pairs = match_pairs(r, 10);
  std::set<std::size_t> used;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    EXPECT_TRUE(r[p.positive].positive);
    EXPECT_FALSE(r[p.negative].positive);
    EXPECT_EQ(r[p.positive].sex, r[p.negative].sex);
    EXPECT_LE(std::abs(r[p.positive].age - r[p.negative].age), 10);
    EXPECT_TRUE(used.insert(p.positive).second);
    EXPECT_TRUE(used.insert(p.negative).second);
    if (i) {
      EXPECT_LT(r[pairs[i - 1].positive].study_id, r[p.positive].study_id);
    }
  }
}

TEST(Balance, SkewedCohortGapsWithinBounds) {
  const auto r = skewed(140, 260, 8);
  const auto before = demographics(r);
  EXPECT_GT(std::abs(before.positive.age_mean - before.negative.age_mean), 5.0);
  const auto out = balance_cohort(r);
  ASSERT_GE(out.size(), 100u);
  std::set<std::string> ids;
  for (const auto& s : out) EXPECT_TRUE(ids.insert(s.study_id).second);
  const auto d = demographics(out);
  EXPECT_EQ(d.positive.count, d.negative.count);
  EXPECT_LE(std::abs(d.positive.age_mean - d.negative.age_mean), 2.0);
  EXPECT_LE(std::abs(d.positive.male_fraction - d.negative.male_fraction), 0.05);
}

TEST(Balance, Errors) {
  EXPECT_THROW(balance_cohort({rec("A", 60, 'F', true)}), std::invalid_argument);
  EXPECT_THROW(balance_cohort({rec("A", 60, 'F', false)}), std::invalid_argument);
  EXPECT_THROW(balance_cohort({}), std::invalid_argument);
  EXPECT_THROW(match_pairs({rec("A", 60, 'F', true)}, -1), std::invalid_argument);
  BalanceConfig bad;
  bad.max_mean_age_gap = -1.0;
  EXPECT_THROW(balance_cohort({rec("A", 60, 'F', true), rec("B", 60, 'F', false)}, bad), std::invalid_argument);
}

TEST(Balance, NoSameSexPartnerDropsPositive) {
  const auto out = balance_cohort({rec("A", 60, 'F', true), rec("B", 60, 'M', false), rec("C", 60, 'M', true)});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].study_id, "C");
  EXPECT_EQ(out[1].study_id, "B");
}

// demographics

TEST(Demographics, Examples) {
  const auto one = summarize({rec("A", 70, 'F', true)});
  EXPECT_EQ(one.count, 1u);
  EXPECT_DOUBLE_EQ(one.female_fraction, 1.0);
  EXPECT_DOUBLE_EQ(one.male_fraction, 0.0);
  EXPECT_DOUBLE_EQ(one.age_mean, 70.0);
  EXPECT_DOUBLE_EQ(one.age_std, 0.0);

  const auto two = summarize({rec("A", 60, 'F', true), rec("B", 80, 'M', true)});
  EXPECT_DOUBLE_EQ(two.age_mean, 70.0);
  EXPECT_DOUBLE_EQ(two.age_std, 10.0);
  EXPECT_DOUBLE_EQ(two.female_fraction + two.male_fraction, 1.0);
  EXPECT_DOUBLE_EQ(two.female_age_mean, 60.0);
  EXPECT_DOUBLE_EQ(two.male_age_mean, 80.0);
}

TEST(Demographics, SplitsByClassAndSerialises) {
  const auto d = demographics({rec("A", 60, 'F', true), rec("B", 80, 'M', false), rec("C", 70, 'M', false)});
  EXPECT_EQ(d.positive.count, 1u);
  EXPECT_EQ(d.negative.count, 2u);
  EXPECT_DOUBLE_EQ(d.negative.age_mean, 75.0);
  EXPECT_DOUBLE_EQ(d.negative.male_fraction, 1.0);
  const auto json = demographics_json(d);
  EXPECT_NE(json.find("\"age_mean_gap\": 15.0"), std::string::npos);
  EXPECT_NE(json.find("\"male_fraction_gap\": 1.0"), std::string::npos);
}

// metrics

TEST(Metrics, HandComputedConfusion) {
  std::vector<double> p;
  std::vector<bool> y;
  auto add = [&](int n, double pred, bool label) {
    for (int i = 0; i < n; ++i) {
      p.push_back(pred);
      y.push_back(label);
    }
  };
  add(5, 0.9, true);   // TP
  add(1, 0.2, true);   // FN
  add(8, 0.1, false);  // TN
  add(2, 0.7, false);  // FP
  const auto m = compute_metrics(p, y);
  EXPECT_EQ(m.tp, 5u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 8u);
  EXPECT_EQ(m.fp, 2u);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8125);
  EXPECT_NEAR(m.sensitivity, 0.8333, 1e-4);
  EXPECT_DOUBLE_EQ(m.specificity, 0.8);
}

TEST(Metrics, DegenerateCases) {
  const auto perfect = compute_metrics({0.9, 0.1, 0.6}, {true, false, true});
  EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(perfect.sensitivity, 1.0);
  EXPECT_DOUBLE_EQ(perfect.specificity, 1.0);
  const auto all_neg = compute_metrics({0.1, 0.2, 0.3, 0.4}, {true, false, true, false});
  EXPECT_DOUBLE_EQ(all_neg.sensitivity, 0.0);
  EXPECT_DOUBLE_EQ(all_neg.specificity, 1.0);
  EXPECT_EQ(compute_metrics({0.5}, {true}).tp, 1u);  // threshold is inclusive
  EXPECT_DOUBLE_EQ(compute_metrics({0.5}, {true}).specificity, 0.0);
}

TEST(Metrics, IdentitiesMatchDirectCounting) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> p(n);
    std::vector<bool> y(n);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.bernoulli(0.4);
      const bool pred = p[i] >= 0.5;
      tp += pred && y[i];
      fp += pred && !y[i];
      tn += !pred && !y[i];
      fn += !pred && y[i];
    }
    const auto m = compute_metrics(p, y);
    ASSERT_EQ(m.tp, tp);
    ASSERT_EQ(m.fp, fp);
    ASSERT_EQ(m.tn, tn);
    ASSERT_EQ(m.fn, fn);
    EXPECT_EQ(m.total(), n);
    EXPECT_EQ(m.accuracy, static_cast<double>(tp + tn) / static_cast<double>(n));
    if (tp + fn) {
      EXPECT_EQ(m.sensitivity, static_cast<double>(tp) / static_cast<double>(tp + fn));
    }
    if (tn + fp) {
      EXPECT_EQ(m.specificity, static_cast<double>(tn) / static_cast<double>(tn + fp));
    }
    for (double v : {m.accuracy, m.sensitivity, m.specificity}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, Errors) {
  EXPECT_THROW(compute_metrics({}, {}), std::invalid_argument);
  EXPECT_THROW(compute_metrics({0.1, 0.2}, {true}), std::invalid_argument);
}

TEST(Metrics, RocAuc) {
  EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.4, 0.6, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.6, 0.4, 0.1}, {false, false, true, true}), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.5, 0.5}, {false, true}), 0.5);
  // pairs (pos, neg): (0.8 > 0.3), (0.8 > 0.5), (0.4 > 0.3), (0.4 < 0.5) -> 3 / 4
  EXPECT_DOUBLE_EQ(roc_auc({0.8, 0.4, 0.3, 0.5}, {true, true, false, false}), 0.75);
  EXPECT_THROW(roc_auc({0.1, 0.2}, {true, true}), std::invalid_argument);
  EXPECT_THROW(roc_auc({0.1}, {true, false}), std::invalid_argument);
}
