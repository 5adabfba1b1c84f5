#include "helpers.hpp"
#include "oracles.hpp"

#include "hkg/analysis.hpp"
#include "hkg/synthgen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace hkg;
using namespace hkg::test;

namespace {

DiseaseCovariates covariates_with(const std::vector<double>& female) {
  DiseaseCovariates c;
  c.num_diseases_vocab = static_cast<Eigen::Index>(female.size());
  c.num_symptoms_vocab = 10;
  for (std::size_t k = 0; k < female.size(); ++k) {
    c.diseases.push_back("d" + std::to_string(k));
    c.values.push_back({10.0, 2.0, 3.0, 50.0, female[k]});
  }
  return c;
}

RecordSet random_cohort(Rng& rng, Eigen::Index n, Eigen::Index d, Eigen::Index s) {
  Eigen::MatrixXd dis = random_binary(n, d, 0.1, rng), sym = random_binary(n, s, 0.2, rng);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index r = 0; r < n; ++r)
      if (bernoulli(rng, 0.02 * static_cast<double>(j))) dis(r, j) = 1;
  std::vector<std::optional<int>> ages;
  std::vector<std::optional<Sex>> sexes;
  for (Eigen::Index r = 0; r < n; ++r) {
    ages.push_back(bernoulli(rng, 0.9) ? std::optional<int>(static_cast<int>(uniform_int(rng, 0, 99))) : std::nullopt);
    sexes.push_back(bernoulli(rng, 0.9) ? std::optional<Sex>(bernoulli(rng, 0.5) ? Sex::female : Sex::male)
                                        : std::nullopt);
  }
  return records_from(dis, sym, ages, sexes);
}

F1Row f1_row(const std::string& disease, double f1) {
  F1Row r;
  r.disease = disease;
  r.f1 = f1;
  return r;
}

}  // namespace

TEST(Covariates, HandExample) {
  Eigen::MatrixXd d(4, 4), s = Eigen::MatrixXd::Zero(4, 2);
  d << 1, 1, 0, 0,  //
      1, 1, 1, 0,   //
      1, 1, 1, 1,   //
      0, 1, 0, 0;
  s(0, 0) = 1;
  auto r = records_from(d, s, {30, std::nullopt, 50, 10}, {Sex::female, Sex::male, std::nullopt, Sex::female});
  auto c = disease_covariates(r);
  EXPECT_EQ(*c.values[0][0], 3.0);
  EXPECT_EQ(*c.values[0][1], 3.0);
  EXPECT_NEAR(*c.values[0][2], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(*c.values[0][3], 40.0);
  EXPECT_EQ(*c.values[0][4], 0.5);
}

TEST(Covariates, NeverObservedDisease) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 2), s = Eigen::MatrixXd::Ones(3, 1);
  d.col(0).setOnes();
  auto c = disease_covariates(records_from(d, s, {20, 30, 40}));
  EXPECT_EQ(*c.values[1][0], 0.0);
  for (std::size_t k = 1; k < kCovariates; ++k) EXPECT_FALSE(c.values[1][k]);
  EXPECT_FALSE(c.values[0][4]);
  EXPECT_EQ(*c.values[0][3], 30.0);
}

TEST(Covariates, MatchesRecount) {
  Rng rng(3);
  auto r = random_cohort(rng, 400, 8, 12);
  auto c = disease_covariates(r);
  Eigen::MatrixXd d = r.diseases, s = r.symptoms;
  for (Eigen::Index j = 0; j < 8; ++j) {
    double count = 0, dis = 0, sym = 0, age = 0, age_n = 0, fem = 0, sex_n = 0;
    for (Eigen::Index n = 0; n < 400; ++n) {
      if (d(n, j) != 1) continue;
      count++;
      dis += d.row(n).sum();
      sym += s.row(n).sum();
      if (r.age_years[static_cast<std::size_t>(n)]) {
        age += *r.age_years[static_cast<std::size_t>(n)];
        age_n++;
      }
      if (r.sex[static_cast<std::size_t>(n)]) {
        fem += *r.sex[static_cast<std::size_t>(n)] == Sex::female;
        sex_n++;
      }
    }
    const auto& v = c.values[static_cast<std::size_t>(j)];
    EXPECT_EQ(*v[0], count);
    EXPECT_NEAR(*v[1], dis / count, 1e-12);
    EXPECT_NEAR(*v[2], sym / count, 1e-12);
    EXPECT_NEAR(*v[3], age / age_n, 1e-12);
    EXPECT_NEAR(*v[4], fem / sex_n, 1e-12);
  }
}

TEST(Flags, StrictBoundaryNotFlagged) {
  // counts {1,3,1,3}: mean 2, SD 1, so the two low counts sit exactly on the lower bound.
  DiseaseCovariates c = covariates_with({0.5, 0.5, 0.5, 0.5});
  for (std::size_t k = 0; k < 4; ++k) c.values[k][0] = k % 2 == 0 ? 1.0 : 3.0;
  auto stats = population_stats(c);
  EXPECT_EQ(stats.bounds[0].mean, 2.0);
  EXPECT_EQ(stats.bounds[0].sd, 1.0);
  EXPECT_EQ(stats.bounds[0].lower, 1.0);
  EXPECT_FALSE(stats.bounds[0].lower_percentile);
  const auto flags = abnormality_flags(c, stats);
  for (const auto& row : flags.flags) EXPECT_FALSE(row[0]);

  c.values[0][0] = std::nextafter(1.0, 0.0);
  EXPECT_TRUE(abnormality_flags(c, stats).flags[0][0]);
}

TEST(Flags, PercentileFallback) {
  // Female fractions with mean 0.55: the upper side mean + SD exceeds 1.
  std::vector<double> female(20, 0.0);
  std::fill(female.begin(), female.begin() + 11, 1.0);
  auto c = covariates_with(female);
  auto stats = population_stats(c);
  const auto& b = stats.bounds[4];
  EXPECT_NEAR(b.mean, 0.55, 1e-12);
  EXPECT_TRUE(b.upper_percentile);
  EXPECT_FALSE(b.lower_percentile);
  EXPECT_EQ(b.upper, percentile(female, 84));

  std::vector<double> low(10, 0.0);
  std::fill(low.begin(), low.begin() + 3, 1.0);
  auto stats_low = population_stats(covariates_with(low));
  EXPECT_TRUE(stats_low.bounds[4].lower_percentile);
  EXPECT_EQ(stats_low.bounds[4].lower, 0.0);

  EXPECT_NEAR(percentile({1, 2, 3, 4}, 50), 2.5, 1e-15);
  EXPECT_NEAR(percentile({5, 1, 3}, 16), 1.64, 1e-12);
  EXPECT_THROW(population_stats(covariates_with({0.5})), Error);
}

TEST(Flags, MatchBruteForceRecompute) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    auto r = random_cohort(rng, 300, 12, 10);
    auto cov = disease_covariates(r);
    auto table = abnormality_flags(cov, population_stats(cov));
    auto oracle = oracle_flags(cov);
    ASSERT_EQ(table.flags.size(), oracle.size());
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      EXPECT_EQ(table.flags[k], oracle[k]) << "disease " << k;
      EXPECT_EQ(table.flags[k][5], table.flags[k][0] || table.flags[k][1] || table.flags[k][2] || table.flags[k][3] ||
                                       table.flags[k][4]);
    }
  }
}

TEST(TopBottom, HandComputedN1AndAllBottomFlagged) {
  AbnormalityTable flags;
  flags.diseases = {"a", "b", "c", "d"};
  flags.flags = {{true, false, false, false, false, true},
                 {false, false, false, false, false, false},
                 {false, true, false, false, true, true},
                 {false, false, false, false, false, false}};
  std::vector<F1Row> f1{f1_row("a", 0.9), f1_row("b", 0.9), f1_row("c", 0.1), f1_row("d", 0.5)};
  auto s = top_bottom_summary(f1, flags, 1);
  EXPECT_EQ(s.top_diseases, std::vector<std::string>{"a"});
  EXPECT_EQ(s.bottom_diseases, std::vector<std::string>{"c"});
  EXPECT_EQ(s.top[0], 100.0);
  EXPECT_EQ(s.top[5], 100.0);
  EXPECT_EQ(s.bottom[1], 100.0);
  EXPECT_EQ(s.bottom[4], 100.0);
  EXPECT_EQ(s.bottom[5], 100.0);
  EXPECT_EQ(s.bottom[0], 0.0);

  auto two = top_bottom_summary(f1, flags, 2);
  EXPECT_EQ(two.top_diseases, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(two.top[5], 50.0);
  EXPECT_EQ(two.bottom[5], 50.0);
  EXPECT_TRUE(two.warnings.empty());

  auto shrunk = top_bottom_summary(f1, flags, 50);
  EXPECT_EQ(shrunk.n, 2u);
  EXPECT_EQ(shrunk.warnings.size(), 1u);
  for (double p : shrunk.top) EXPECT_TRUE(p >= 0 && p <= 100);
}

TEST(Subgroups, SexPartitionSizes) {
  auto spec = make_random_spec({}, 3);
  spec.female_prob = 0.5;
  auto cohort = sample_cohort(spec, 3000, 2);
  auto records = aggregate(cohort.notes, Vocabulary(spec.disease_names, spec.symptom_names), AggregationMode::single);
  for (std::size_t n = 0; n < 50; ++n) records.sex[n] = std::nullopt;
  SubgroupOptions options;
  options.learn.seed = 1;
  auto result = subgroup_learn(records, Partition::sex, Learner::nb, cohort.truth, options);
  ASSERT_EQ(result.rows.size(), 2u);
  EXPECT_EQ(result.unknown, 50u);
  EXPECT_EQ(result.rows[0].size + result.rows[1].size + result.unknown, static_cast<std::size_t>(records.size()));
  for (const auto& row : result.rows) {
    EXPECT_FALSE(row.skipped);
    EXPECT_GT(row.auprc, 0.0);
  }
  auto ages = subgroup_learn(records, Partition::age_brackets, Learner::nb, cohort.truth, options);
  EXPECT_EQ(ages.rows.size(), 5u);
  std::size_t total = 0;
  for (const auto& row : ages.rows) total += row.size;
  EXPECT_EQ(total + ages.unknown, static_cast<std::size_t>(records.size()));

  SubgroupOptions huge = options;
  huge.min_size = 1000000;
  auto skipped = subgroup_learn(records, Partition::sex, Learner::nb, cohort.truth, huge);
  EXPECT_TRUE(skipped.rows[0].skipped && skipped.rows[1].skipped);
  EXPECT_EQ(skipped.warnings.size(), 2u);

  for (auto& s : records.sex) s = std::nullopt;
  EXPECT_THROW(subgroup_learn(records, Partition::sex, Learner::nb, cohort.truth, options), Error);
}

TEST(Subgroups, RandomSubset) {
  auto a = random_subset(1000, 0.1, 4);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_EQ(a, random_subset(1000, 0.1, 4));
  EXPECT_NE(a, random_subset(1000, 0.1, 5));
  EXPECT_THROW(random_subset(10, 0.0, 1), Error);
}

TEST(Predictability, DeterminedAndNullTargets) {
  Rng rng(21);
  const Eigen::Index n = 5000;
  Eigen::MatrixXd d = random_binary(n, 3, 0.3, rng);
  Eigen::MatrixXd s(n, 3);
  s.col(0) = d.col(1);
  s.col(1) = random_binary(n, 1, 0.3, rng);
  s.col(2).setZero();
  s(0, 2) = 1;
  auto records = records_from(d, s);
  PredictabilityOptions options;
  options.seed = 3;
  auto result = predictability(records, TargetKind::symptom, Family::logistic, options);
  ASSERT_EQ(result.rows.size(), 2u);
  EXPECT_EQ(result.warnings.size(), 1u);
  EXPECT_GE(result.rows[0].auroc, 0.99);
  EXPECT_NEAR(result.rows[1].auroc, 0.5, 0.05);
  for (const auto& row : result.rows) EXPECT_TRUE(row.auroc >= 0 && row.auroc <= 1);
  auto again = predictability(records, TargetKind::symptom, Family::logistic, options);
  EXPECT_EQ(again.rows[0].auroc, result.rows[0].auroc);
  EXPECT_EQ(again.rows[1].auroc, result.rows[1].auroc);

  auto diseases = predictability(records, TargetKind::disease, Family::naive_bayes, options);
  EXPECT_EQ(diseases.rows.size(), 3u);
  EXPECT_EQ(diseases.family, Family::naive_bayes);
  EXPECT_GE(diseases.rows[1].auroc, 0.99);

  auto paired = paired_difference(result, predictability(records, TargetKind::symptom, Family::naive_bayes, options));
  ASSERT_EQ(paired.size(), 2u);
  EXPECT_EQ(paired[0].difference, paired[0].first - paired[0].second);

  std::ostringstream out;
  write_predictability(out, result);
  EXPECT_NE(out.str().find("logistic"), std::string::npos);
}
