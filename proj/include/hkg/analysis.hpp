#pragma once
// Robustness studies: per-disease covariates and abnormality flags, top/bottom
// F1 comparison, subgroup learning and predictability AUROCs.

#include "hkg/eval.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hkg {

enum class Covariate { count, disease, symptom, age, female };
constexpr std::size_t kCovariates = 5;
const std::array<std::string, kCovariates>& covariate_names();

/// Per-disease statistics over the records where the disease is present.
/// Means are absent when no record contributes (age and sex use only records
/// where they are known). The co-occurring disease mean counts the disease
/// itself.
struct DiseaseCovariates {
  std::vector<std::string> diseases;
  std::vector<std::array<std::optional<double>, kCovariates>> values;
  Eigen::Index num_diseases_vocab = 0;
  Eigen::Index num_symptoms_vocab = 0;
};

DiseaseCovariates disease_covariates(const RecordSet& records);

/// Thresholds for one covariate. A side whose mean +/- SD leaves the feasible
/// range falls back to the 16th (lower) or 84th (upper) percentile.
struct CovariateBounds {
  bool defined = false;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool lower_percentile = false;
  bool upper_percentile = false;
};

struct PopulationStats {
  std::array<CovariateBounds, kCovariates> bounds;
};

/// Population (ddof = 0) mean and SD across diseases with a value. Throws when
/// fewer than 2 diseases are present.
PopulationStats population_stats(const DiseaseCovariates& covariates);

/// Linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

/// Flag columns: count, disease, symptom, age, female, any.
constexpr std::size_t kFlagColumns = 6;
const std::array<std::string, kFlagColumns>& flag_names();

struct AbnormalityTable {
  std::vector<std::string> diseases;
  std::vector<std::array<bool, kFlagColumns>> flags;
};

/// count: below the lower bound; disease, symptom: above the upper bound;
/// age, female: outside [lower, upper]. All comparisons are strict.
AbnormalityTable abnormality_flags(const DiseaseCovariates& covariates, const PopulationStats& stats);

struct TopBottomSummary {
  std::size_t n = 0;
  std::array<double, kFlagColumns> top{};
  std::array<double, kFlagColumns> bottom{};
  std::vector<std::string> top_diseases;
  std::vector<std::string> bottom_diseases;
  std::vector<std::string> warnings;
};

/// Sorts diseases present in both tables by F1 descending (ties by name) and
/// reports the percentage of flagged diseases among the first and last n.
TopBottomSummary top_bottom_summary(const std::vector<F1Row>& f1, const AbnormalityTable& flags, std::size_t n = 50);

enum class Partition { age_brackets, sex };
Partition parse_partition(const std::string& text);

struct SubgroupRow {
  std::string subgroup;
  std::size_t size = 0;
  bool skipped = false;
  double auprc = 0.0;
  double mean_f1 = 0.0;
};

struct SubgroupOptions {
  std::size_t min_size = 100;
  LearnOptions learn;
  EvalOptions eval;
};

struct SubgroupResult {
  std::vector<SubgroupRow> rows;
  /// Records whose partition attribute is unknown.
  std::size_t unknown = 0;
  std::vector<std::string> warnings;
};

/// Learns and evaluates one score matrix per subgroup over the full
/// vocabulary. Subgroups below min_size are reported as skipped.
SubgroupResult subgroup_learn(const RecordSet& records, Partition partition, Learner learner,
                              const KnowledgeGraph& reference, const SubgroupOptions& options);

/// Sorted row indices of a uniform random subset of round(fraction * n) rows.
std::vector<std::size_t> random_subset(std::size_t n, double fraction, std::uint64_t seed);

enum class TargetKind { disease, symptom };
TargetKind parse_target_kind(const std::string& text);

struct PredictabilityRow {
  std::string target;
  std::size_t positives = 0;
  double auroc = 0.0;
  std::string best_cell;
};

struct PredictabilityOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  CVOptions cv;
  std::vector<GridCell> grid;
  DemoEncoding demo = DemoEncoding::none;
  std::size_t min_positives = 3;
};

struct PredictabilityResult {
  Family family = Family::logistic;
  TargetKind kind = TargetKind::symptom;
  std::vector<PredictabilityRow> rows;
  std::vector<std::string> warnings;
};

/// Mean 3-fold CV AUROC of the best grid cell per target. Disease targets use
/// the symptom block as features, symptom targets the disease block.
PredictabilityResult predictability(const RecordSet& records, TargetKind kind, Family family,
                                    const PredictabilityOptions& options);

struct PairedRow {
  std::string target;
  double first = 0.0;
  double second = 0.0;
  double difference = 0.0;
};
/// Joins two results on target name; difference = first - second.
std::vector<PairedRow> paired_difference(const PredictabilityResult& first, const PredictabilityResult& second);

void write_covariates(std::ostream& out, const DiseaseCovariates& covariates);
void write_flags(std::ostream& out, const AbnormalityTable& flags);
void write_top_bottom(std::ostream& out, const TopBottomSummary& summary);
void write_subgroups(std::ostream& out, const SubgroupResult& result);
void write_predictability(std::ostream& out, const PredictabilityResult& result);

}  // namespace hkg
