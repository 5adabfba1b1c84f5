#pragma once
// Cohort construction: parsing concept-level notes, support filtering,
// episode segmentation, aggregation into binary records, and demographic
// feature columns.

#include "hkg/common.hpp"

#include <chrono>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hkg {

enum class Sex { female, male };

using Date = std::chrono::sys_days;

/// One clinical note reduced to its extracted concepts. Concept names are
/// stored without their "d:" / "s:" prefix, sorted and de-duplicated.
struct RawNote {
  std::string patient_id;
  Date date{};
  std::vector<std::string> diseases;
  std::vector<std::string> symptoms;
  std::optional<int> age_years;
  std::optional<Sex> sex;

  bool operator==(const RawNote&) const = default;
};

/// Ordered disease and symptom identifiers. Disease j and symptom i are
/// addressed by their position in the respective list.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> diseases, std::vector<std::string> symptoms);

  const std::vector<std::string>& diseases() const { return diseases_; }
  const std::vector<std::string>& symptoms() const { return symptoms_; }
  Eigen::Index num_diseases() const { return static_cast<Eigen::Index>(diseases_.size()); }
  Eigen::Index num_symptoms() const { return static_cast<Eigen::Index>(symptoms_.size()); }

  std::optional<Eigen::Index> disease_index(const std::string& name) const;
  std::optional<Eigen::Index> symptom_index(const std::string& name) const;

  bool operator==(const Vocabulary& other) const {
    return diseases_ == other.diseases_ && symptoms_ == other.symptoms_;
  }

 private:
  std::vector<std::string> diseases_;
  std::vector<std::string> symptoms_;
  std::unordered_map<std::string, Eigen::Index> disease_lookup_;
  std::unordered_map<std::string, Eigen::Index> symptom_lookup_;
};

/// N binary records over a vocabulary. Row n of `diseases` is y_n (length D),
/// row n of `symptoms` is x_n (length S); stored entries are exactly 1.
struct RecordSet {
  Vocabulary vocabulary;
  SparseRows<double> diseases;
  SparseRows<double> symptoms;
  std::vector<std::optional<int>> age_years;
  std::vector<std::optional<Sex>> sex;
  std::vector<std::string> patient_id;
  std::vector<int> source_note_count;

  Eigen::Index size() const { return diseases.rows(); }
  bool has_demographics() const;
  /// Records at the given indices, in the given order.
  RecordSet subset(const std::vector<std::size_t>& rows) const;
  /// Throws Error when shapes or per-record fields are inconsistent.
  void validate() const;
};

enum class AggregationMode { single, episode, patient };
enum class DemoEncoding { none, continuous, bracket };
enum class Block { symptoms, diseases };

AggregationMode parse_aggregation_mode(const std::string& text);
DemoEncoding parse_demo_encoding(const std::string& text);
std::string to_string(AggregationMode mode);
std::string to_string(DemoEncoding encoding);

/// A record block with demographic columns appended on the right.
///
/// Bracket layout: age_lt21, age_21_44, age_45_64, age_65_84, age_85plus,
/// sex_female, sex_male. Continuous layout: age_years, sex_female (female=1).
/// Missing age or sex leaves the corresponding columns zero.
struct FeatureMatrix {
  FeatureTable table;
  Eigen::Index base_columns = 0;
  DemoEncoding encoding = DemoEncoding::none;
  std::vector<std::string> demo_columns;
};

constexpr int kAgeBrackets = 5;
/// Bracket index for [0,21), [21,45), [45,65), [65,85), [85,inf).
int age_bracket(int age_years);
const std::vector<std::string>& age_bracket_labels();

/// Parses the tab-separated records format. Lines beginning with '#' and
/// blank lines are skipped; line numbers in errors are 1-based.
std::vector<RawNote> parse_records(std::istream& in);
void write_records(std::ostream& out, std::span<const RawNote> notes);
std::string format_date(Date date);
Date parse_date(const std::string& text);

struct SupportOptions {
  int min_disease_count = 100;
  int min_symptom_count = 10;
  std::set<std::string> excluded_symptoms{"pain"};
};

/// Concept counts are per note. Surviving identifiers are sorted
/// lexicographically.
Vocabulary filter_support(std::span<const RawNote> notes, const SupportOptions& options = {});

/// Splits one patient's notes into maximal runs whose consecutive dates are
/// at most `gap_days` apart. Sorting is stable, so same-day notes keep input
/// order.
std::vector<std::vector<RawNote>> segment_episodes(std::span<const RawNote> notes, int gap_days = 30);

/// Builds binary records. Patients are emitted in patient_id order; concepts
/// outside the vocabulary are ignored.
RecordSet aggregate(std::span<const RawNote> notes, const Vocabulary& vocabulary, AggregationMode mode,
                    int gap_days = 30);

/// Demographic columns only (N x 2 for continuous, N x 7 for bracket).
FeatureTable demographic_columns(const RecordSet& records, DemoEncoding encoding);
std::vector<std::string> demographic_column_names(DemoEncoding encoding);

FeatureMatrix attach_demographics(const RecordSet& records, Block block, DemoEncoding encoding);

}  // namespace hkg
