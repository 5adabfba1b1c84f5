#pragma once
// Small builders shared by the unit tests.

#include "hkg/cohort.hpp"

#include <random>
#include <string>
#include <vector>

namespace hkg::test {

inline FeatureTable table_from(const Eigen::MatrixXd& dense) {
  FeatureTable t = dense.sparseView();
  t.makeCompressed();
  return t;
}

inline Eigen::MatrixXd random_binary(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = coin(rng) ? 1.0 : 0.0;
  return m;
}

inline std::vector<std::string> names(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int k = 0; k < n; ++k) out.push_back(prefix + std::to_string(100 + k));
  return out;
}

/// RecordSet straight from dense 0/1 blocks; optional demographics.
inline RecordSet records_from(const Eigen::MatrixXd& diseases, const Eigen::MatrixXd& symptoms,
                              std::vector<std::optional<int>> ages = {},
                              std::vector<std::optional<Sex>> sexes = {}) {
  RecordSet r;
  r.vocabulary = Vocabulary(names("d", static_cast<int>(diseases.cols())), names("s", static_cast<int>(symptoms.cols())));
  r.diseases = table_from(diseases);
  r.symptoms = table_from(symptoms);
  const auto n = static_cast<std::size_t>(diseases.rows());
  r.age_years = ages.empty() ? std::vector<std::optional<int>>(n) : ages;
  r.sex = sexes.empty() ? std::vector<std::optional<Sex>>(n) : sexes;
  for (std::size_t k = 0; k < n; ++k) {
    r.patient_id.push_back("p" + std::to_string(k));
    r.source_note_count.push_back(1);
  }
  return r;
}

inline Date day(int offset) { return parse_date("2012-01-01") + std::chrono::days(offset); }

}  // namespace hkg::test
