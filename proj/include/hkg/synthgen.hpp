#pragma once
// Synthetic cohorts drawn from a known noisy-OR disease -> symptom model.

#include "hkg/cohort.hpp"
#include "hkg/kgraph.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hkg {

/// Shared latent Bernoulli: with probability latent_prob the cluster fires,
/// and each member disease is then switched on with activation_prob in
/// addition to its own independent draw.
struct DiseaseCluster {
  double latent_prob = 0.0;
  double activation_prob = 0.0;
  std::vector<Eigen::Index> members;
};

/// Per-disease modulation of the prior by the patient's demographics.
/// age_weights(j, b) multiplies the prior in age bracket b; female_odds(j)
/// multiplies the odds of disease j for female patients.
struct DemographicModel {
  Eigen::MatrixXd age_weights;
  Eigen::VectorXd female_odds;
};

struct TruthSpec {
  std::vector<std::string> disease_names;
  std::vector<std::string> symptom_names;
  Eigen::VectorXd disease_priors;
  Eigen::VectorXd leak;
  /// D x S failure probabilities; exactly 1 for non-edges.
  Eigen::MatrixXd failure;
  std::vector<DiseaseCluster> clusters;
  std::optional<DemographicModel> demographics;

  int age_min = 0;
  int age_max = 99;
  double female_prob = 0.5;
  int notes_min = 1;
  int notes_max = 1;
  // Inter-note gaps: long with probability gap_long_prob, drawn uniformly
  // from [gap_long_min, gap_long_max]; otherwise uniformly from [0, gap_short_max].
  double gap_long_prob = 0.3;
  int gap_short_max = 10;
  int gap_long_min = 31;
  int gap_long_max = 365;
  Date start = parse_date("2010-01-01");

  Eigen::Index num_diseases() const { return disease_priors.size(); }
  Eigen::Index num_symptoms() const { return leak.size(); }

  /// Throws Error on any out-of-range parameter or shape mismatch.
  void validate() const;
  KnowledgeGraph edge_set() const;
  /// Defaults names to d00.., s000.. when absent.
  void fill_default_names();
};

struct SyntheticCohort {
  std::vector<RawNote> notes;
  KnowledgeGraph truth;
};

/// Deterministic in (spec, n_patients, seed) and independent of `threads`.
SyntheticCohort sample_cohort(const TruthSpec& spec, long n_patients, std::uint64_t seed, unsigned threads = 1);

/// Plain-text spec grammar, one directive per line ('#' comments):
///   diseases D | symptoms S
///   disease_names n1 n2 ... | symptom_names n1 n2 ...
///   priors p1 .. pD | prior <disease> p
///   leaks l1 .. lS  | leak <symptom> l
///   edge <disease> <symptom> <failure>
///   failure  (followed by D rows of S values, then `end`)
///   cluster <latent_prob> <activation_prob> <disease> [<disease> ...]
///   age_weights <disease> w0 w1 w2 w3 w4
///   female_odds <disease> odds
///   age_range <min> <max> | female_prob p | notes_per_patient <min> <max>
///   gap_days <p_long> <short_max> <long_min> <long_max> | start_date YYYY-MM-DD
/// Diseases and symptoms are referenced by name or zero-based index.
TruthSpec parse_truth_spec(std::istream& in);
void write_truth_spec(std::ostream& out, const TruthSpec& spec);

struct RandomSpecOptions {
  Eigen::Index diseases = 20;
  Eigen::Index symptoms = 50;
  double prior_min = 0.01;
  double prior_max = 0.15;
  double leak_max = 0.05;
  double failure_min = 0.1;
  double failure_max = 0.7;
  int edges_min = 3;
  int edges_max = 8;
};

/// Random spec with uniform priors, leaks in [0, leak_max], and for each
/// disease a uniform number of edges to distinct random symptoms.
TruthSpec make_random_spec(const RandomSpecOptions& options, std::uint64_t seed);

}  // namespace hkg
