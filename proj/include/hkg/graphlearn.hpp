#pragma once
// Importance matrices delta_ij (disease j -> symptom i) under logistic
// regression, naive Bayes, noisy-OR and do-operator ("causal") learners.

#include "hkg/cohort.hpp"
#include "hkg/estimators.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hkg {

/// D x S importance table tied to a vocabulary. `values` is the exported,
/// nonnegative importance; `raw` holds the learner's native quantity (signed
/// weight, log ratio, intervention ratio). Consumers rank within a row.
struct ScoreMatrix {
  Vocabulary vocabulary;
  Eigen::MatrixXd values;
  Eigen::MatrixXd raw;
  std::string learner;
  std::string fingerprint;
  std::vector<std::string> warnings;
  /// Evaluation ranks by `raw` instead of `values` (naive Bayes).
  bool rank_by_raw = false;

  const Eigen::MatrixXd& ranking() const { return rank_by_raw ? raw : values; }
};

struct NoisyOrOptions {
  /// Stop once the train log-likelihood gains less than tolerance * N.
  double tolerance = 1e-6;
  int max_iter = 500;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Fitted noisy-OR: P(x_i = 1 | parents) = 1 - (1 - leak_i) prod_j failure_ji^{y_j}.
/// `failure` covers diseases (D x S); `demo_failure` covers appended
/// demographic parents, one row per name in `demo_names`.
struct NoisyOrParams {
  Eigen::VectorXd leak;
  Eigen::MatrixXd failure;
  Eigen::MatrixXd demo_failure;
  std::vector<std::string> demo_names;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Train log-likelihood before the first and after every EM iteration.
  std::vector<double> trace;
};

/// EM over the per-parent activation variables, run on records grouped by
/// their parent pattern. `demo` must be none or bracket.
NoisyOrParams fit_noisy_or(const RecordSet& records, const NoisyOrOptions& options = {},
                           DemoEncoding demo = DemoEncoding::none);

/// Observed-data log-likelihood evaluated record by record.
double noisy_or_log_likelihood(const RecordSet& records, const NoisyOrParams& params,
                               DemoEncoding demo = DemoEncoding::none);

/// delta = 1 - failure.
ScoreMatrix importance_noisy_or(const NoisyOrParams& params, const Vocabulary& vocabulary);

/// delta = log P(x=1 | y=1) - log P(x=1 | y=0) from smoothed frequencies; each
/// log is clamped to [-30, 30]. values floor at 0, raw keeps the sign.
ScoreMatrix importance_nb(const RecordSet& records, double alpha = 0.0);

struct LearnOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  DemoEncoding demo = DemoEncoding::none;
  CVOptions cv;
  /// Overrides the family's default grid when non-empty.
  std::vector<GridCell> grid;
  double causal_epsilon = 1e-6;
  double nb_alpha = 0.0;
  NoisyOrOptions noisy_or;
};

/// One logistic regression per disease on the symptom indicators (plus
/// demographic columns); delta = max(0, weight of symptom i).
ScoreMatrix importance_lr(const RecordSet& records, const LearnOptions& options);

struct InterventionMeans {
  double forced_on = 0.0;
  double forced_off = 0.0;
};

/// Population-average predicted probability with feature `column` forced to
/// 1 and to 0 for every row; other columns keep their observed values.
InterventionMeans intervention_means(const Model& model, const FeatureTable& X, Eigen::Index column);

/// For each symptom, a cross-validated predictor of x_i from the disease
/// indicators; raw = mean P(x=1 | do(y_j=1)) / max(eps, mean P(x=1 | do(y_j=0)))
/// and values = max(0, raw - 1).
ScoreMatrix importance_causal(const RecordSet& records, Family family, const LearnOptions& options);

enum class Learner { lr, nb, nor, causal_lr, causal_rf, causal_nb };
Learner parse_learner(const std::string& text);
std::string to_string(Learner learner);
/// Encoding used when demographics are requested for a learner: continuous
/// for the logistic learners, bracket indicators for the binary-only ones.
DemoEncoding default_demo_encoding(Learner learner);

/// Dispatches to the importance functions. Throws when demographics are
/// requested but absent from the records, or unsupported by the learner.
ScoreMatrix learn(const RecordSet& records, Learner learner, const LearnOptions& options);

/// Header `disease<TAB>symptom<TAB>score`, then the full D x S cross product
/// sorted by (disease, -score, symptom).
void write_scores(std::ostream& out, const ScoreMatrix& scores, bool use_raw = false);
/// Reads a score file back; lines starting with '#' are ignored. Identifiers
/// are sorted lexicographically and raw is set equal to values.
ScoreMatrix read_scores(std::istream& in);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace hkg
