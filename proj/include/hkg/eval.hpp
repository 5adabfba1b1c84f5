#pragma once
// F1 and AUPRC scoring of importance matrices against a reference graph.

#include "hkg/graphlearn.hpp"
#include "hkg/kgraph.hpp"

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace hkg {

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Denominator of the terminal precision B: the retained top-E_j pool, or
/// every disease x symptom pair in the vocabulary.
enum class BMode { retained, full };
BMode parse_b_mode(const std::string& text);
std::string to_string(BMode mode);

struct AuprcResult {
  double auprc = 0.0;
  double B = 0.0;
  /// Threshold sweep points in order of decreasing threshold, followed by the
  /// terminal (recall 1, precision B) point.
  std::vector<PRPoint> curve;
  bool degenerate = false;
  std::size_t reference_edges = 0;
  std::size_t candidate_edges = 0;
};

/// Reference edges whose disease and symptom are both in the vocabulary.
struct RestrictedReference {
  KnowledgeGraph graph;
  std::size_t dropped = 0;
};
RestrictedReference restrict_to_vocabulary(const KnowledgeGraph& reference, const Vocabulary& vocabulary);

/// Per disease keep the top E_j scores, pool the retained nonzero scores,
/// sweep every distinct score as an inclusive threshold, extend to (1, B) and
/// integrate by the trapezoid rule over recall. The curve starts at recall 0
/// with the precision of the first sweep point. Without any retained nonzero
/// score the curve is the segment (0, 0) -> (1, B). `reference` must already
/// lie inside the vocabulary.
AuprcResult auprc(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary, const KnowledgeGraph& reference,
                  BMode mode = BMode::retained);

struct F1Row {
  std::string disease;
  std::size_t reference_edges = 0;
  std::size_t selected = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double f1 = 0.0;
};

/// F1 = 2TP / (2TP + FP + FN) per vocabulary disease with at least one
/// reference edge, in vocabulary order.
std::vector<F1Row> f1_per_disease(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary,
                                  const KnowledgeGraph& reference, const EdgeBudget& budget);

struct LoadedReference {
  KnowledgeGraph graph;
  std::size_t dropped = 0;
};
/// Parses a graph file and drops edges whose symptom is excluded.
LoadedReference load_reference(std::istream& in, const std::set<std::string>& excluded_symptoms);
LoadedReference load_reference(const std::string& path, const std::set<std::string>& excluded_symptoms);

struct EvalOptions {
  /// nullopt selects the reference-matched budget E_j.
  std::optional<std::size_t> per_disease_k;
  BMode b_mode = BMode::retained;
};

struct EvalReport {
  std::string learner;
  std::string budget;
  BMode b_mode = BMode::retained;
  AuprcResult auprc;
  std::vector<F1Row> f1;
  double mean_f1 = 0.0;
  std::size_t reference_dropped = 0;
  std::vector<std::string> warnings;
};

/// Restricts the reference to the score vocabulary, then computes F1 and
/// AUPRC on `scores.ranking()`. An empty restricted reference throws.
EvalReport evaluate(const ScoreMatrix& scores, const KnowledgeGraph& reference, const EvalOptions& options = {});

void write_f1_table(std::ostream& out, const EvalReport& report);
void write_pr_curve(std::ostream& out, const EvalReport& report);
void write_eval_summary(std::ostream& out, const EvalReport& report);

}  // namespace hkg
