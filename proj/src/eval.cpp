#include "hkg/eval.hpp"

#include <fstream>
#include <ostream>

namespace hkg {

BMode parse_b_mode(const std::string& text) {
  if (text == "retained") return BMode::retained;
  if (text == "full") return BMode::full;
  throw Error("unknown B mode '" + text + "'");
}

std::string to_string(BMode mode) { return mode == BMode::retained ? "retained" : "full"; }

RestrictedReference restrict_to_vocabulary(const KnowledgeGraph& reference, const Vocabulary& vocabulary) {
  RestrictedReference out;
  for (const auto& e : reference.edges()) {
    if (vocabulary.disease_index(e.disease) && vocabulary.symptom_index(e.symptom))
      out.graph.add(e);
    else
      ++out.dropped;
  }
  return out;
}

namespace {

void check_shape(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary) {
  if (scores.rows() != vocabulary.num_diseases() || scores.cols() != vocabulary.num_symptoms())
    throw Error("score matrix shape does not match the vocabulary");
}

void check_reference(const KnowledgeGraph& reference, const Vocabulary& vocabulary) {
  if (reference.empty()) throw Error("reference graph is empty");
  for (const auto& e : reference.edges())
    if (!vocabulary.disease_index(e.disease) || !vocabulary.symptom_index(e.symptom))
      throw Error("reference edge (" + e.disease + ", " + e.symptom + ") is outside the vocabulary");
}

}  // namespace

AuprcResult auprc(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary, const KnowledgeGraph& reference,
                  BMode mode) {
  check_shape(scores, vocabulary);
  check_reference(reference, vocabulary);
  const auto& diseases = vocabulary.diseases();
  const auto& symptoms = vocabulary.symptoms();

  struct Item {
    double score;
    bool hit;
  };
  std::vector<Item> pool;
  std::size_t retained = 0;
  for (Eigen::Index j = 0; j < scores.rows(); ++j) {
    const auto& disease = diseases[static_cast<std::size_t>(j)];
    const auto take = std::min<std::size_t>(reference.edge_count(disease), symptoms.size());
    if (take == 0) continue;
    retained += take;
    const auto order = rank_row(scores.row(j), symptoms);
    for (std::size_t r = 0; r < take; ++r) {
      const auto i = order[r];
      const double s = scores(j, i);
      if (s != 0.0) pool.push_back({s, reference.contains(disease, symptoms[static_cast<std::size_t>(i)])});
    }
  }

  AuprcResult out;
  out.reference_edges = reference.size();
  out.candidate_edges = mode == BMode::retained
                            ? retained
                            : static_cast<std::size_t>(vocabulary.num_diseases() * vocabulary.num_symptoms());
  out.B = static_cast<double>(out.reference_edges) / static_cast<double>(out.candidate_edges);
  const double total = static_cast<double>(out.reference_edges);

  std::sort(pool.begin(), pool.end(), [](const Item& a, const Item& b) { return a.score > b.score; });
  double tp = 0;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    tp += pool[k].hit ? 1 : 0;
    if (k + 1 < pool.size() && pool[k + 1].score == pool[k].score) continue;
    out.curve.push_back({pool[k].score, tp / static_cast<double>(k + 1), tp / total});
  }
  out.degenerate = out.curve.empty();
  double prev_recall = 0.0;
  double prev_precision = out.degenerate ? 0.0 : out.curve.front().precision;
  out.curve.push_back({0.0, out.B, 1.0});
  for (const auto& p : out.curve) {
    out.auprc += (p.recall - prev_recall) * (p.precision + prev_precision) / 2.0;
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  return out;
}

std::vector<F1Row> f1_per_disease(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary,
                                  const KnowledgeGraph& reference, const EdgeBudget& budget) {
  check_shape(scores, vocabulary);
  check_reference(reference, vocabulary);
  const auto selection = select_edges(scores, vocabulary, budget);
  const auto selected_counts = selection.graph.edge_counts();
  std::vector<F1Row> rows;
  for (const auto& disease : vocabulary.diseases()) {
    F1Row row;
    row.disease = disease;
    row.reference_edges = reference.edge_count(disease);
    if (row.reference_edges == 0) continue;
    const auto it = selected_counts.find(disease);
    row.selected = it == selected_counts.end() ? 0 : it->second;
    for (auto e = selection.graph.edges().lower_bound(Edge{disease, ""});
         e != selection.graph.edges().end() && e->disease == disease; ++e)
      if (reference.contains(*e)) ++row.tp;
    row.fp = row.selected - row.tp;
    row.fn = row.reference_edges - row.tp;
    const double denom = static_cast<double>(2 * row.tp + row.fp + row.fn);
    row.f1 = 2.0 * static_cast<double>(row.tp) / denom;
    rows.push_back(std::move(row));
  }
  return rows;
}

LoadedReference load_reference(std::istream& in, const std::set<std::string>& excluded_symptoms) {
  LoadedReference out;
  const auto parsed = parse_graph(in);
  for (const auto& e : parsed.edges()) {
    if (excluded_symptoms.count(e.symptom))
      ++out.dropped;
    else
      out.graph.add(e);
  }
  return out;
}

LoadedReference load_reference(const std::string& path, const std::set<std::string>& excluded_symptoms) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference file: " + path);
  return load_reference(in, excluded_symptoms);
}

EvalReport evaluate(const ScoreMatrix& scores, const KnowledgeGraph& reference, const EvalOptions& options) {
  EvalReport report;
  report.learner = scores.learner;
  report.b_mode = options.b_mode;
  const auto restricted = restrict_to_vocabulary(reference, scores.vocabulary);
  report.reference_dropped = restricted.dropped;
  if (restricted.graph.empty()) throw Error("reference graph has no edges inside the score vocabulary");
  if (restricted.dropped > 0)
    report.warnings.push_back(std::to_string(restricted.dropped) +
                              " reference edges fall outside the score vocabulary and were dropped");
  EdgeBudget budget = ReferenceMatched{&restricted.graph};
  report.budget = "reference_matched";
  if (options.per_disease_k) {
    budget = PerDiseaseK{*options.per_disease_k};
    report.budget = "top_" + std::to_string(*options.per_disease_k);
  }
  const auto& table = scores.ranking();
  report.auprc = auprc(table, scores.vocabulary, restricted.graph, options.b_mode);
  if (report.auprc.degenerate) report.warnings.push_back("no nonzero retained scores; AUPRC is the extension segment only");
  report.f1 = f1_per_disease(table, scores.vocabulary, restricted.graph, budget);
  double sum = 0;
  for (const auto& row : report.f1) sum += row.f1;
  report.mean_f1 = report.f1.empty() ? 0.0 : sum / static_cast<double>(report.f1.size());
  return report;
}

void write_f1_table(std::ostream& out, const EvalReport& report) {
  out << "disease\treference_edges\tselected\ttp\tfp\tfn\tf1\n";
  for (const auto& r : report.f1)
    out << r.disease << '\t' << r.reference_edges << '\t' << r.selected << '\t' << r.tp << '\t' << r.fp << '\t'
        << r.fn << '\t' << format_double(r.f1) << '\n';
}

void write_pr_curve(std::ostream& out, const EvalReport& report) {
  out << "threshold\tprecision\trecall\n";
  for (std::size_t k = 0; k < report.auprc.curve.size(); ++k) {
    const auto& p = report.auprc.curve[k];
    out << (k + 1 == report.auprc.curve.size() ? std::string("extension") : format_double(p.threshold)) << '\t'
        << format_double(p.precision) << '\t' << format_double(p.recall) << '\n';
  }
}

void write_eval_summary(std::ostream& out, const EvalReport& report) {
  out << "key\tvalue\n";
  out << "learner\t" << report.learner << '\n';
  out << "budget\t" << report.budget << '\n';
  out << "b_mode\t" << to_string(report.b_mode) << '\n';
  out << "auprc\t" << format_double(report.auprc.auprc) << '\n';
  out << "B\t" << format_double(report.auprc.B) << '\n';
  out << "reference_edges\t" << report.auprc.reference_edges << '\n';
  out << "candidate_edges\t" << report.auprc.candidate_edges << '\n';
  out << "reference_dropped\t" << report.reference_dropped << '\n';
  out << "degenerate\t" << (report.auprc.degenerate ? "true" : "false") << '\n';
  out << "diseases_scored\t" << report.f1.size() << '\n';
  out << "mean_f1\t" << format_double(report.mean_f1) << '\n';
}

}  // namespace hkg
