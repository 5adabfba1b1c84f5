#include "hkg/kgraph.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace hkg {

std::map<std::string, std::size_t> KnowledgeGraph::edge_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : edges_) ++counts[e.disease];
  return counts;
}

std::size_t KnowledgeGraph::edge_count(const std::string& disease) const {
  auto lo = edges_.lower_bound(Edge{disease, ""});
  std::size_t n = 0;
  for (; lo != edges_.end() && lo->disease == disease; ++lo) ++n;
  return n;
}

std::string serialize_graph(const KnowledgeGraph& graph) {
  std::string out;
  for (const auto& e : graph.edges()) {
    out += e.disease;
    out += '\t';
    out += e.symptom;
    out += '\n';
  }
  return out;
}

KnowledgeGraph parse_graph(std::istream& in) {
  KnowledgeGraph graph;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw Error("malformed graph line " + std::to_string(line_no) + ": expected disease<TAB>symptom");
    if (!graph.add(Edge{line.substr(0, tab), line.substr(tab + 1)}))
      throw Error("duplicate edge at graph line " + std::to_string(line_no));
  }
  return graph;
}

KnowledgeGraph parse_graph_text(const std::string& text) {
  std::istringstream in(text);
  return parse_graph(in);
}

std::vector<Eigen::Index> rank_row(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                   const std::vector<std::string>& symptom_names) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(row.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (row(a) != row(b)) return row(a) > row(b);
    return symptom_names[static_cast<std::size_t>(a)] < symptom_names[static_cast<std::size_t>(b)];
  });
  return order;
}

EdgeSelection select_edges(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary, const EdgeBudget& budget) {
  if (scores.rows() != vocabulary.num_diseases() || scores.cols() != vocabulary.num_symptoms())
    throw Error("select_edges: score matrix shape does not match the vocabulary");
  EdgeSelection out;
  std::vector<std::size_t> budgets(static_cast<std::size_t>(scores.rows()), 0);
  if (const auto* k = std::get_if<PerDiseaseK>(&budget)) {
    std::fill(budgets.begin(), budgets.end(), k->k);
  } else {
    const auto* ref = std::get<ReferenceMatched>(budget).reference;
    if (ref == nullptr) throw Error("select_edges: reference budget without a reference graph");
    for (const auto& [disease, count] : ref->edge_counts()) {
      if (auto j = vocabulary.disease_index(disease)) {
        budgets[static_cast<std::size_t>(*j)] = count;
      } else {
        out.warnings.push_back("reference disease '" + disease + "' absent from scores; skipped");
      }
    }
  }
  const auto& diseases = vocabulary.diseases();
  const auto& symptoms = vocabulary.symptoms();
  for (Eigen::Index j = 0; j < scores.rows(); ++j) {
    const auto take = std::min<std::size_t>(budgets[static_cast<std::size_t>(j)], symptoms.size());
    if (take == 0) continue;
    const auto order = rank_row(scores.row(j), symptoms);
    for (std::size_t r = 0; r < take; ++r)
      out.graph.add(Edge{diseases[static_cast<std::size_t>(j)], symptoms[static_cast<std::size_t>(order[r])]});
  }
  return out;
}

}  // namespace hkg
