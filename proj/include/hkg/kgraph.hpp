#pragma once
// Bipartite disease -> symptom graph, top-k edge selection and the graph TSV
// format (also used for reference graphs).

#include "hkg/cohort.hpp"

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hkg {

struct Edge {
  std::string disease;
  std::string symptom;
  auto operator<=>(const Edge&) const = default;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Returns false when the edge was already present.
  bool add(Edge edge) { return edges_.insert(std::move(edge)).second; }
  bool contains(const Edge& edge) const { return edges_.count(edge) != 0; }
  bool contains(const std::string& disease, const std::string& symptom) const {
    return contains(Edge{disease, symptom});
  }

  std::size_t size() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  const std::set<Edge>& edges() const { return edges_; }

  /// E_j for every disease with at least one edge.
  std::map<std::string, std::size_t> edge_counts() const;
  std::size_t edge_count(const std::string& disease) const;

  bool operator==(const KnowledgeGraph&) const = default;

 private:
  std::set<Edge> edges_;
};

/// `disease<TAB>symptom` per line, sorted, no trailing comment lines.
std::string serialize_graph(const KnowledgeGraph& graph);
/// Skips '#' comments and blank lines; duplicate or malformed lines throw.
KnowledgeGraph parse_graph(std::istream& in);
KnowledgeGraph parse_graph_text(const std::string& text);

struct PerDiseaseK {
  std::size_t k = 25;
};
struct ReferenceMatched {
  const KnowledgeGraph* reference = nullptr;
};
using EdgeBudget = std::variant<PerDiseaseK, ReferenceMatched>;

/// Ranks one disease row: indices of symptoms by descending score, ties by
/// ascending symptom name.
std::vector<Eigen::Index> rank_row(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                   const std::vector<std::string>& symptom_names);

struct EdgeSelection {
  KnowledgeGraph graph;
  std::vector<std::string> warnings;
};

/// Top-budget symptoms per disease become edges. With ReferenceMatched the
/// budget for disease j is the reference edge count E_j; reference diseases
/// missing from the vocabulary are skipped with a warning, and diseases with no
/// reference edges receive none.
EdgeSelection select_edges(const Eigen::MatrixXd& scores, const Vocabulary& vocabulary, const EdgeBudget& budget);

}  // namespace hkg
