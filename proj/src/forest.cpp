#include "hkg/estimators.hpp"

#include <numeric>

namespace hkg {

namespace {

using ByteMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Column-major 0/1 copy of a binary feature table.
ByteMatrix to_bytes(const FeatureTable& X) {
  ByteMatrix out = ByteMatrix::Zero(X.rows(), X.cols());
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    for (FeatureTable::InnerIterator it(X, n); it; ++it) {
      if (it.value() != 1.0 && it.value() != 0.0) throw Error("random forest features must be binary");
      out(n, it.col()) = it.value() > 0.5 ? 1 : 0;
    }
  }
  return out;
}

double gini_mass(double n, double pos) { return n > 0 ? 2.0 * pos * (n - pos) / n : 0.0; }

class TreeBuilder {
 public:
  TreeBuilder(const ByteMatrix& X, const Labels& y, const ForestOptions& options, Rng& rng)
      : X_(X), y_(y), options_(options), rng_(rng) {
    const auto p = static_cast<double>(X.cols());
    mtry_ = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(std::sqrt(p))));
    features_.resize(static_cast<std::size_t>(X.cols()));
  }

  DecisionTree build(std::vector<Eigen::Index> rows) {
    DecisionTree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  int grow(DecisionTree& tree, std::vector<Eigen::Index> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double pos = 0;
    for (auto r : rows) pos += y_(r);
    const auto n = static_cast<double>(rows.size());
    {
      auto& node = tree.nodes.back();
      node.value = n > 0 ? pos / n : 0.0;
      node.samples = static_cast<int>(rows.size());
      node.depth = depth;
    }
    const auto min_leaf = static_cast<double>(options_.min_samples_leaf);
    if (depth >= options_.max_depth || n < 2 * min_leaf || pos == 0 || pos == n) return id;

    const double parent = gini_mass(n, pos);
    std::iota(features_.begin(), features_.end(), Eigen::Index{0});
    int best_feature = -1;
    double best_impurity = parent - 1e-12;
    const auto p = static_cast<Eigen::Index>(features_.size());
    for (Eigen::Index k = 0; k < p; ++k) {
      // Visit features in a random order; stop after mtry once a valid split exists.
      if (k >= mtry_ && best_feature >= 0) break;
      const auto pick = static_cast<std::size_t>(uniform_int(rng_, k, p - 1));
      std::swap(features_[static_cast<std::size_t>(k)], features_[pick]);
      const auto f = features_[static_cast<std::size_t>(k)];
      double n1 = 0;
      double pos1 = 0;
      for (auto r : rows) {
        if (X_(r, f)) {
          n1 += 1;
          pos1 += y_(r);
        }
      }
      const double n0 = n - n1;
      if (n1 < min_leaf || n0 < min_leaf) continue;
      const double impurity = gini_mass(n1, pos1) + gini_mass(n0, pos - pos1);
      if (impurity < best_impurity) {
        best_impurity = impurity;
        best_feature = static_cast<int>(f);
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> left;
    std::vector<Eigen::Index> right;
    for (auto r : rows) (X_(r, best_feature) ? right : left).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, std::move(left), depth + 1);
    const int rr = grow(tree, std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.left = l;
    node.right = rr;
    return id;
  }

  const ByteMatrix& X_;
  const Labels& y_;
  const ForestOptions& options_;
  Rng& rng_;
  Eigen::Index mtry_ = 1;
  std::vector<Eigen::Index> features_;
};

}  // namespace

ForestModel fit_random_forest(const FeatureTable& X, const Labels& y, const ForestOptions& options,
                              std::uint64_t seed) {
  if (options.n_trees < 1) throw Error("fit_random_forest: n_trees must be >= 1");
  if (options.max_depth < 0 || options.min_samples_leaf < 1) throw Error("fit_random_forest: invalid tree limits");
  if (y.size() != X.rows() || X.rows() == 0) throw Error("fit_random_forest: label count does not match row count");
  const ByteMatrix bytes = to_bytes(X);
  ForestModel model;
  model.options = options;
  model.seed = seed;
  model.num_features = X.cols();
  model.trees.reserve(static_cast<std::size_t>(options.n_trees));
  const auto n = X.rows();
  for (int t = 0; t < options.n_trees; ++t) {
    Rng rng(derive_seed(seed, 0xF0AE57ULL, static_cast<std::uint64_t>(t)));
    std::vector<Eigen::Index> sample(static_cast<std::size_t>(n));
    for (auto& r : sample) r = uniform_int(rng, 0, n - 1);
    TreeBuilder builder(bytes, y, options, rng);
    model.trees.push_back(builder.build(std::move(sample)));
  }
  return model;
}

Eigen::VectorXd predict_proba(const ForestModel& model, const FeatureTable& X) {
  if (X.cols() != model.num_features) throw Error("predict_proba: feature count mismatch");
  Eigen::VectorXd out(X.rows());
  Eigen::VectorXd row = Eigen::VectorXd::Zero(X.cols());
  std::vector<double> leaves(model.trees.size());
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    for (FeatureTable::InnerIterator it(X, n); it; ++it) row(it.col()) = it.value();
    for (std::size_t t = 0; t < model.trees.size(); ++t) leaves[t] = model.trees[t].predict(row);
    std::sort(leaves.begin(), leaves.end());
    out(n) = std::accumulate(leaves.begin(), leaves.end(), 0.0) / static_cast<double>(leaves.size());
    for (FeatureTable::InnerIterator it(X, n); it; ++it) row(it.col()) = 0.0;
  }
  return out;
}

}  // namespace hkg
