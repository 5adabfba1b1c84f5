#pragma once
// Supervised learners used by the importance metrics and predictability
// studies: penalized logistic regression, Bernoulli naive Bayes, random
// forests, AUROC and stratified grid-search cross-validation.

#include "hkg/common.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

namespace hkg {

enum class Penalty { l1, l2 };
std::string to_string(Penalty penalty);

// --- logistic regression -----------------------------------------------------

struct LogisticOptions {
  Penalty penalty = Penalty::l2;
  double C = 1.0;
  /// Convergence once the (minimum-norm sub)gradient norm of the objective
  /// drops below tolerance * max(1, C * N).
  double tolerance = 1e-6;
  int max_iter = 100;
  /// Starting point (weights then intercept); empty starts at zero.
  Eigen::VectorXd initial;
};

struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  Penalty penalty = Penalty::l2;
  double C = 1.0;
  bool converged = false;
  int iterations = 0;
  /// Penalized log-likelihood after each accepted step (index 0 = start).
  std::vector<double> objective_trace;
};

template <typename Scalar>
Scalar softplus(Scalar s) {
  using std::exp;
  using std::log1p;
  return s > 0 ? s + log1p(exp(-s)) : log1p(exp(s));
}

template <typename Scalar>
Scalar sigmoid(Scalar s) {
  using std::exp;
  if (s >= 0) return Scalar(1) / (Scalar(1) + exp(-s));
  const Scalar e = exp(s);
  return e / (Scalar(1) + e);
}

/// Penalized log-likelihood  C * sum_n [y_n s_n - log(1 + e^{s_n})] - P(w),
/// s = Xw + b, with P = ||w||_1 (L1) or ||w||^2 / 2 (L2). The intercept is
/// not penalized. This is the quantity fit_logistic maximizes.
template <typename Scalar>
Scalar logistic_objective(const SparseRows<Scalar>& X, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w, Scalar b, Scalar C, Penalty penalty) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s = (X * w).array() + b;
  Scalar ll(0);
  for (Eigen::Index n = 0; n < s.size(); ++n) ll += y(n) * s(n) - softplus(s(n));
  const Scalar pen = penalty == Penalty::l1 ? w.template lpNorm<1>() : Scalar(0.5) * w.squaredNorm();
  return C * ll - pen;
}

/// Gradient of logistic_objective with respect to (w, b); the last entry is
/// the intercept component. For L1 the penalty term uses sign(w), i.e. the
/// gradient wherever every weight is nonzero.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logistic_gradient(const SparseRows<Scalar>& X,
                                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y,
                                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w, Scalar b,
                                                           Scalar C, Penalty penalty) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s = (X * w).array() + b;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> residual(s.size());
  for (Eigen::Index n = 0; n < s.size(); ++n) residual(n) = y(n) - sigmoid(s(n));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g(w.size() + 1);
  g.head(w.size()) = C * (X.transpose() * residual);
  g(w.size()) = C * residual.sum();
  if (penalty == Penalty::l1)
    g.head(w.size()) -= w.unaryExpr([](Scalar v) { return Scalar((v > 0) - (v < 0)); });
  else
    g.head(w.size()) -= w;
  return g;
}

/// Throws Error unless both classes are present. Non-convergence within
/// max_iter is reported through LinearModel::converged.
LinearModel fit_logistic(const FeatureTable& X, const Labels& y, const LogisticOptions& options = {});

/// Training rows with identical features merged: row r stands for total(r)
/// records, pos(r) of them positive.
struct LogisticData {
  FeatureTable X;
  Eigen::VectorXd pos;
  Eigen::VectorXd total;
};
LogisticData merge_rows(const FeatureTable& X, const Labels& y);
LinearModel fit_logistic(const LogisticData& data, const LogisticOptions& options = {});

// --- naive Bayes --------------------------------------------------------------

/// Bernoulli naive Bayes. Row y of log_p1 / log_p0 holds log P(x_k = 1 | y)
/// and log P(x_k = 0 | y); entries are -inf when alpha = 0 and a count is 0.
struct NBModel {
  Eigen::MatrixXd log_p1;
  Eigen::MatrixXd log_p0;
  Eigen::Vector2d log_prior = Eigen::Vector2d::Zero();
  double alpha = 1.0;
};

NBModel fit_naive_bayes(const FeatureTable& X, const Labels& y, double alpha = 1.0);

// --- random forest ------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  int left = -1;     // child for feature value 0
  int right = -1;    // child for feature value 1
  double value = 0.0;
  int samples = 0;
  int depth = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  template <typename Row>
  double predict(const Row& row) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const auto& node = nodes[static_cast<std::size_t>(at)];
      at = row(node.feature) > 0.5 ? node.right : node.left;
    }
    return nodes[static_cast<std::size_t>(at)].value;
  }
};

struct ForestOptions {
  int max_depth = 8;
  int min_samples_leaf = 1;
  int n_trees = 100;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  ForestOptions options;
  std::uint64_t seed = 0;
  Eigen::Index num_features = 0;
};

/// Gini trees on bootstrap samples with ceil(sqrt(p)) candidate features per
/// split; features must be binary.
ForestModel fit_random_forest(const FeatureTable& X, const Labels& y, const ForestOptions& options,
                              std::uint64_t seed);

// --- prediction ---------------------------------------------------------------

using Model = std::variant<LinearModel, NBModel, ForestModel>;

Eigen::VectorXd predict_proba(const LinearModel& model, const FeatureTable& X);
Eigen::VectorXd predict_proba(const NBModel& model, const FeatureTable& X);
/// Mean of leaf fractions; summed in sorted order so tree order is irrelevant.
Eigen::VectorXd predict_proba(const ForestModel& model, const FeatureTable& X);
Eigen::VectorXd predict_proba(const Model& model, const FeatureTable& X);
Eigen::Index feature_count(const Model& model);

// --- AUROC --------------------------------------------------------------------

/// Probability that a random positive outscores a random negative, ties
/// counted one half (Mann-Whitney with mid-ranks).
template <typename ScoresDerived, typename LabelsDerived>
double auroc(const Eigen::DenseBase<ScoresDerived>& scores, const Eigen::DenseBase<LabelsDerived>& labels) {
  const Eigen::Index n = scores.size();
  if (labels.size() != n) throw Error("auroc: scores and labels differ in length");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    order[static_cast<std::size_t>(k)] = k;
    if (std::isnan(static_cast<double>(scores(k)))) throw Error("auroc: NaN score");
  }
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });
  double positives = 0;
  double rank_sum = 0;
  for (Eigen::Index start = 0; start < n;) {
    Eigen::Index end = start;
    while (end < n && scores(order[static_cast<std::size_t>(end)]) == scores(order[static_cast<std::size_t>(start)]))
      ++end;
    const double mid_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (Eigen::Index k = start; k < end; ++k) {
      if (labels(order[static_cast<std::size_t>(k)]) > 0.5) {
        positives += 1;
        rank_sum += mid_rank;
      }
    }
    start = end;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0 || negatives == 0) throw Error("auroc: both classes must be present");
  return (rank_sum - positives * (positives + 1) / 2) / (positives * negatives);
}

// --- model selection ----------------------------------------------------------

enum class Family { logistic, random_forest, naive_bayes };
Family parse_family(const std::string& text);
std::string to_string(Family family);

struct LogisticCell {
  Penalty penalty = Penalty::l2;
  double C = 1.0;
};
struct ForestCell {
  int max_depth = 8;
  int min_samples_leaf = 1;
};
struct NBCell {
  double alpha = 1.0;
};
using GridCell = std::variant<LogisticCell, ForestCell, NBCell>;

std::string describe(const GridCell& cell);

/// n values from lo to hi, evenly spaced on a log scale, endpoints included.
std::vector<double> log_spaced(double lo, double hi, int n);
/// log_spaced rounded to the nearest integer.
std::vector<int> log_spaced_int(double lo, double hi, int n);

/// Logistic: {L1, L2} x 10 C values in [0.001, 10] (20 cells).
/// Random forest: 8 depths in [2, 1024] x 8 leaf sizes in [10, 200] (64 cells).
/// Naive Bayes: a single alpha = 1 cell.
std::vector<GridCell> default_grid(Family family);

/// True when `a` is strictly less complex than `b` (tie-break order).
bool simpler(const GridCell& a, const GridCell& b);

struct CVOptions {
  int folds = 3;
  int n_trees = 100;
  double tolerance = 1e-6;
  int max_iter = 100;
};

struct CVResult {
  GridCell best_params;
  std::size_t best_index = 0;
  std::vector<double> fold_auroc;
  double mean_auroc = 0.0;
  /// Mean AUROC for every grid cell, in grid order.
  std::vector<double> cell_mean_auroc;
  std::vector<std::vector<std::size_t>> folds;
  Model model;
};

/// Validation row indices per fold; each class is shuffled and dealt
/// round-robin so class proportions are preserved.
std::vector<std::vector<std::size_t>> stratified_folds(const Labels& y, int k, std::uint64_t seed);

/// `merged`, when given, must equal merge_rows(X, y); logistic cells reuse it.
Model fit_cell(const FeatureTable& X, const Labels& y, const GridCell& cell, const CVOptions& options,
               std::uint64_t seed, const LogisticData* merged = nullptr);

/// Throws Error when either class has fewer than k rows.
CVResult grid_search_cv(const FeatureTable& X, const Labels& y, const std::vector<GridCell>& grid,
                        const CVOptions& options, std::uint64_t seed);

}  // namespace hkg
