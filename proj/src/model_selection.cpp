#include "hkg/estimators.hpp"

#include <map>
#include <sstream>

namespace hkg {

Eigen::VectorXd predict_proba(const Model& model, const FeatureTable& X) {
  return std::visit([&](const auto& m) { return predict_proba(m, X); }, model);
}

Eigen::Index feature_count(const Model& model) {
  struct Visitor {
    Eigen::Index operator()(const LinearModel& m) const { return m.weights.size(); }
    Eigen::Index operator()(const NBModel& m) const { return m.log_p1.cols(); }
    Eigen::Index operator()(const ForestModel& m) const { return m.num_features; }
  };
  return std::visit(Visitor{}, model);
}

Family parse_family(const std::string& text) {
  if (text == "logistic") return Family::logistic;
  if (text == "random_forest") return Family::random_forest;
  if (text == "naive_bayes") return Family::naive_bayes;
  throw Error("unknown model family '" + text + "'");
}

std::string to_string(Family family) {
  switch (family) {
    case Family::logistic: return "logistic";
    case Family::random_forest: return "random_forest";
    case Family::naive_bayes: return "naive_bayes";
  }
  return "?";
}

std::string describe(const GridCell& cell) {
  std::ostringstream out;
  out.precision(6);
  if (const auto* l = std::get_if<LogisticCell>(&cell)) {
    out << "logistic penalty=" << to_string(l->penalty) << " C=" << l->C;
  } else if (const auto* f = std::get_if<ForestCell>(&cell)) {
    out << "random_forest max_depth=" << f->max_depth << " min_samples_leaf=" << f->min_samples_leaf;
  } else {
    out << "naive_bayes alpha=" << std::get<NBCell>(cell).alpha;
  }
  return out.str();
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (n < 1 || !(lo > 0) || !(hi >= lo)) throw Error("log_spaced: invalid range");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = n == 1 ? lo : std::pow(10.0, a + (b - a) * k / (n - 1));
  out.front() = lo;
  out.back() = n == 1 ? lo : hi;
  return out;
}

std::vector<int> log_spaced_int(double lo, double hi, int n) {
  std::vector<int> out;
  for (double v : log_spaced(lo, hi, n)) out.push_back(static_cast<int>(std::lround(v)));
  return out;
}

std::vector<GridCell> default_grid(Family family) {
  std::vector<GridCell> grid;
  switch (family) {
    case Family::logistic:
      for (auto penalty : {Penalty::l1, Penalty::l2})
        for (double C : log_spaced(0.001, 10.0, 10)) grid.emplace_back(LogisticCell{penalty, C});
      break;
    case Family::random_forest:
      for (int depth : log_spaced_int(2, 1024, 8))
        for (int leaf : log_spaced_int(10, 200, 8)) grid.emplace_back(ForestCell{depth, leaf});
      break;
    case Family::naive_bayes:
      grid.emplace_back(NBCell{1.0});
      break;
  }
  return grid;
}

bool simpler(const GridCell& a, const GridCell& b) {
  if (a.index() != b.index()) return false;
  if (const auto* la = std::get_if<LogisticCell>(&a)) return la->C < std::get<LogisticCell>(b).C;
  if (const auto* fa = std::get_if<ForestCell>(&a)) {
    const auto& fb = std::get<ForestCell>(b);
    if (fa->max_depth != fb.max_depth) return fa->max_depth < fb.max_depth;
    return fa->min_samples_leaf > fb.min_samples_leaf;
  }
  return std::get<NBCell>(a).alpha > std::get<NBCell>(b).alpha;
}

std::vector<std::vector<std::size_t>> stratified_folds(const Labels& y, int k, std::uint64_t seed) {
  if (k < 2) throw Error("stratified_folds: need at least 2 folds");
  std::vector<std::size_t> classes[2];
  for (Eigen::Index n = 0; n < y.size(); ++n) classes[y(n) > 0.5 ? 1 : 0].push_back(static_cast<std::size_t>(n));
  if (classes[1].size() < static_cast<std::size_t>(k) || classes[0].size() < static_cast<std::size_t>(k))
    throw Error("stratified_folds: fewer than " + std::to_string(k) + " rows in a class (" +
                std::to_string(classes[1].size()) + " positives, " + std::to_string(classes[0].size()) +
                " negatives)");
  Rng rng(derive_seed(seed, 0xF01D5ULL));
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (int c = 1; c >= 0; --c) {
    auto& rows = classes[c];
    for (std::size_t i = rows.size(); i > 1; --i)
      std::swap(rows[i - 1], rows[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(i) - 1))]);
    for (std::size_t i = 0; i < rows.size(); ++i) folds[i % static_cast<std::size_t>(k)].push_back(rows[i]);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

Model fit_cell(const FeatureTable& X, const Labels& y, const GridCell& cell, const CVOptions& options,
               std::uint64_t seed, const LogisticData* merged) {
  if (const auto* l = std::get_if<LogisticCell>(&cell)) {
    const LogisticOptions lo{l->penalty, l->C, options.tolerance, options.max_iter, {}};
    return merged ? fit_logistic(*merged, lo) : fit_logistic(X, y, lo);
  }
  if (const auto* f = std::get_if<ForestCell>(&cell))
    return fit_random_forest(X, y, ForestOptions{f->max_depth, f->min_samples_leaf, options.n_trees}, seed);
  return fit_naive_bayes(X, y, std::get<NBCell>(cell).alpha);
}

CVResult grid_search_cv(const FeatureTable& X, const Labels& y, const std::vector<GridCell>& grid,
                        const CVOptions& options, std::uint64_t seed) {
  if (grid.empty()) throw Error("grid_search_cv: empty grid");
  if (y.size() != X.rows()) throw Error("grid_search_cv: label count does not match row count");
  CVResult result;
  result.folds = stratified_folds(y, options.folds, seed);

  const bool any_logistic = std::any_of(grid.begin(), grid.end(),
                                        [](const GridCell& c) { return std::holds_alternative<LogisticCell>(c); });
  struct Split {
    FeatureTable train_X, valid_X;
    Labels train_y, valid_y;
    LogisticData merged;
  };
  std::vector<Split> splits;
  for (const auto& valid : result.folds) {
    std::vector<char> in_valid(static_cast<std::size_t>(y.size()), 0);
    for (auto r : valid) in_valid[r] = 1;
    std::vector<std::size_t> train;
    for (std::size_t r = 0; r < in_valid.size(); ++r)
      if (!in_valid[r]) train.push_back(r);
    Split s;
    s.train_X = select_rows(X, train);
    s.valid_X = select_rows(X, valid);
    s.train_y.resize(static_cast<Eigen::Index>(train.size()));
    s.valid_y.resize(static_cast<Eigen::Index>(valid.size()));
    for (std::size_t r = 0; r < train.size(); ++r) s.train_y(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(train[r]));
    for (std::size_t r = 0; r < valid.size(); ++r) s.valid_y(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(valid[r]));
    if (any_logistic) s.merged = merge_rows(s.train_X, s.train_y);
    splits.push_back(std::move(s));
  }

  // Logistic cells start from the previous cell's fit with the same penalty
  // on the same fold (a warm start along the C path).
  std::map<std::pair<std::size_t, int>, Eigen::VectorXd> warm;
  std::vector<std::vector<double>> fold_scores(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    double total = 0;
    for (std::size_t f = 0; f < splits.size(); ++f) {
      Model model;
      if (const auto* l = std::get_if<LogisticCell>(&grid[c])) {
        const auto key = std::make_pair(f, static_cast<int>(l->penalty));
        LogisticOptions lo{l->penalty, l->C, options.tolerance, options.max_iter, {}};
        if (const auto it = warm.find(key); it != warm.end()) lo.initial = it->second;
        auto fit = fit_logistic(splits[f].merged, lo);
        Eigen::VectorXd theta(fit.weights.size() + 1);
        theta << fit.weights, fit.intercept;
        warm[key] = std::move(theta);
        model = std::move(fit);
      } else {
        model = fit_cell(splits[f].train_X, splits[f].train_y, grid[c], options, derive_seed(seed, 1, f));
      }
      const double score = auroc(predict_proba(model, splits[f].valid_X), splits[f].valid_y);
      fold_scores[c].push_back(score);
      total += score;
    }
    result.cell_mean_auroc.push_back(total / static_cast<double>(splits.size()));
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < grid.size(); ++c) {
    const double m = result.cell_mean_auroc[c];
    const double b = result.cell_mean_auroc[best];
    if (m > b || (m == b && simpler(grid[c], grid[best]))) best = c;
  }
  result.best_index = best;
  result.best_params = grid[best];
  result.fold_auroc = fold_scores[best];
  result.mean_auroc = result.cell_mean_auroc[best];
  result.model = fit_cell(X, y, grid[best], options, derive_seed(seed, 2));
  return result;
}

}  // namespace hkg
