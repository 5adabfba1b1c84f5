#include "hkg/estimators.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <map>

namespace hkg {

std::string to_string(Penalty penalty) { return penalty == Penalty::l1 ? "l1" : "l2"; }

namespace {

void check_binary_labels(const Labels& y, Eigen::Index rows) {
  if (y.size() != rows) throw Error("label count does not match row count");
  for (Eigen::Index n = 0; n < y.size(); ++n)
    if (y(n) != 0.0 && y(n) != 1.0) throw Error("labels must be 0 or 1");
}

// Smooth part of the negated objective: C * sum_n [log(1 + e^s) - y s] over
// merged rows.
struct LogLoss {
  const FeatureTable& X;
  const Eigen::VectorXd& pos;
  const Eigen::VectorXd& total;
  double C;

  Eigen::VectorXd scores(const Eigen::VectorXd& theta) const {
    const auto p = X.cols();
    return (X * theta.head(p)).array() + theta(p);
  }

  double value(const Eigen::VectorXd& s) const {
    double loss = 0;
    for (Eigen::Index n = 0; n < s.size(); ++n) loss += total(n) * softplus(s(n)) - pos(n) * s(n);
    return C * loss;
  }

  // Gradient and Hessian of the loss at scores s, intercept as last coordinate.
  void derivatives(const Eigen::VectorXd& s, Eigen::VectorXd& g, Eigen::MatrixXd& H) const {
    const auto p = X.cols();
    g.setZero(p + 1);
    H.setZero(p + 1, p + 1);
    const auto* outer = X.outerIndexPtr();
    const auto* inner = X.innerIndexPtr();
    const auto* values = X.valuePtr();
    double* h = H.data();
    const auto ld = H.rows();
    for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
      const double mu = sigmoid(s(n));
      const double r = C * (total(n) * mu - pos(n));
      const double w = C * total(n) * mu * (1.0 - mu);
      g(p) += r;
      h[p * ld + p] += w;
      // Column indices within a compressed row are ascending.
      for (auto a = outer[n]; a < outer[n + 1]; ++a) {
        const auto ca = inner[a];
        const double wa = w * values[a];
        g(ca) += r * values[a];
        h[p * ld + ca] += wa;
        double* column = h + ca * ld;
        for (auto b = outer[n]; b <= a; ++b) column[inner[b]] += wa * values[b];
      }
    }
    H.triangularView<Eigen::StrictlyLower>() = H.transpose().eval();
  }
};

Eigen::VectorXd start_point(const LogisticOptions& options, Eigen::Index p) {
  if (options.initial.size() == 0) return Eigen::VectorXd::Zero(p + 1);
  if (options.initial.size() != p + 1) throw Error("fit_logistic: initial point has the wrong size");
  return options.initial;
}

// Minimum-norm subgradient of the negated L1 objective.
double l1_optimality(const Eigen::VectorXd& g, const Eigen::VectorXd& theta) {
  const auto p = theta.size() - 1;
  double sq = g(p) * g(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    double v;
    if (theta(k) > 0)
      v = g(k) + 1.0;
    else if (theta(k) < 0)
      v = g(k) - 1.0;
    else
      v = std::max(std::abs(g(k)) - 1.0, 0.0);
    sq += v * v;
  }
  return std::sqrt(sq);
}

double soft_threshold(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

LinearModel fit_l2(const LogLoss& loss, const LogisticOptions& options, double tol) {
  const auto p = loss.X.cols();
  Eigen::VectorXd theta = start_point(options, p);
  auto objective = [&](const Eigen::VectorXd& t, const Eigen::VectorXd& s) {
    return loss.value(s) + 0.5 * t.head(p).squaredNorm();
  };
  Eigen::VectorXd s = loss.scores(theta);
  double f = objective(theta, s);
  LinearModel model;
  model.penalty = Penalty::l2;
  model.C = loss.C;
  model.objective_trace.push_back(-f);
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    loss.derivatives(s, g, H);
    g.head(p) += theta.head(p);
    H.diagonal().head(p).array() += 1.0;
    H(p, p) += 1e-12;
    if (g.norm() < tol) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd step = -H.ldlt().solve(g);
    const double slope = g.dot(step);
    double t = 1.0;
    bool accepted = false;
    while (t > 1e-12) {
      Eigen::VectorXd trial = theta + t * step;
      Eigen::VectorXd trial_s = loss.scores(trial);
      const double trial_f = objective(trial, trial_s);
      if (trial_f <= f + 1e-4 * t * slope) {
        theta = std::move(trial);
        s = std::move(trial_s);
        f = trial_f;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    model.iterations = iter + 1;
    if (!accepted) break;
    model.objective_trace.push_back(-f);
  }
  if (!model.converged) {
    loss.derivatives(s, g, H);
    g.head(p) += theta.head(p);
    model.converged = g.norm() < tol;
  }
  model.weights = theta.head(p);
  model.intercept = theta(p);
  return model;
}

// Proximal Newton: coordinate descent on the penalized quadratic model, then
// a backtracking line search on the true objective.
LinearModel fit_l1(const LogLoss& loss, const LogisticOptions& options, double tol) {
  const auto p = loss.X.cols();
  Eigen::VectorXd theta = start_point(options, p);
  auto l1 = [&](const Eigen::VectorXd& t) { return t.head(p).lpNorm<1>(); };
  Eigen::VectorXd s = loss.scores(theta);
  double f = loss.value(s) + l1(theta);
  LinearModel model;
  model.penalty = Penalty::l1;
  model.C = loss.C;
  model.objective_trace.push_back(-f);
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double inner_tol = 1e-4;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    loss.derivatives(s, g, H);
    if (l1_optimality(g, theta) < tol) {
      model.converged = true;
      break;
    }
    H.diagonal().array() += 1e-12;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd Hd = Eigen::VectorXd::Zero(p + 1);
    for (int sweep = 0; sweep < 200; ++sweep) {
      double max_change = 0;
      for (Eigen::Index k = 0; k <= p; ++k) {
        const double a = H(k, k);
        const double c = g(k) + Hd(k) - a * d(k);
        double z;
        if (k == p)
          z = -c / a;
        else
          z = soft_threshold(theta(k) - c / a, 1.0 / a) - theta(k);
        const double delta = z - d(k);
        if (delta != 0.0) {
          d(k) = z;
          Hd += delta * H.col(k);
          max_change = std::max(max_change, std::abs(delta) * std::sqrt(a));
        }
      }
      if (max_change < inner_tol) break;
    }
    inner_tol = std::max(inner_tol * 0.1, 1e-12);
    const double decrease = g.dot(d) + (theta + d).head(p).lpNorm<1>() - l1(theta);
    double t = 1.0;
    bool accepted = false;
    while (t > 1e-12) {
      Eigen::VectorXd trial = theta + t * d;
      Eigen::VectorXd trial_s = loss.scores(trial);
      const double trial_f = loss.value(trial_s) + l1(trial);
      if (trial_f <= f + 0.01 * t * std::min(decrease, 0.0) && trial_f <= f) {
        theta = std::move(trial);
        s = std::move(trial_s);
        f = trial_f;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    model.iterations = iter + 1;
    if (!accepted) break;
    model.objective_trace.push_back(-f);
  }
  if (!model.converged) {
    loss.derivatives(s, g, H);
    model.converged = l1_optimality(g, theta) < tol;
  }
  model.weights = theta.head(p);
  model.intercept = theta(p);
  return model;
}

}  // namespace

LogisticData merge_rows(const FeatureTable& X, const Labels& y) {
  check_binary_labels(y, X.rows());
  std::map<std::vector<std::pair<Eigen::Index, double>>, Eigen::Index> index;
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<double> pos;
  std::vector<double> total;
  std::vector<std::pair<Eigen::Index, double>> key;
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    key.clear();
    for (FeatureTable::InnerIterator it(X, n); it; ++it)
      if (it.value() != 0.0) key.emplace_back(it.col(), it.value());
    const auto next = static_cast<Eigen::Index>(pos.size());
    auto [slot, inserted] = index.emplace(key, next);
    if (inserted) {
      for (const auto& [col, v] : key) entries.emplace_back(next, col, v);
      pos.push_back(0);
      total.push_back(0);
    }
    pos[static_cast<std::size_t>(slot->second)] += y(n);
    total[static_cast<std::size_t>(slot->second)] += 1;
  }
  LogisticData out;
  out.X.resize(static_cast<Eigen::Index>(pos.size()), X.cols());
  out.X.setFromTriplets(entries.begin(), entries.end());
  out.pos = Eigen::Map<Eigen::VectorXd>(pos.data(), static_cast<Eigen::Index>(pos.size()));
  out.total = Eigen::Map<Eigen::VectorXd>(total.data(), static_cast<Eigen::Index>(total.size()));
  return out;
}

LinearModel fit_logistic(const LogisticData& data, const LogisticOptions& options) {
  const double positives = data.pos.sum();
  const double records = data.total.sum();
  if (positives == 0 || positives == records) throw Error("fit_logistic: labels contain a single class");
  if (!(options.C > 0)) throw Error("fit_logistic: C must be positive");
  const LogLoss loss{data.X, data.pos, data.total, options.C};
  const double tol = options.tolerance * std::max(1.0, options.C * records);
  return options.penalty == Penalty::l2 ? fit_l2(loss, options, tol) : fit_l1(loss, options, tol);
}

LinearModel fit_logistic(const FeatureTable& X, const Labels& y, const LogisticOptions& options) {
  return fit_logistic(merge_rows(X, y), options);
}

Eigen::VectorXd predict_proba(const LinearModel& model, const FeatureTable& X) {
  if (X.cols() != model.weights.size()) throw Error("predict_proba: feature count mismatch");
  Eigen::VectorXd s = (X * model.weights).array() + model.intercept;
  return s.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace hkg
