#include "hkg/estimators.hpp"

#include <limits>

namespace hkg {

namespace {

double safe_log(double v) { return v > 0 ? std::log(v) : -std::numeric_limits<double>::infinity(); }

}  // namespace

NBModel fit_naive_bayes(const FeatureTable& X, const Labels& y, double alpha) {
  if (y.size() != X.rows()) throw Error("fit_naive_bayes: label count does not match row count");
  if (!(alpha >= 0)) throw Error("fit_naive_bayes: alpha must be >= 0");
  const auto p = X.cols();
  Eigen::MatrixXd ones = Eigen::MatrixXd::Zero(2, p);
  Eigen::Vector2d class_count = Eigen::Vector2d::Zero();
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    if (y(n) != 0.0 && y(n) != 1.0) throw Error("fit_naive_bayes: labels must be 0 or 1");
    const int c = y(n) > 0.5 ? 1 : 0;
    class_count(c) += 1;
    for (FeatureTable::InnerIterator it(X, n); it; ++it) {
      if (it.value() != 1.0 && it.value() != 0.0) throw Error("fit_naive_bayes: features must be binary");
      ones(c, it.col()) += it.value();
    }
  }
  NBModel model;
  model.alpha = alpha;
  model.log_p1.resize(2, p);
  model.log_p0.resize(2, p);
  for (int c = 0; c < 2; ++c) {
    const double denom = class_count(c) + 2 * alpha;
    for (Eigen::Index k = 0; k < p; ++k) {
      // An empty class with alpha = 0 leaves 0/0; treat as uninformative.
      const double p1 = denom > 0 ? (ones(c, k) + alpha) / denom : 0.5;
      model.log_p1(c, k) = safe_log(p1);
      model.log_p0(c, k) = safe_log(1.0 - p1);
    }
    model.log_prior(c) = safe_log(class_count(c) / static_cast<double>(X.rows()));
  }
  return model;
}

Eigen::VectorXd predict_proba(const NBModel& model, const FeatureTable& X) {
  const auto p = model.log_p1.cols();
  if (X.cols() != p) throw Error("predict_proba: feature count mismatch");
  const bool finite = model.log_p1.allFinite() && model.log_p0.allFinite();
  Eigen::Vector2d base = model.log_p0.rowwise().sum();
  Eigen::VectorXd out(X.rows());
  Eigen::VectorXd dense(p);
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    Eigen::Vector2d joint = model.log_prior;
    if (finite) {
      joint += base;
      for (FeatureTable::InnerIterator it(X, n); it; ++it)
        if (it.value() > 0.5) joint += model.log_p1.col(it.col()) - model.log_p0.col(it.col());
    } else {
      dense.setZero();
      for (FeatureTable::InnerIterator it(X, n); it; ++it) dense(it.col()) = it.value();
      for (Eigen::Index k = 0; k < p; ++k) joint += dense(k) > 0.5 ? model.log_p1.col(k) : model.log_p0.col(k);
    }
    if (std::isinf(joint(0)) && std::isinf(joint(1)))
      out(n) = 0.5;
    else
      out(n) = sigmoid(joint(1) - joint(0));
  }
  return out;
}

}  // namespace hkg
