#include "hkg/graphlearn.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace hkg {

namespace {

constexpr std::uint64_t kStageLr = 0x4C52;
constexpr std::uint64_t kStageCausal = 0xCA05A1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fingerprint(const std::string& config) { return hex64(hash_string(config)); }

std::string grid_text(const std::vector<GridCell>& grid) {
  std::string out;
  for (const auto& c : grid) out += describe(c) + ";";
  return out;
}

Labels dense_column(const Eigen::SparseMatrix<double>& columns, Eigen::Index j) {
  return Labels(columns.col(j));
}

ScoreMatrix empty_scores(const Vocabulary& vocabulary, std::string learner) {
  ScoreMatrix out;
  out.vocabulary = vocabulary;
  out.values = Eigen::MatrixXd::Zero(vocabulary.num_diseases(), vocabulary.num_symptoms());
  out.raw = out.values;
  out.learner = std::move(learner);
  return out;
}

void check_demo(const RecordSet& records, DemoEncoding demo) {
  if (demo != DemoEncoding::none && !records.has_demographics())
    throw Error("demographic features requested but the records carry no age or sex");
}

// Distinct feature rows with their multiplicities.
struct UniqueRows {
  FeatureTable rows;
  Eigen::VectorXd counts;
};

UniqueRows unique_rows(const FeatureTable& X) {
  std::map<std::vector<std::pair<Eigen::Index, double>>, std::size_t> index;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> keys;
  std::vector<double> counts;
  std::vector<std::pair<Eigen::Index, double>> key;
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    key.clear();
    for (FeatureTable::InnerIterator it(X, n); it; ++it)
      if (it.value() != 0.0) key.emplace_back(it.col(), it.value());
    auto [it, inserted] = index.emplace(key, keys.size());
    if (inserted) {
      keys.push_back(key);
      counts.push_back(0);
    }
    counts[it->second] += 1;
  }
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t r = 0; r < keys.size(); ++r)
    for (const auto& [c, v] : keys[r]) entries.emplace_back(static_cast<Eigen::Index>(r), c, v);
  UniqueRows out;
  out.rows.resize(static_cast<Eigen::Index>(keys.size()), X.cols());
  out.rows.setFromTriplets(entries.begin(), entries.end());
  out.counts = Eigen::Map<Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(counts.size()));
  return out;
}

FeatureTable force_column(const FeatureTable& X, Eigen::Index column, double value) {
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(X.nonZeros() + X.rows()));
  for (Eigen::Index n = 0; n < X.outerSize(); ++n) {
    for (FeatureTable::InnerIterator it(X, n); it; ++it)
      if (it.col() != column) entries.emplace_back(n, it.col(), it.value());
    if (value != 0.0) entries.emplace_back(n, column, value);
  }
  FeatureTable out(X.rows(), X.cols());
  out.setFromTriplets(entries.begin(), entries.end());
  return out;
}

double class_minimum(const Labels& y) {
  const double pos = y.sum();
  return std::min(pos, static_cast<double>(y.size()) - pos);
}

}  // namespace

std::string format_double(double value) {
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

ScoreMatrix importance_noisy_or(const NoisyOrParams& params, const Vocabulary& vocabulary) {
  if (params.failure.rows() != vocabulary.num_diseases() || params.failure.cols() != vocabulary.num_symptoms())
    throw Error("importance_noisy_or: parameter shape does not match the vocabulary");
  auto out = empty_scores(vocabulary, "nor");
  out.values = 1.0 - params.failure.array();
  out.raw = out.values;
  return out;
}

ScoreMatrix importance_nb(const RecordSet& records, double alpha) {
  records.validate();
  if (!(alpha >= 0)) throw Error("importance_nb: alpha must be >= 0");
  auto out = empty_scores(records.vocabulary, "nb");
  out.rank_by_raw = true;
  out.fingerprint = fingerprint("nb alpha=" + format_double(alpha));
  const Eigen::MatrixXd co = Eigen::MatrixXd(records.diseases.transpose() * records.symptoms);
  const Eigen::VectorXd disease_count = Eigen::MatrixXd(records.diseases).colwise().sum().transpose();
  const Eigen::VectorXd symptom_count = Eigen::MatrixXd(records.symptoms).colwise().sum().transpose();
  const double n = static_cast<double>(records.size());
  auto clamped_log = [](double numerator, double denominator) {
    if (numerator <= 0 || denominator <= 0) return -30.0;
    return std::clamp(std::log(numerator / denominator), -30.0, 30.0);
  };
  for (Eigen::Index j = 0; j < co.rows(); ++j) {
    const double n1 = disease_count(j);
    const double n0 = n - n1;
    if (n1 == 0 || n0 == 0) {
      out.warnings.push_back("disease '" + records.vocabulary.diseases()[static_cast<std::size_t>(j)] +
                             (n1 == 0 ? "' never observed" : "' present in every record") + "; row set to zero");
      continue;
    }
    for (Eigen::Index i = 0; i < co.cols(); ++i) {
      const double on = clamped_log(co(j, i) + alpha, n1 + 2 * alpha);
      const double off = clamped_log(symptom_count(i) - co(j, i) + alpha, n0 + 2 * alpha);
      out.raw(j, i) = on - off;
    }
  }
  out.values = out.raw.cwiseMax(0.0);
  return out;
}

ScoreMatrix importance_lr(const RecordSet& records, const LearnOptions& options) {
  records.validate();
  check_demo(records, options.demo);
  const auto features = attach_demographics(records, Block::symptoms, options.demo);
  const auto grid = options.grid.empty() ? default_grid(Family::logistic) : options.grid;
  auto out = empty_scores(records.vocabulary, "lr");
  out.fingerprint = fingerprint("lr demo=" + to_string(options.demo) + " seed=" + std::to_string(options.seed) +
                                " grid=" + grid_text(grid));
  const Eigen::SparseMatrix<double> disease_columns = records.diseases;
  const auto d = records.vocabulary.num_diseases();
  const auto s = records.vocabulary.num_symptoms();
  std::vector<std::string> row_warning(static_cast<std::size_t>(d));
  parallel_for(static_cast<std::size_t>(d), options.threads, [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const Labels y = dense_column(disease_columns, j);
    if (class_minimum(y) < options.cv.folds) {
      row_warning[jj] = "disease '" + records.vocabulary.diseases()[jj] + "' has fewer than " +
                        std::to_string(options.cv.folds) + " records in a class; row set to zero";
      return;
    }
    const auto cv = grid_search_cv(features.table, y, grid, options.cv, derive_seed(options.seed, kStageLr, hash_string(records.vocabulary.diseases()[jj])));
    const auto& model = std::get<LinearModel>(cv.model);
    out.raw.row(j) = model.weights.head(s).transpose();
  });
  for (auto& w : row_warning)
    if (!w.empty()) out.warnings.push_back(std::move(w));
  out.values = out.raw.cwiseMax(0.0);
  return out;
}

InterventionMeans intervention_means(const Model& model, const FeatureTable& X, Eigen::Index column) {
  if (column < 0 || column >= X.cols()) throw Error("intervention_means: column out of range");
  const auto unique = unique_rows(X);
  const double total = unique.counts.sum();
  InterventionMeans out;
  out.forced_on = predict_proba(model, force_column(unique.rows, column, 1.0)).dot(unique.counts) / total;
  out.forced_off = predict_proba(model, force_column(unique.rows, column, 0.0)).dot(unique.counts) / total;
  return out;
}

ScoreMatrix importance_causal(const RecordSet& records, Family family, const LearnOptions& options) {
  records.validate();
  check_demo(records, options.demo);
  const auto features = attach_demographics(records, Block::diseases, options.demo);
  const auto grid = options.grid.empty() ? default_grid(family) : options.grid;
  const std::string tag = family == Family::logistic ? "causal_lr" : family == Family::random_forest ? "causal_rf" : "causal_nb";
  auto out = empty_scores(records.vocabulary, tag);
  out.fingerprint = fingerprint(tag + " demo=" + to_string(options.demo) + " seed=" + std::to_string(options.seed) +
                                " eps=" + format_double(options.causal_epsilon) +
                                " trees=" + std::to_string(options.cv.n_trees) + " grid=" + grid_text(grid));
  const Eigen::SparseMatrix<double> symptom_columns = records.symptoms;
  const auto unique = unique_rows(features.table);
  const double total = unique.counts.sum();
  const auto d = records.vocabulary.num_diseases();
  const auto s = records.vocabulary.num_symptoms();
  out.raw.setOnes();
  std::vector<std::string> row_warning(static_cast<std::size_t>(s));
  parallel_for(static_cast<std::size_t>(s), options.threads, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const Labels y = dense_column(symptom_columns, i);
    if (class_minimum(y) < options.cv.folds) {
      row_warning[ii] = "symptom '" + records.vocabulary.symptoms()[ii] + "' has fewer than " +
                        std::to_string(options.cv.folds) + " records in a class; column set to zero";
      return;
    }
    const auto cv = grid_search_cv(features.table, y, grid, options.cv, derive_seed(options.seed, kStageCausal, hash_string(records.vocabulary.symptoms()[ii])));
    for (Eigen::Index j = 0; j < d; ++j) {
      const double on = predict_proba(cv.model, force_column(unique.rows, j, 1.0)).dot(unique.counts) / total;
      const double off = predict_proba(cv.model, force_column(unique.rows, j, 0.0)).dot(unique.counts) / total;
      out.raw(j, i) = on / std::max(options.causal_epsilon, off);
    }
  });
  for (auto& w : row_warning)
    if (!w.empty()) out.warnings.push_back(std::move(w));
  out.values = (out.raw.array() - 1.0).cwiseMax(0.0);
  return out;
}

Learner parse_learner(const std::string& text) {
  if (text == "lr") return Learner::lr;
  if (text == "nb") return Learner::nb;
  if (text == "nor") return Learner::nor;
  if (text == "causal_lr") return Learner::causal_lr;
  if (text == "causal_rf") return Learner::causal_rf;
  if (text == "causal_nb") return Learner::causal_nb;
  throw Error("unknown model '" + text + "'");
}

std::string to_string(Learner learner) {
  switch (learner) {
    case Learner::lr: return "lr";
    case Learner::nb: return "nb";
    case Learner::nor: return "nor";
    case Learner::causal_lr: return "causal_lr";
    case Learner::causal_rf: return "causal_rf";
    case Learner::causal_nb: return "causal_nb";
  }
  return "?";
}

DemoEncoding default_demo_encoding(Learner learner) {
  switch (learner) {
    case Learner::lr:
    case Learner::causal_lr: return DemoEncoding::continuous;
    case Learner::nb: return DemoEncoding::none;
    default: return DemoEncoding::bracket;
  }
}

ScoreMatrix learn(const RecordSet& records, Learner learner, const LearnOptions& options) {
  check_demo(records, options.demo);
  switch (learner) {
    case Learner::lr: return importance_lr(records, options);
    case Learner::nb:
      if (options.demo != DemoEncoding::none) throw Error("the naive Bayes importance does not use demographics");
      return importance_nb(records, options.nb_alpha);
    case Learner::nor: {
      auto nor_options = options.noisy_or;
      nor_options.seed = options.seed;
      nor_options.threads = options.threads;
      const auto params = fit_noisy_or(records, nor_options, options.demo);
      auto out = importance_noisy_or(params, records.vocabulary);
      out.fingerprint = fingerprint("nor demo=" + to_string(options.demo) + " seed=" + std::to_string(options.seed) +
                                    " tol=" + format_double(nor_options.tolerance) +
                                    " max_iter=" + std::to_string(nor_options.max_iter));
      if (!params.converged)
        out.warnings.push_back("noisy-OR EM stopped at max_iter=" + std::to_string(params.iterations) +
                               " before reaching tolerance");
      return out;
    }
    case Learner::causal_lr: return importance_causal(records, Family::logistic, options);
    case Learner::causal_rf: return importance_causal(records, Family::random_forest, options);
    case Learner::causal_nb: return importance_causal(records, Family::naive_bayes, options);
  }
  throw Error("unreachable learner");
}

void write_scores(std::ostream& out, const ScoreMatrix& scores, bool use_raw) {
  const auto& table = use_raw ? scores.raw : scores.values;
  const auto& diseases = scores.vocabulary.diseases();
  const auto& symptoms = scores.vocabulary.symptoms();
  std::vector<Eigen::Index> disease_order(diseases.size());
  std::iota(disease_order.begin(), disease_order.end(), Eigen::Index{0});
  std::sort(disease_order.begin(), disease_order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return diseases[static_cast<std::size_t>(a)] < diseases[static_cast<std::size_t>(b)]; });
  out << "disease\tsymptom\tscore\n";
  for (auto j : disease_order) {
    std::vector<Eigen::Index> order(symptoms.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (table(j, a) != table(j, b)) return table(j, a) > table(j, b);
      return symptoms[static_cast<std::size_t>(a)] < symptoms[static_cast<std::size_t>(b)];
    });
    for (auto i : order)
      out << diseases[static_cast<std::size_t>(j)] << '\t' << symptoms[static_cast<std::size_t>(i)] << '\t'
          << format_double(table(j, i)) << '\n';
  }
}

ScoreMatrix read_scores(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::map<std::pair<std::string, std::string>, double> entries;
  std::set<std::string> diseases;
  std::set<std::string> symptoms;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "disease\tsymptom\tscore") throw Error("score file: missing header at line " + std::to_string(line_no));
      header = true;
      continue;
    }
    std::istringstream fields(line);
    std::string disease, symptom, value;
    if (!std::getline(fields, disease, '\t') || !std::getline(fields, symptom, '\t') || !std::getline(fields, value))
      throw Error("score file: malformed line " + std::to_string(line_no));
    double v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v))
      throw Error("score file: invalid score at line " + std::to_string(line_no));
    if (!entries.emplace(std::make_pair(disease, symptom), v).second)
      throw Error("score file: duplicate pair at line " + std::to_string(line_no));
    diseases.insert(disease);
    symptoms.insert(symptom);
  }
  if (!header) throw Error("score file: empty");
  ScoreMatrix out;
  out.vocabulary = Vocabulary({diseases.begin(), diseases.end()}, {symptoms.begin(), symptoms.end()});
  out.values.resize(out.vocabulary.num_diseases(), out.vocabulary.num_symptoms());
  if (entries.size() != static_cast<std::size_t>(out.values.size()))
    throw Error("score file: expected the full disease x symptom cross product");
  for (const auto& [key, v] : entries)
    out.values(*out.vocabulary.disease_index(key.first), *out.vocabulary.symptom_index(key.second)) = v;
  out.raw = out.values;
  out.learner = "file";
  return out;
}

}  // namespace hkg
