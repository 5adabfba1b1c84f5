#include "hkg/graphlearn.hpp"

#include <map>

namespace hkg {

namespace {

constexpr double kMinFailure = 1e-12;
constexpr double kMaxLeak = 1.0 - 1e-12;

// Records collapsed by their set of active parents. Symptoms are conditionally
// independent given the parents, so per-pattern counts are sufficient.
struct PatternTable {
  std::vector<std::vector<int>> parents;       // active parent columns per pattern
  Eigen::VectorXd total;                       // records per pattern
  Eigen::MatrixXd positives;                   // pattern x symptom counts with x_i = 1
  std::vector<std::vector<int>> member_of;     // patterns containing each parent
  Eigen::VectorXd parent_total;                // records with each parent active
};

FeatureTable parent_table(const RecordSet& records, DemoEncoding demo) {
  if (demo == DemoEncoding::continuous) throw Error("noisy-OR parents must be binary; use bracket demographics");
  if (demo == DemoEncoding::none) return records.diseases;
  return hstack(records.diseases, demographic_columns(records, demo));
}

PatternTable build_patterns(const FeatureTable& parents, const SparseRows<double>& symptoms) {
  PatternTable t;
  std::map<std::vector<int>, int> index;
  std::vector<int> pattern_of(static_cast<std::size_t>(parents.rows()));
  std::vector<int> active;
  for (Eigen::Index n = 0; n < parents.outerSize(); ++n) {
    active.clear();
    for (FeatureTable::InnerIterator it(parents, n); it; ++it)
      if (it.value() > 0.5) active.push_back(static_cast<int>(it.col()));
    auto [it, inserted] = index.emplace(active, static_cast<int>(t.parents.size()));
    if (inserted) t.parents.push_back(active);
    pattern_of[static_cast<std::size_t>(n)] = it->second;
  }
  const auto g = static_cast<Eigen::Index>(t.parents.size());
  t.total = Eigen::VectorXd::Zero(g);
  t.positives = Eigen::MatrixXd::Zero(g, symptoms.cols());
  for (Eigen::Index n = 0; n < symptoms.outerSize(); ++n) {
    const auto p = pattern_of[static_cast<std::size_t>(n)];
    t.total(p) += 1;
    for (SparseRows<double>::InnerIterator it(symptoms, n); it; ++it) t.positives(p, it.col()) += 1;
  }
  t.member_of.resize(static_cast<std::size_t>(parents.cols()));
  t.parent_total = Eigen::VectorXd::Zero(parents.cols());
  for (Eigen::Index p = 0; p < g; ++p) {
    for (int j : t.parents[static_cast<std::size_t>(p)]) {
      t.member_of[static_cast<std::size_t>(j)].push_back(static_cast<int>(p));
      t.parent_total(j) += t.total(p);
    }
  }
  return t;
}

double log_or_zero(double count, double prob) {
  if (count == 0) return 0.0;
  return count * std::log(prob);
}

// One EM step for symptom i. Returns the log-likelihood at the incoming
// parameters; leak(i) and failure.col(i) are replaced by the update.
double em_step(const PatternTable& t, Eigen::Index i, double n_records, double& leak, Eigen::Ref<Eigen::VectorXd> failure) {
  const auto g = static_cast<Eigen::Index>(t.parents.size());
  double ll = 0;
  double leak_expect = 0;
  Eigen::VectorXd act_expect = Eigen::VectorXd::Zero(failure.size());
  for (Eigen::Index p = 0; p < g; ++p) {
    double off = 1.0 - leak;
    for (int j : t.parents[static_cast<std::size_t>(p)]) off *= failure(j);
    const double on = 1.0 - off;
    const double pos = t.positives(p, i);
    const double neg = t.total(p) - pos;
    ll += log_or_zero(pos, on) + log_or_zero(neg, off);
    if (pos > 0) {
      const double ratio = pos / on;
      leak_expect += leak * ratio;
      for (int j : t.parents[static_cast<std::size_t>(p)]) act_expect(j) += (1.0 - failure(j)) * ratio;
    }
  }
  leak = std::min(leak_expect / n_records, kMaxLeak);
  for (Eigen::Index j = 0; j < failure.size(); ++j) {
    if (t.parent_total(j) == 0) continue;
    failure(j) = std::clamp(1.0 - act_expect(j) / t.parent_total(j), kMinFailure, 1.0);
  }
  return ll;
}

double symptom_log_likelihood(const PatternTable& t, Eigen::Index i, double leak, const Eigen::Ref<const Eigen::VectorXd>& failure) {
  double ll = 0;
  for (std::size_t p = 0; p < t.parents.size(); ++p) {
    double off = 1.0 - leak;
    for (int j : t.parents[p]) off *= failure(j);
    const double pos = t.positives(static_cast<Eigen::Index>(p), i);
    ll += log_or_zero(pos, 1.0 - off) + log_or_zero(t.total(static_cast<Eigen::Index>(p)) - pos, off);
  }
  return ll;
}

// Multiplicative jitter in [0.95, 1.05) keyed by the names, so relabeling the
// vocabulary does not change any pair's starting point.
double init_jitter(std::uint64_t seed, const std::string& parent, const std::string& symptom) {
  const auto h = mix_seed(seed ^ hash_string(parent) ^ mix_seed(hash_string(symptom)));
  return 0.95 + 0.1 * static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

NoisyOrParams fit_noisy_or(const RecordSet& records, const NoisyOrOptions& options, DemoEncoding demo) {
  records.validate();
  const auto parents = parent_table(records, demo);
  const auto table = build_patterns(parents, records.symptoms);
  const auto d = records.vocabulary.num_diseases();
  const auto s = records.vocabulary.num_symptoms();
  const auto k = parents.cols();
  const double n = static_cast<double>(records.size());

  std::vector<std::string> parent_names = records.vocabulary.diseases();
  for (const auto& name : demographic_column_names(demo)) parent_names.push_back("demo:" + name);

  Eigen::VectorXd leak(s);
  Eigen::MatrixXd failure(k, s);
  const Eigen::RowVectorXd marginal = table.positives.colwise().sum() / n;
  for (Eigen::Index i = 0; i < s; ++i) {
    leak(i) = 0.5 * marginal(i);
    for (Eigen::Index j = 0; j < k; ++j) {
      failure(j, i) = table.parent_total(j) == 0
                          ? 1.0
                          : std::min(1.0, 0.9 * init_jitter(options.seed, parent_names[static_cast<std::size_t>(j)],
                                                            records.vocabulary.symptoms()[static_cast<std::size_t>(i)]));
    }
  }

  NoisyOrParams params;
  Eigen::VectorXd symptom_ll(s);
  double previous = 0;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    parallel_for(static_cast<std::size_t>(s), options.threads, [&](std::size_t i) {
      const auto col = static_cast<Eigen::Index>(i);
      symptom_ll(col) = em_step(table, col, n, leak(col), failure.col(col));
    });
    const double ll = symptom_ll.sum();
    params.trace.push_back(ll);
    params.iterations = iter + 1;
    if (iter > 0 && ll - previous < options.tolerance * n) {
      params.converged = true;
      break;
    }
    previous = ll;
  }
  double final_ll = 0;
  for (Eigen::Index i = 0; i < s; ++i) final_ll += symptom_log_likelihood(table, i, leak(i), failure.col(i));
  params.trace.push_back(final_ll);
  params.log_likelihood = final_ll;
  params.leak = leak;
  params.failure = failure.topRows(d);
  params.demo_failure = failure.bottomRows(k - d);
  params.demo_names = demographic_column_names(demo);
  return params;
}

double noisy_or_log_likelihood(const RecordSet& records, const NoisyOrParams& params, DemoEncoding demo) {
  const auto parents = parent_table(records, demo);
  Eigen::MatrixXd failure(params.failure.rows() + params.demo_failure.rows(), params.failure.cols());
  failure << params.failure, params.demo_failure;
  if (failure.rows() != parents.cols()) throw Error("noisy_or_log_likelihood: parameter shape mismatch");
  Eigen::MatrixXd dense_x = Eigen::MatrixXd(records.symptoms);
  double ll = 0;
  for (Eigen::Index n = 0; n < records.size(); ++n) {
    Eigen::RowVectorXd off = (1.0 - params.leak.array()).transpose();
    for (FeatureTable::InnerIterator it(parents, n); it; ++it) off.array() *= failure.row(it.col()).array();
    for (Eigen::Index i = 0; i < off.size(); ++i) ll += dense_x(n, i) > 0.5 ? std::log(1.0 - off(i)) : std::log(off(i));
  }
  return ll;
}

}  // namespace hkg
