#include "hkg/analysis.hpp"

#include <numeric>
#include <ostream>

namespace hkg {

const std::array<std::string, kCovariates>& covariate_names() {
  static const std::array<std::string, kCovariates> names{"count", "disease", "symptom", "age", "female"};
  return names;
}

const std::array<std::string, kFlagColumns>& flag_names() {
  static const std::array<std::string, kFlagColumns> names{"count", "disease", "symptom", "age", "female", "any"};
  return names;
}

DiseaseCovariates disease_covariates(const RecordSet& records) {
  records.validate();
  const auto d = records.vocabulary.num_diseases();
  DiseaseCovariates out;
  out.diseases = records.vocabulary.diseases();
  out.num_diseases_vocab = d;
  out.num_symptoms_vocab = records.vocabulary.num_symptoms();
  struct Sums {
    double count = 0, diseases = 0, symptoms = 0, age = 0, age_n = 0, female = 0, sex_n = 0;
  };
  std::vector<Sums> sums(static_cast<std::size_t>(d));
  for (Eigen::Index n = 0; n < records.size(); ++n) {
    const double nd = static_cast<double>(records.diseases.row(n).nonZeros());
    const double ns = static_cast<double>(records.symptoms.row(n).nonZeros());
    const auto& age = records.age_years[static_cast<std::size_t>(n)];
    const auto& sex = records.sex[static_cast<std::size_t>(n)];
    for (FeatureTable::InnerIterator it(records.diseases, n); it; ++it) {
      auto& s = sums[static_cast<std::size_t>(it.col())];
      s.count += 1;
      s.diseases += nd;
      s.symptoms += ns;
      if (age) {
        s.age += *age;
        s.age_n += 1;
      }
      if (sex) {
        s.female += *sex == Sex::female ? 1 : 0;
        s.sex_n += 1;
      }
    }
  }
  for (const auto& s : sums) {
    std::array<std::optional<double>, kCovariates> v;
    v[0] = s.count;
    if (s.count > 0) {
      v[1] = s.diseases / s.count;
      v[2] = s.symptoms / s.count;
    }
    if (s.age_n > 0) v[3] = s.age / s.age_n;
    if (s.sex_n > 0) v[4] = s.female / s.sex_n;
    out.values.push_back(v);
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty list");
  if (!(q >= 0 && q <= 100)) throw Error("percentile: q must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PopulationStats population_stats(const DiseaseCovariates& covariates) {
  if (covariates.diseases.size() < 2) throw Error("abnormality flags need at least 2 diseases");
  const double inf = std::numeric_limits<double>::infinity();
  const std::array<std::pair<double, double>, kCovariates> feasible{
      std::pair{0.0, inf},
      std::pair{1.0, static_cast<double>(std::max<Eigen::Index>(1, covariates.num_diseases_vocab))},
      std::pair{0.0, static_cast<double>(covariates.num_symptoms_vocab)},
      std::pair{0.0, inf},
      std::pair{0.0, 1.0}};
  PopulationStats out;
  for (std::size_t c = 0; c < kCovariates; ++c) {
    std::vector<double> v;
    for (const auto& row : covariates.values)
      if (row[c]) v.push_back(*row[c]);
    auto& b = out.bounds[c];
    if (v.size() < 2) continue;
    b.defined = true;
    b.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - b.mean) * (x - b.mean);
    b.sd = std::sqrt(ss / static_cast<double>(v.size()));
    b.lower = b.mean - b.sd;
    b.upper = b.mean + b.sd;
    if (b.lower < feasible[c].first) {
      b.lower = percentile(v, 16);
      b.lower_percentile = true;
    }
    if (b.upper > feasible[c].second) {
      b.upper = percentile(v, 84);
      b.upper_percentile = true;
    }
  }
  return out;
}

AbnormalityTable abnormality_flags(const DiseaseCovariates& covariates, const PopulationStats& stats) {
  AbnormalityTable out;
  out.diseases = covariates.diseases;
  for (const auto& row : covariates.values) {
    std::array<bool, kFlagColumns> f{};
    auto value = [&](Covariate c) -> std::optional<double> {
      const auto k = static_cast<std::size_t>(c);
      if (!stats.bounds[k].defined) return std::nullopt;
      return row[k];
    };
    const auto& b = stats.bounds;
    if (auto v = value(Covariate::count)) f[0] = *v < b[0].lower;
    if (auto v = value(Covariate::disease)) f[1] = *v > b[1].upper;
    if (auto v = value(Covariate::symptom)) f[2] = *v > b[2].upper;
    if (auto v = value(Covariate::age)) f[3] = *v < b[3].lower || *v > b[3].upper;
    if (auto v = value(Covariate::female)) f[4] = *v < b[4].lower || *v > b[4].upper;
    f[5] = f[0] || f[1] || f[2] || f[3] || f[4];
    out.flags.push_back(f);
  }
  return out;
}

TopBottomSummary top_bottom_summary(const std::vector<F1Row>& f1, const AbnormalityTable& flags, std::size_t n) {
  std::map<std::string, std::size_t> flag_row;
  for (std::size_t k = 0; k < flags.diseases.size(); ++k) flag_row.emplace(flags.diseases[k], k);
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& r : f1)
    if (flag_row.count(r.disease)) scored.emplace_back(r.f1, r.disease);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  TopBottomSummary out;
  out.n = n;
  if (scored.size() < 2 * n) {
    out.n = scored.size() / 2;
    out.warnings.push_back("only " + std::to_string(scored.size()) + " scored diseases; n reduced from " +
                           std::to_string(n) + " to " + std::to_string(out.n));
  }
  if (out.n == 0) throw Error("top/bottom summary needs at least 2 scored diseases");
  auto tally = [&](std::size_t begin, std::array<double, kFlagColumns>& pct, std::vector<std::string>& names) {
    std::array<std::size_t, kFlagColumns> counts{};
    for (std::size_t k = begin; k < begin + out.n; ++k) {
      names.push_back(scored[k].second);
      const auto& f = flags.flags[flag_row.at(scored[k].second)];
      for (std::size_t c = 0; c < kFlagColumns; ++c) counts[c] += f[c] ? 1 : 0;
    }
    for (std::size_t c = 0; c < kFlagColumns; ++c)
      pct[c] = 100.0 * static_cast<double>(counts[c]) / static_cast<double>(out.n);
  };
  tally(0, out.top, out.top_diseases);
  tally(scored.size() - out.n, out.bottom, out.bottom_diseases);
  return out;
}

Partition parse_partition(const std::string& text) {
  if (text == "age_brackets" || text == "age") return Partition::age_brackets;
  if (text == "sex") return Partition::sex;
  throw Error("unknown partition '" + text + "'");
}

SubgroupResult subgroup_learn(const RecordSet& records, Partition partition, Learner learner,
                              const KnowledgeGraph& reference, const SubgroupOptions& options) {
  records.validate();
  std::vector<std::string> labels;
  if (partition == Partition::age_brackets)
    labels = age_bracket_labels();
  else
    labels = {"female", "male"};
  std::vector<std::vector<std::size_t>> members(labels.size());
  SubgroupResult out;
  for (std::size_t n = 0; n < static_cast<std::size_t>(records.size()); ++n) {
    if (partition == Partition::age_brackets) {
      if (records.age_years[n])
        members[static_cast<std::size_t>(age_bracket(*records.age_years[n]))].push_back(n);
      else
        ++out.unknown;
    } else {
      if (records.sex[n])
        members[*records.sex[n] == Sex::female ? 0 : 1].push_back(n);
      else
        ++out.unknown;
    }
  }
  if (out.unknown == static_cast<std::size_t>(records.size()))
    throw Error("partition is empty: no record carries the partition attribute");
  for (std::size_t g = 0; g < labels.size(); ++g) {
    SubgroupRow row;
    row.subgroup = labels[g];
    row.size = members[g].size();
    if (row.size < options.min_size) {
      row.skipped = true;
      out.warnings.push_back("subgroup '" + labels[g] + "' has " + std::to_string(row.size) +
                             " records (< " + std::to_string(options.min_size) + "); skipped");
      out.rows.push_back(row);
      continue;
    }
    auto learn_options = options.learn;
    learn_options.seed = derive_seed(options.learn.seed, 0x5B6, g);
    const auto scores = learn(records.subset(members[g]), learner, learn_options);
    const auto report = evaluate(scores, reference, options.eval);
    row.auprc = report.auprc.auprc;
    row.mean_f1 = report.mean_f1;
    out.rows.push_back(row);
  }
  return out;
}

std::vector<std::size_t> random_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw Error("random_subset: fraction must lie in (0, 1]");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5B5E7));
  for (std::size_t i = n; i > 1; --i)
    std::swap(rows[i - 1], rows[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(i) - 1))]);
  rows.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::sort(rows.begin(), rows.end());
  return rows;
}

TargetKind parse_target_kind(const std::string& text) {
  if (text == "disease") return TargetKind::disease;
  if (text == "symptom") return TargetKind::symptom;
  throw Error("unknown target kind '" + text + "'");
}

PredictabilityResult predictability(const RecordSet& records, TargetKind kind, Family family,
                                    const PredictabilityOptions& options) {
  records.validate();
  if (options.demo != DemoEncoding::none && !records.has_demographics())
    throw Error("demographic features requested but the records carry no age or sex");
  const auto features =
      attach_demographics(records, kind == TargetKind::disease ? Block::symptoms : Block::diseases, options.demo);
  const Eigen::SparseMatrix<double> targets = kind == TargetKind::disease ? records.diseases : records.symptoms;
  const auto& names = kind == TargetKind::disease ? records.vocabulary.diseases() : records.vocabulary.symptoms();
  const auto grid = options.grid.empty() ? default_grid(family) : options.grid;
  const auto minimum = std::max<std::size_t>(options.min_positives, static_cast<std::size_t>(options.cv.folds));

  std::vector<std::optional<PredictabilityRow>> rows(names.size());
  std::vector<std::string> skipped(names.size());
  parallel_for(names.size(), options.threads, [&](std::size_t t) {
    const Labels y = Labels(targets.col(static_cast<Eigen::Index>(t)));
    const auto pos = static_cast<std::size_t>(y.sum());
    const auto neg = static_cast<std::size_t>(y.size()) - pos;
    if (pos < minimum || neg < minimum) {
      skipped[t] = "target '" + names[t] + "' has " + std::to_string(pos) + " positives and " +
                   std::to_string(neg) + " negatives; skipped";
      return;
    }
    const auto cv = grid_search_cv(features.table, y, grid, options.cv, derive_seed(options.seed, 0xAB0C, hash_string(names[t])));
    rows[t] = PredictabilityRow{names[t], pos, cv.mean_auroc, describe(cv.best_params)};
  });
  PredictabilityResult out;
  out.family = family;
  out.kind = kind;
  for (std::size_t t = 0; t < names.size(); ++t) {
    if (rows[t]) out.rows.push_back(*rows[t]);
    if (!skipped[t].empty()) out.warnings.push_back(skipped[t]);
  }
  return out;
}

std::vector<PairedRow> paired_difference(const PredictabilityResult& first, const PredictabilityResult& second) {
  std::map<std::string, double> other;
  for (const auto& r : second.rows) other.emplace(r.target, r.auroc);
  std::vector<PairedRow> out;
  for (const auto& r : first.rows) {
    const auto it = other.find(r.target);
    if (it == other.end()) continue;
    out.push_back({r.target, r.auroc, it->second, r.auroc - it->second});
  }
  return out;
}

namespace {

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); }

}  // namespace

void write_covariates(std::ostream& out, const DiseaseCovariates& covariates) {
  out << "disease";
  for (const auto& name : covariate_names()) out << '\t' << name;
  out << '\n';
  for (std::size_t k = 0; k < covariates.diseases.size(); ++k) {
    out << covariates.diseases[k];
    for (const auto& v : covariates.values[k]) out << '\t' << optional_text(v);
    out << '\n';
  }
}

void write_flags(std::ostream& out, const AbnormalityTable& flags) {
  out << "disease";
  for (const auto& name : flag_names()) out << '\t' << name;
  out << '\n';
  for (std::size_t k = 0; k < flags.diseases.size(); ++k) {
    out << flags.diseases[k];
    for (bool f : flags.flags[k]) out << '\t' << (f ? 1 : 0);
    out << '\n';
  }
}

void write_top_bottom(std::ostream& out, const TopBottomSummary& summary) {
  out << "group\tn";
  for (const auto& name : flag_names()) out << '\t' << name;
  out << '\n';
  auto row = [&](const char* label, const std::array<double, kFlagColumns>& pct) {
    out << label << '\t' << summary.n;
    for (double p : pct) out << '\t' << format_double(p);
    out << '\n';
  };
  row("top", summary.top);
  row("bottom", summary.bottom);
}

void write_subgroups(std::ostream& out, const SubgroupResult& result) {
  out << "subgroup\tsize\tauprc\tmean_f1\n";
  for (const auto& r : result.rows) {
    out << r.subgroup << '\t' << r.size << '\t';
    if (r.skipped)
      out << "NA\tNA\n";
    else
      out << format_double(r.auprc) << '\t' << format_double(r.mean_f1) << '\n';
  }
  out << "unknown\t" << result.unknown << "\tNA\tNA\n";
}

void write_predictability(std::ostream& out, const PredictabilityResult& result) {
  out << "target\tkind\tfamily\tpositives\tauroc\tbest_cell\n";
  const std::string kind = result.kind == TargetKind::disease ? "disease" : "symptom";
  for (const auto& r : result.rows)
    out << r.target << '\t' << kind << '\t' << to_string(result.family) << '\t' << r.positives << '\t'
        << format_double(r.auroc) << '\t' << r.best_cell << '\n';
}

}  // namespace hkg
