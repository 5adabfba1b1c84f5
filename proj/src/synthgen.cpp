#include "hkg/synthgen.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace hkg {

namespace {

std::string padded(const char* prefix, Eigen::Index index, int width) {
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int digits(Eigen::Index n) {
  int d = 1;
  for (Eigen::Index v = 10; v <= n - 1; v *= 10) ++d;
  return d;
}

void check_probability(double p, double lo, bool lo_open, double hi, bool hi_open, const std::string& what) {
  const bool ok = (lo_open ? p > lo : p >= lo) && (hi_open ? p < hi : p <= hi);
  if (!ok || !std::isfinite(p)) throw Error("truth spec: " + what + " out of range: " + std::to_string(p));
}

}  // namespace

void TruthSpec::fill_default_names() {
  if (disease_names.empty())
    for (Eigen::Index j = 0; j < num_diseases(); ++j) disease_names.push_back(padded("d", j, std::max(2, digits(num_diseases()))));
  if (symptom_names.empty())
    for (Eigen::Index i = 0; i < num_symptoms(); ++i) symptom_names.push_back(padded("s", i, std::max(3, digits(num_symptoms()))));
}

void TruthSpec::validate() const {
  const auto d = num_diseases();
  const auto s = num_symptoms();
  if (d < 1 || s < 1) throw Error("truth spec: need at least one disease and one symptom");
  if (failure.rows() != d || failure.cols() != s) throw Error("truth spec: failure matrix must be D x S");
  if (static_cast<Eigen::Index>(disease_names.size()) != d || static_cast<Eigen::Index>(symptom_names.size()) != s)
    throw Error("truth spec: name lists do not match D and S");
  Vocabulary check(disease_names, symptom_names);
  for (Eigen::Index j = 0; j < d; ++j) check_probability(disease_priors(j), 0, true, 1, true, "disease prior");
  for (Eigen::Index i = 0; i < s; ++i) check_probability(leak(i), 0, false, 1, true, "leak");
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < s; ++i) check_probability(failure(j, i), 0, true, 1, false, "failure probability");
  for (const auto& c : clusters) {
    check_probability(c.latent_prob, 0, false, 1, false, "cluster latent probability");
    check_probability(c.activation_prob, 0, false, 1, false, "cluster activation probability");
    for (auto m : c.members)
      if (m < 0 || m >= d) throw Error("truth spec: cluster member out of range");
  }
  if (demographics) {
    if (demographics->age_weights.rows() != d || demographics->age_weights.cols() != kAgeBrackets ||
        demographics->female_odds.size() != d)
      throw Error("truth spec: demographic model shape mismatch");
    if ((demographics->age_weights.array() < 0).any() || (demographics->female_odds.array() <= 0).any())
      throw Error("truth spec: demographic weights must be positive");
  }
  if (age_min < 0 || age_max < age_min) throw Error("truth spec: invalid age range");
  check_probability(female_prob, 0, false, 1, false, "female probability");
  if (notes_min < 1 || notes_max < notes_min) throw Error("truth spec: invalid notes_per_patient range");
  check_probability(gap_long_prob, 0, false, 1, false, "long-gap probability");
  if (gap_short_max < 0 || gap_long_min < 0 || gap_long_max < gap_long_min)
    throw Error("truth spec: invalid gap distribution");
}

KnowledgeGraph TruthSpec::edge_set() const {
  KnowledgeGraph g;
  for (Eigen::Index j = 0; j < num_diseases(); ++j)
    for (Eigen::Index i = 0; i < num_symptoms(); ++i)
      if (failure(j, i) < 1.0)
        g.add(Edge{disease_names[static_cast<std::size_t>(j)], symptom_names[static_cast<std::size_t>(i)]});
  return g;
}

namespace {

std::vector<RawNote> sample_patient(const TruthSpec& spec, long index, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5A3D1E, static_cast<std::uint64_t>(index)));
  const auto d = spec.num_diseases();
  const auto s = spec.num_symptoms();

  const int age = static_cast<int>(uniform_int(rng, spec.age_min, spec.age_max));
  const bool female = bernoulli(rng, spec.female_prob);

  std::vector<char> cluster_on(spec.clusters.size());
  for (std::size_t c = 0; c < spec.clusters.size(); ++c) cluster_on[c] = bernoulli(rng, spec.clusters[c].latent_prob);

  std::vector<char> y(static_cast<std::size_t>(d), 0);
  for (Eigen::Index j = 0; j < d; ++j) {
    double p = spec.disease_priors(j);
    if (spec.demographics) {
      p = std::min(p * spec.demographics->age_weights(j, age_bracket(age)), 1.0);
      if (female) {
        const double odds = spec.demographics->female_odds(j);
        p = odds * p / (1.0 - p + odds * p);
      }
    }
    y[static_cast<std::size_t>(j)] = bernoulli(rng, p);
  }
  for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
    for (auto m : spec.clusters[c].members) {
      const bool extra = bernoulli(rng, spec.clusters[c].activation_prob);
      if (cluster_on[c] && extra) y[static_cast<std::size_t>(m)] = 1;
    }
  }

  std::vector<char> x(static_cast<std::size_t>(s), 0);
  for (Eigen::Index i = 0; i < s; ++i) {
    double off = 1.0 - spec.leak(i);
    for (Eigen::Index j = 0; j < d; ++j)
      if (y[static_cast<std::size_t>(j)]) off *= spec.failure(j, i);
    x[static_cast<std::size_t>(i)] = bernoulli(rng, 1.0 - off);
  }

  const int n_notes = static_cast<int>(uniform_int(rng, spec.notes_min, spec.notes_max));
  std::vector<RawNote> notes(static_cast<std::size_t>(n_notes));
  char id[32];
  std::snprintf(id, sizeof id, "p%07ld", index);
  Date date = spec.start + std::chrono::days{uniform_int(rng, 0, 364)};
  const Date first = date;
  for (int k = 0; k < n_notes; ++k) {
    if (k > 0) {
      const bool long_gap = bernoulli(rng, spec.gap_long_prob);
      const long gap = long_gap ? uniform_int(rng, spec.gap_long_min, spec.gap_long_max)
                                : uniform_int(rng, 0, spec.gap_short_max);
      date += std::chrono::days{gap};
    }
    auto& note = notes[static_cast<std::size_t>(k)];
    note.patient_id = id;
    note.date = date;
    note.age_years = age + static_cast<int>((date - first).count() / 365);
    note.sex = female ? Sex::female : Sex::male;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!y[static_cast<std::size_t>(j)]) continue;
    const auto k = uniform_int(rng, 0, n_notes - 1);
    notes[static_cast<std::size_t>(k)].diseases.push_back(spec.disease_names[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < s; ++i) {
    if (!x[static_cast<std::size_t>(i)]) continue;
    const auto k = uniform_int(rng, 0, n_notes - 1);
    notes[static_cast<std::size_t>(k)].symptoms.push_back(spec.symptom_names[static_cast<std::size_t>(i)]);
  }
  for (auto& note : notes) {
    std::sort(note.diseases.begin(), note.diseases.end());
    std::sort(note.symptoms.begin(), note.symptoms.end());
  }
  return notes;
}

}  // namespace

SyntheticCohort sample_cohort(const TruthSpec& spec, long n_patients, std::uint64_t seed, unsigned threads) {
  spec.validate();
  if (n_patients < 1) throw Error("sample_cohort: n_patients must be >= 1");
  std::vector<std::vector<RawNote>> per_patient(static_cast<std::size_t>(n_patients));
  parallel_for(per_patient.size(), threads, [&](std::size_t p) {
    per_patient[p] = sample_patient(spec, static_cast<long>(p), seed);
  });
  SyntheticCohort out;
  for (auto& notes : per_patient)
    for (auto& note : notes) out.notes.push_back(std::move(note));
  out.truth = spec.edge_set();
  return out;
}

namespace {

struct SpecReader {
  TruthSpec spec;
  std::size_t line_no = 0;

  [[noreturn]] void fail(const std::string& message) const {
    throw Error("truth spec line " + std::to_string(line_no) + ": " + message);
  }

  template <typename T>
  T read(std::istringstream& in, const char* what) {
    T value{};
    if (!(in >> value)) fail(std::string("expected ") + what);
    return value;
  }

  void ensure_shapes() {
    const auto d = spec.disease_priors.size();
    const auto s = spec.leak.size();
    if (spec.failure.rows() != d || spec.failure.cols() != s) {
      if (d == 0 || s == 0) fail("declare `diseases` and `symptoms` before parameters");
      spec.failure = Eigen::MatrixXd::Ones(d, s);
    }
    spec.fill_default_names();
  }

  Eigen::Index resolve(const std::string& token, const std::vector<std::string>& names, const char* what) {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == token) return static_cast<Eigen::Index>(k);
    char* end = nullptr;
    const long v = std::strtol(token.c_str(), &end, 10);
    if (end && *end == '\0' && !token.empty() && v >= 0 && v < static_cast<long>(names.size())) return v;
    fail(std::string("unknown ") + what + " '" + token + "'");
  }

  DemographicModel& demographics() {
    if (!spec.demographics) {
      spec.demographics = DemographicModel{Eigen::MatrixXd::Ones(spec.num_diseases(), kAgeBrackets),
                                           Eigen::VectorXd::Ones(spec.num_diseases())};
    }
    return *spec.demographics;
  }
};

}  // namespace

TruthSpec parse_truth_spec(std::istream& input) {
  SpecReader r;
  auto& spec = r.spec;
  std::string line;
  while (std::getline(input, line)) {
    ++r.line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream in(line);
    std::string key;
    if (!(in >> key)) continue;
    if (key == "diseases") {
      const auto d = r.read<long>(in, "disease count");
      if (d < 1) r.fail("disease count must be positive");
      spec.disease_priors = Eigen::VectorXd::Constant(d, 0.05);
    } else if (key == "symptoms") {
      const auto s = r.read<long>(in, "symptom count");
      if (s < 1) r.fail("symptom count must be positive");
      spec.leak = Eigen::VectorXd::Zero(s);
    } else if (key == "disease_names" || key == "symptom_names") {
      auto& names = key == "disease_names" ? spec.disease_names : spec.symptom_names;
      names.clear();
      std::string name;
      while (in >> name) names.push_back(name);
    } else if (key == "priors" || key == "leaks") {
      r.ensure_shapes();
      auto& v = key == "priors" ? spec.disease_priors : spec.leak;
      for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = r.read<double>(in, "value");
    } else if (key == "prior") {
      r.ensure_shapes();
      const auto j = r.resolve(r.read<std::string>(in, "disease"), spec.disease_names, "disease");
      spec.disease_priors(j) = r.read<double>(in, "prior");
    } else if (key == "leak") {
      r.ensure_shapes();
      const auto i = r.resolve(r.read<std::string>(in, "symptom"), spec.symptom_names, "symptom");
      spec.leak(i) = r.read<double>(in, "leak");
    } else if (key == "edge") {
      r.ensure_shapes();
      const auto j = r.resolve(r.read<std::string>(in, "disease"), spec.disease_names, "disease");
      const auto i = r.resolve(r.read<std::string>(in, "symptom"), spec.symptom_names, "symptom");
      spec.failure(j, i) = r.read<double>(in, "failure probability");
    } else if (key == "failure") {
      r.ensure_shapes();
      for (Eigen::Index j = 0; j < spec.num_diseases(); ++j) {
        if (!std::getline(input, line)) r.fail("truncated failure block");
        ++r.line_no;
        std::istringstream row(line);
        for (Eigen::Index i = 0; i < spec.num_symptoms(); ++i) spec.failure(j, i) = r.read<double>(row, "failure value");
      }
      if (!std::getline(input, line)) r.fail("failure block missing `end`");
      ++r.line_no;
      std::istringstream end_line(line);
      std::string end;
      if (!(end_line >> end) || end != "end") r.fail("failure block must close with `end`");
    } else if (key == "cluster") {
      r.ensure_shapes();
      DiseaseCluster c;
      c.latent_prob = r.read<double>(in, "latent probability");
      c.activation_prob = r.read<double>(in, "activation probability");
      std::string member;
      while (in >> member) c.members.push_back(r.resolve(member, spec.disease_names, "disease"));
      if (c.members.empty()) r.fail("cluster needs at least one member");
      spec.clusters.push_back(std::move(c));
    } else if (key == "age_weights") {
      r.ensure_shapes();
      const auto j = r.resolve(r.read<std::string>(in, "disease"), spec.disease_names, "disease");
      auto& dm = r.demographics();
      for (int b = 0; b < kAgeBrackets; ++b) dm.age_weights(j, b) = r.read<double>(in, "age weight");
    } else if (key == "female_odds") {
      r.ensure_shapes();
      const auto j = r.resolve(r.read<std::string>(in, "disease"), spec.disease_names, "disease");
      r.demographics().female_odds(j) = r.read<double>(in, "odds");
    } else if (key == "age_range") {
      spec.age_min = r.read<int>(in, "min age");
      spec.age_max = r.read<int>(in, "max age");
    } else if (key == "female_prob") {
      spec.female_prob = r.read<double>(in, "probability");
    } else if (key == "notes_per_patient") {
      spec.notes_min = r.read<int>(in, "min notes");
      spec.notes_max = r.read<int>(in, "max notes");
    } else if (key == "gap_days") {
      spec.gap_long_prob = r.read<double>(in, "long-gap probability");
      spec.gap_short_max = r.read<int>(in, "short max");
      spec.gap_long_min = r.read<int>(in, "long min");
      spec.gap_long_max = r.read<int>(in, "long max");
    } else if (key == "start_date") {
      try {
        spec.start = parse_date(r.read<std::string>(in, "date"));
      } catch (const Error&) {
        r.fail("invalid start_date");
      }
    } else {
      r.fail("unknown directive '" + key + "'");
    }
    std::string extra;
    if (key != "disease_names" && key != "symptom_names" && key != "cluster" && (in >> extra))
      r.fail("unexpected trailing token '" + extra + "'");
  }
  r.ensure_shapes();
  spec.validate();
  return spec;
}

void write_truth_spec(std::ostream& out, const TruthSpec& spec) {
  auto old_precision = out.precision(17);
  out << "diseases " << spec.num_diseases() << "\nsymptoms " << spec.num_symptoms() << "\ndisease_names";
  for (const auto& n : spec.disease_names) out << ' ' << n;
  out << "\nsymptom_names";
  for (const auto& n : spec.symptom_names) out << ' ' << n;
  out << "\npriors";
  for (Eigen::Index j = 0; j < spec.num_diseases(); ++j) out << ' ' << spec.disease_priors(j);
  out << "\nleaks";
  for (Eigen::Index i = 0; i < spec.num_symptoms(); ++i) out << ' ' << spec.leak(i);
  out << '\n';
  for (Eigen::Index j = 0; j < spec.num_diseases(); ++j)
    for (Eigen::Index i = 0; i < spec.num_symptoms(); ++i)
      if (spec.failure(j, i) < 1.0)
        out << "edge " << spec.disease_names[static_cast<std::size_t>(j)] << ' '
            << spec.symptom_names[static_cast<std::size_t>(i)] << ' ' << spec.failure(j, i) << '\n';
  for (const auto& c : spec.clusters) {
    out << "cluster " << c.latent_prob << ' ' << c.activation_prob;
    for (auto m : c.members) out << ' ' << spec.disease_names[static_cast<std::size_t>(m)];
    out << '\n';
  }
  if (spec.demographics) {
    for (Eigen::Index j = 0; j < spec.num_diseases(); ++j) {
      out << "age_weights " << spec.disease_names[static_cast<std::size_t>(j)];
      for (int b = 0; b < kAgeBrackets; ++b) out << ' ' << spec.demographics->age_weights(j, b);
      out << "\nfemale_odds " << spec.disease_names[static_cast<std::size_t>(j)] << ' '
          << spec.demographics->female_odds(j) << '\n';
    }
  }
  out << "age_range " << spec.age_min << ' ' << spec.age_max << "\nfemale_prob " << spec.female_prob
      << "\nnotes_per_patient " << spec.notes_min << ' ' << spec.notes_max << "\ngap_days " << spec.gap_long_prob
      << ' ' << spec.gap_short_max << ' ' << spec.gap_long_min << ' ' << spec.gap_long_max << "\nstart_date "
      << format_date(spec.start) << '\n';
  out.precision(old_precision);
}

TruthSpec make_random_spec(const RandomSpecOptions& options, std::uint64_t seed) {
  if (options.diseases < 1 || options.symptoms < 1 || options.edges_min < 0 || options.edges_max < options.edges_min ||
      options.edges_max > options.symptoms)
    throw Error("make_random_spec: invalid options");
  Rng rng(derive_seed(seed, 0x5eed5eedULL));
  TruthSpec spec;
  spec.disease_priors.resize(options.diseases);
  for (Eigen::Index j = 0; j < options.diseases; ++j)
    spec.disease_priors(j) = uniform(rng, options.prior_min, options.prior_max);
  spec.leak.resize(options.symptoms);
  for (Eigen::Index i = 0; i < options.symptoms; ++i) spec.leak(i) = uniform(rng, 0.0, options.leak_max);
  spec.failure = Eigen::MatrixXd::Ones(options.diseases, options.symptoms);
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(options.symptoms));
  for (Eigen::Index j = 0; j < options.diseases; ++j) {
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    const auto n_edges = uniform_int(rng, options.edges_min, options.edges_max);
    for (long e = 0; e < n_edges; ++e) {
      const auto pick = static_cast<std::size_t>(uniform_int(rng, e, options.symptoms - 1));
      std::swap(pool[static_cast<std::size_t>(e)], pool[pick]);
      spec.failure(j, pool[static_cast<std::size_t>(e)]) = uniform(rng, options.failure_min, options.failure_max);
    }
  }
  spec.fill_default_names();
  spec.validate();
  return spec;
}

}  // namespace hkg
