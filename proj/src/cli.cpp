#include "hkg/cli.hpp"

#include "hkg/analysis.hpp"
#include "hkg/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace hkg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < length; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 15];
  }
  return out;
}

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream buffer;
    buffer << std::cin.rdbuf();
    return buffer.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("cannot read file: " + path);
  return buffer.str();
}

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << bytes;
  out.close();
  if (!out) throw IoError("cannot write file: " + path.string());
}

std::string header_line(const std::string& digest) { return "# manifest-sha256 " + digest + "\n"; }

// Collects manifest fields, then writes manifest.json before any result.
class Manifest {
 public:
  Manifest(const std::string& command, const std::vector<std::string>& args) {
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = command;
    doc_["arguments"] = args;
    doc_["inputs"] = ordered_json::object();
  }

  void input(const std::string& role, const std::string& path, const std::string& bytes) {
    doc_["inputs"][role] = {{"path", path}, {"sha256", sha256_hex(bytes)}};
  }
  template <typename T>
  void set(const std::string& key, const T& value) {
    doc_[key] = value;
  }
  void vocabulary(const Vocabulary& v) {
    doc_["vocabulary"] = {{"diseases", v.num_diseases()}, {"symptoms", v.num_symptoms()}};
  }

  /// Serializes, optionally writes to `path`, and returns the digest.
  std::string finish(const std::optional<fs::path>& path) {
    const std::string text = doc_.dump(2) + "\n";
    if (path) write_file(*path, text);
    digest_ = sha256_hex(text);
    return digest_;
  }
  const std::string& digest() const { return digest_; }

 private:
  ordered_json doc_;
  std::string digest_;
};

class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw IoError("cannot create output directory: " + dir_.string());
  }

  fs::path manifest_path() const { return dir_ / "manifest.json"; }
  void set_digest(std::string digest) { digest_ = std::move(digest); }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) const {
    std::ostringstream text;
    text << header_line(digest_);
    body(text);
    write_file(dir_ / name, text.str());
  }

 private:
  fs::path dir_;
  std::string digest_;
};

std::vector<std::string> grid_descriptions(const std::vector<GridCell>& grid) {
  std::vector<std::string> out;
  for (const auto& c : grid) out.push_back(describe(c));
  return out;
}

void write_lines(std::ostream& out, const std::vector<std::string>& lines) {
  out << "warning\n";
  for (const auto& l : lines) out << l << '\n';
}

// ---------------------------------------------------------------- ingest flags

struct IngestFlags {
  std::string records;
  std::string aggregate = "episode";
  int gap_days = 30;
  int min_disease = 100;
  int min_symptom = 10;
  std::string exclude_symptoms;
  std::string vocabulary;
};

void add_ingest_flags(CLI::App* cmd, IngestFlags& f) {
  cmd->add_option("--records", f.records, "Records file ('-' reads stdin)")->required();
  cmd->add_option("--aggregate", f.aggregate, "single, episode or patient")
      ->check(CLI::IsMember({"single", "episode", "patient"}))
      ->capture_default_str();
  cmd->add_option("--gap-days", f.gap_days, "Maximum gap inside an episode")->capture_default_str();
  cmd->add_option("--min-disease", f.min_disease, "Minimum note count for a disease")->capture_default_str();
  cmd->add_option("--min-symptom", f.min_symptom, "Minimum note count for a symptom")->capture_default_str();
  cmd->add_option("--exclude-symptoms", f.exclude_symptoms,
                  "File with one excluded symptom per line (default: pain)");
  cmd->add_option("--vocabulary", f.vocabulary, "Fixed vocabulary file instead of support filtering");
}

std::set<std::string> parse_name_list(const std::string& text) {
  std::set<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    out.insert(line.substr(start));
  }
  return out;
}

void write_vocabulary(std::ostream& out, const Vocabulary& v) {
  out << "kind\tname\n";
  for (const auto& d : v.diseases()) out << "disease\t" << d << '\n';
  for (const auto& s : v.symptoms()) out << "symptom\t" << s << '\n';
}

Vocabulary parse_vocabulary(const std::string& text) {
  std::vector<std::string> diseases;
  std::vector<std::string> symptoms;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      if (line == "kind\tname") continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("vocabulary file: malformed line " + std::to_string(line_no));
    const auto kind = line.substr(0, tab);
    const auto name = line.substr(tab + 1);
    if (kind == "disease")
      diseases.push_back(name);
    else if (kind == "symptom")
      symptoms.push_back(name);
    else
      throw Error("vocabulary file: unknown kind at line " + std::to_string(line_no));
  }
  return Vocabulary(std::move(diseases), std::move(symptoms));
}

struct Cohort {
  std::vector<RawNote> notes;
  std::set<std::string> excluded;
  RecordSet records;
};

Cohort load_cohort(const IngestFlags& f, Manifest& manifest) {
  Cohort c;
  const auto text = read_file(f.records);
  manifest.input("records", f.records, text);
  std::istringstream in(text);
  c.notes = parse_records(in);
  c.excluded = {"pain"};
  if (!f.exclude_symptoms.empty()) {
    const auto list = read_file(f.exclude_symptoms);
    manifest.input("exclude_symptoms", f.exclude_symptoms, list);
    c.excluded = parse_name_list(list);
  }
  Vocabulary vocabulary;
  if (!f.vocabulary.empty()) {
    const auto vtext = read_file(f.vocabulary);
    manifest.input("vocabulary", f.vocabulary, vtext);
    vocabulary = parse_vocabulary(vtext);
  } else {
    vocabulary = filter_support(c.notes, SupportOptions{f.min_disease, f.min_symptom, c.excluded});
  }
  c.records = aggregate(c.notes, vocabulary, parse_aggregation_mode(f.aggregate), f.gap_days);
  manifest.set("ingest", ordered_json{{"aggregate", f.aggregate},
                                      {"gap_days", f.gap_days},
                                      {"min_disease", f.min_disease},
                                      {"min_symptom", f.min_symptom},
                                      {"excluded_symptoms", std::vector<std::string>(c.excluded.begin(), c.excluded.end())},
                                      {"notes", c.notes.size()},
                                      {"records", c.records.size()}});
  manifest.vocabulary(c.records.vocabulary);
  return c;
}

void write_record_table(std::ostream& out, const RecordSet& r) {
  out << "record\tpatient_id\tnotes\tage_years\tsex\tconcepts\n";
  for (Eigen::Index n = 0; n < r.size(); ++n) {
    const auto k = static_cast<std::size_t>(n);
    out << n << '\t' << r.patient_id[k] << '\t' << r.source_note_count[k] << '\t';
    if (r.age_years[k]) out << *r.age_years[k];
    out << '\t';
    if (r.sex[k]) out << (*r.sex[k] == Sex::female ? 'F' : 'M');
    out << '\t';
    bool first = true;
    for (FeatureTable::InnerIterator it(r.diseases, n); it; ++it) {
      out << (first ? "" : ";") << "d:" << r.vocabulary.diseases()[static_cast<std::size_t>(it.col())];
      first = false;
    }
    for (FeatureTable::InnerIterator it(r.symptoms, n); it; ++it) {
      out << (first ? "" : ";") << "s:" << r.vocabulary.symptoms()[static_cast<std::size_t>(it.col())];
      first = false;
    }
    out << '\n';
  }
}

// ----------------------------------------------------------------- learn flags

struct LearnFlags {
  std::string model = "nor";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string demo = "none";
  int trees = 100;
  double nb_alpha = 0.0;
  double epsilon = 1e-6;
  int em_max_iter = 500;
  double em_tolerance = 1e-6;
};

void add_learn_flags(CLI::App* cmd, LearnFlags& f, bool seed_required) {
  cmd->add_option("--model", f.model, "lr, nb, nor, causal_lr, causal_rf or causal_nb")
      ->check(CLI::IsMember({"lr", "nb", "nor", "causal_lr", "causal_rf", "causal_nb"}))
      ->capture_default_str();
  auto* seed = cmd->add_option("--seed", f.seed, "Run seed (64-bit)");
  if (seed_required) seed->required();
  cmd->add_option("--threads", f.threads, "Worker threads; results do not depend on it")->capture_default_str();
  cmd->add_option("--demo", f.demo, "none, continuous, bracket or default (learner's encoding)")
      ->check(CLI::IsMember({"none", "continuous", "bracket", "default"}))
      ->capture_default_str();
  cmd->add_option("--trees", f.trees, "Trees per random forest")->capture_default_str();
  cmd->add_option("--nb-alpha", f.nb_alpha, "Smoothing of the naive Bayes importance")->capture_default_str();
  cmd->add_option("--epsilon", f.epsilon, "Floor of the causal ratio denominator")->capture_default_str();
  cmd->add_option("--em-max-iter", f.em_max_iter, "Noisy-OR EM iteration cap")->capture_default_str();
  cmd->add_option("--em-tolerance", f.em_tolerance, "Noisy-OR EM per-record log-likelihood tolerance")
      ->capture_default_str();
}

LearnOptions learn_options(const LearnFlags& f, Learner learner) {
  LearnOptions o;
  o.seed = f.seed;
  o.threads = std::max(1u, f.threads);
  o.demo = f.demo == "default" ? default_demo_encoding(learner) : parse_demo_encoding(f.demo);
  o.cv.n_trees = f.trees;
  o.nb_alpha = f.nb_alpha;
  o.causal_epsilon = f.epsilon;
  o.noisy_or.max_iter = f.em_max_iter;
  o.noisy_or.tolerance = f.em_tolerance;
  return o;
}

void describe_learner(Manifest& manifest, const LearnFlags& f, Learner learner, const LearnOptions& o) {
  std::vector<std::string> grid;
  switch (learner) {
    case Learner::lr:
    case Learner::causal_lr: grid = grid_descriptions(default_grid(Family::logistic)); break;
    case Learner::causal_rf: grid = grid_descriptions(default_grid(Family::random_forest)); break;
    case Learner::causal_nb: grid = grid_descriptions(default_grid(Family::naive_bayes)); break;
    default: break;
  }
  manifest.set("seed", f.seed);
  manifest.set("model", ordered_json{{"learner", to_string(learner)},
                                     {"demo", to_string(o.demo)},
                                     {"cv_folds", o.cv.folds},
                                     {"trees", o.cv.n_trees},
                                     {"nb_alpha", o.nb_alpha},
                                     {"causal_epsilon", o.causal_epsilon},
                                     {"em_max_iter", o.noisy_or.max_iter},
                                     {"em_tolerance", o.noisy_or.tolerance},
                                     {"grid", grid}});
}

// ------------------------------------------------------------------ eval flags

struct EvalFlags {
  std::string reference;
  std::string budget = "ref";
  std::vector<std::string> exclude{"pain"};
  bool exclude_none = false;
  std::string b_mode = "retained";
};

void add_eval_flags(CLI::App* cmd, EvalFlags& f, bool with_exclude) {
  cmd->add_option("--reference", f.reference, "Reference graph file")->required();
  cmd->add_option("--budget", f.budget, "F1 edge budget: ref (E_j per disease) or an integer k")
      ->capture_default_str();
  cmd->add_option("--b-mode", f.b_mode, "Terminal precision B over the retained pool or the full D x S grid")
      ->check(CLI::IsMember({"retained", "full"}))
      ->capture_default_str();
  if (with_exclude) {
    cmd->add_option("--exclude", f.exclude, "Symptoms dropped from the reference")->capture_default_str();
    cmd->add_flag("--exclude-none", f.exclude_none, "Keep every reference edge");
  }
}

EvalOptions eval_options(const EvalFlags& f) {
  EvalOptions o;
  o.b_mode = parse_b_mode(f.b_mode);
  if (f.budget != "ref") {
    std::size_t used = 0;
    long k = 0;
    try {
      k = std::stol(f.budget, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f.budget.size() || k < 1) throw Error("--budget must be 'ref' or a positive integer");
    o.per_disease_k = static_cast<std::size_t>(k);
  }
  return o;
}

LoadedReference load_reference_input(const std::string& path, const std::set<std::string>& excluded,
                                     Manifest& manifest) {
  const auto text = read_file(path);
  manifest.input("reference", path, text);
  std::istringstream in(text);
  return load_reference(in, excluded);
}

void write_eval_outputs(const OutputDir& dir, const EvalReport& report) {
  dir.write("eval_f1.tsv", [&](std::ostream& o) { write_f1_table(o, report); });
  dir.write("eval_pr.tsv", [&](std::ostream& o) { write_pr_curve(o, report); });
  dir.write("eval_summary.tsv", [&](std::ostream& o) { write_eval_summary(o, report); });
}

std::vector<F1Row> parse_f1_table(const std::string& text) {
  std::vector<F1Row> rows;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      if (line.rfind("disease\t", 0) == 0) continue;
    }
    std::vector<std::string> fields;
    std::istringstream split(line);
    std::string field;
    while (std::getline(split, field, '\t')) fields.push_back(field);
    if (fields.size() < 2) throw Error("F1 table: malformed line " + std::to_string(line_no));
    F1Row row;
    row.disease = fields.front();
    try {
      row.f1 = std::stod(fields.back());
    } catch (const std::exception&) {
      throw Error("F1 table: invalid F1 at line " + std::to_string(line_no));
    }
    rows.push_back(row);
  }
  return rows;
}

void write_flag_outputs(const OutputDir& dir, const RecordSet& records, const std::vector<F1Row>* f1, std::size_t n,
                        std::vector<std::string>& warnings) {
  const auto covariates = disease_covariates(records);
  dir.write("covariates.tsv", [&](std::ostream& o) { write_covariates(o, covariates); });
  if (covariates.diseases.size() < 2) {
    warnings.push_back("fewer than 2 diseases; abnormality flags skipped");
    return;
  }
  const auto stats = population_stats(covariates);
  dir.write("population_stats.tsv", [&](std::ostream& o) {
    o << "covariate\tmean\tsd\tlower\tupper\tlower_percentile\tupper_percentile\n";
    for (std::size_t c = 0; c < kCovariates; ++c) {
      const auto& b = stats.bounds[c];
      o << covariate_names()[c] << '\t';
      if (!b.defined) {
        o << "NA\tNA\tNA\tNA\tNA\tNA\n";
        continue;
      }
      o << format_double(b.mean) << '\t' << format_double(b.sd) << '\t' << format_double(b.lower) << '\t'
        << format_double(b.upper) << '\t' << b.lower_percentile << '\t' << b.upper_percentile << '\n';
    }
  });
  const auto flags = abnormality_flags(covariates, stats);
  dir.write("flags.tsv", [&](std::ostream& o) { write_flags(o, flags); });
  if (!f1) return;
  std::map<std::string, double> f1_of;
  for (const auto& r : *f1) f1_of[r.disease] = r.f1;
  dir.write("f1_covariates.tsv", [&](std::ostream& o) {
    o << "disease\tf1";
    for (const auto& name : covariate_names()) o << '\t' << name;
    o << '\n';
    for (std::size_t k = 0; k < covariates.diseases.size(); ++k) {
      const auto it = f1_of.find(covariates.diseases[k]);
      if (it == f1_of.end()) continue;
      o << covariates.diseases[k] << '\t' << format_double(it->second);
      for (const auto& v : covariates.values[k]) o << '\t' << (v ? format_double(*v) : std::string("NA"));
      o << '\n';
    }
  });
  std::size_t scored = 0;
  for (const auto& r : *f1) scored += records.vocabulary.disease_index(r.disease) ? 1 : 0;
  if (scored < 2) {
    warnings.push_back("fewer than 2 scored diseases; top/bottom summary skipped");
    return;
  }
  const auto summary = top_bottom_summary(*f1, flags, n);
  for (const auto& w : summary.warnings) warnings.push_back(w);
  dir.write("topbottom.tsv", [&](std::ostream& o) { write_top_bottom(o, summary); });
}

// -------------------------------------------------------------- subcommands

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

void emit_warnings(Context& ctx, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) ctx.err << "warning: " << w << '\n';
}

int cmd_ingest(Context& ctx, const IngestFlags& f, const std::string& out_dir) {
  Manifest manifest("ingest", ctx.args);
  const auto cohort = load_cohort(f, manifest);
  OutputDir dir(out_dir);
  dir.set_digest(manifest.finish(dir.manifest_path()));
  dir.write("vocabulary.tsv", [&](std::ostream& o) { write_vocabulary(o, cohort.records.vocabulary); });
  dir.write("records.tsv", [&](std::ostream& o) { write_record_table(o, cohort.records); });
  ctx.out << "notes " << cohort.notes.size() << ", records " << cohort.records.size() << ", diseases "
          << cohort.records.vocabulary.num_diseases() << ", symptoms " << cohort.records.vocabulary.num_symptoms()
          << '\n';
  return 0;
}

struct SynthFlags {
  std::string spec;
  long patients = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out;
  std::string truth_out;
  std::string manifest;
};

int cmd_synth(Context& ctx, const SynthFlags& f) {
  if (f.patients < 0) throw Error("--patients must be >= 0");
  Manifest manifest("synth", ctx.args);
  const auto text = read_file(f.spec);
  manifest.input("spec", f.spec, text);
  std::istringstream in(text);
  const auto spec = parse_truth_spec(in);
  manifest.set("seed", f.seed);
  manifest.set("patients", f.patients);
  std::optional<fs::path> manifest_path;
  if (!f.manifest.empty())
    manifest_path = f.manifest;
  else if (!f.out.empty())
    manifest_path = f.out + ".manifest.json";
  const auto digest = manifest.finish(manifest_path);
  const auto cohort = sample_cohort(spec, f.patients, f.seed, std::max(1u, f.threads));
  std::ostringstream records;
  records << header_line(digest);
  write_records(records, cohort.notes);
  if (f.out.empty())
    ctx.out << records.str();
  else
    write_file(f.out, records.str());
  if (!f.truth_out.empty()) write_file(f.truth_out, header_line(digest) + serialize_graph(cohort.truth));
  return 0;
}

void write_score_outputs(const OutputDir& dir, const ScoreMatrix& scores, std::size_t top_k) {
  dir.write("scores.tsv", [&](std::ostream& o) { write_scores(o, scores, false); });
  dir.write("scores_raw.tsv", [&](std::ostream& o) { write_scores(o, scores, true); });
  const auto selection = select_edges(scores.ranking(), scores.vocabulary, PerDiseaseK{top_k});
  dir.write("graph.tsv", [&](std::ostream& o) { o << serialize_graph(selection.graph); });
}

int cmd_learn(Context& ctx, const IngestFlags& ingest, const LearnFlags& lf, const std::string& out_dir,
              std::size_t top_k) {
  Manifest manifest("learn", ctx.args);
  const auto cohort = load_cohort(ingest, manifest);
  const auto learner = parse_learner(lf.model);
  const auto options = learn_options(lf, learner);
  describe_learner(manifest, lf, learner, options);
  OutputDir dir(out_dir);
  dir.set_digest(manifest.finish(dir.manifest_path()));
  const auto scores = learn(cohort.records, learner, options);
  write_score_outputs(dir, scores, top_k);
  dir.write("warnings.tsv", [&](std::ostream& o) { write_lines(o, scores.warnings); });
  emit_warnings(ctx, scores.warnings);
  return 0;
}

int cmd_eval(Context& ctx, const std::string& scores_path, const EvalFlags& ef, const std::string& out_dir) {
  Manifest manifest("eval", ctx.args);
  const auto text = read_file(scores_path);
  manifest.input("scores", scores_path, text);
  std::istringstream in(text);
  const auto scores = read_scores(in);
  std::set<std::string> excluded;
  if (!ef.exclude_none) excluded.insert(ef.exclude.begin(), ef.exclude.end());
  const auto reference = load_reference_input(ef.reference, excluded, manifest);
  const auto options = eval_options(ef);
  manifest.vocabulary(scores.vocabulary);
  manifest.set("eval", ordered_json{{"budget", ef.budget}, {"b_mode", ef.b_mode},
                                    {"excluded", std::vector<std::string>(excluded.begin(), excluded.end())},
                                    {"excluded_reference_edges", reference.dropped}});
  OutputDir dir(out_dir);
  dir.set_digest(manifest.finish(dir.manifest_path()));
  auto report = evaluate(scores, reference.graph, options);
  if (reference.dropped > 0)
    report.warnings.insert(report.warnings.begin(),
                           std::to_string(reference.dropped) + " reference edges touch excluded symptoms");
  write_eval_outputs(dir, report);
  dir.write("warnings.tsv", [&](std::ostream& o) { write_lines(o, report.warnings); });
  emit_warnings(ctx, report.warnings);
  ctx.out << "auprc " << format_double(report.auprc.auprc) << ", mean_f1 " << format_double(report.mean_f1) << '\n';
  return 0;
}

struct AnalyzeFlags {
  std::string what;
  std::string f1;
  std::size_t n = 50;
  std::string partition = "sex";
  std::size_t min_size = 100;
  std::string target = "symptom";
  std::vector<std::string> families{"logistic"};
};

int cmd_predictability(Context& ctx, const IngestFlags& ingest, const LearnFlags& lf, const AnalyzeFlags& af,
                       const std::string& out_dir, const std::string& command) {
  Manifest manifest(command, ctx.args);
  const auto cohort = load_cohort(ingest, manifest);
  std::vector<Family> families;
  for (const auto& name : af.families) families.push_back(parse_family(name));
  PredictabilityOptions options;
  options.seed = lf.seed;
  options.threads = std::max(1u, lf.threads);
  options.cv.n_trees = lf.trees;
  options.demo = lf.demo == "default" ? DemoEncoding::none : parse_demo_encoding(lf.demo);
  ordered_json grids = ordered_json::object();
  for (auto fam : families) grids[to_string(fam)] = grid_descriptions(default_grid(fam));
  manifest.set("seed", lf.seed);
  manifest.set("predictability", ordered_json{{"target", af.target}, {"trees", lf.trees}, {"grids", grids}});
  OutputDir dir(out_dir);
  dir.set_digest(manifest.finish(dir.manifest_path()));
  std::vector<PredictabilityResult> results;
  std::vector<std::string> warnings;
  for (auto fam : families) {
    results.push_back(predictability(cohort.records, parse_target_kind(af.target), fam, options));
    for (const auto& w : results.back().warnings) warnings.push_back(to_string(fam) + ": " + w);
    dir.write("predictability_" + to_string(fam) + ".tsv",
              [&](std::ostream& o) { write_predictability(o, results.back()); });
  }
  if (results.size() >= 2) {
    const auto paired = paired_difference(results[0], results[1]);
    dir.write("predictability_paired.tsv", [&](std::ostream& o) {
      o << "target\t" << to_string(results[0].family) << '\t' << to_string(results[1].family) << "\tdifference\n";
      for (const auto& p : paired)
        o << p.target << '\t' << format_double(p.first) << '\t' << format_double(p.second) << '\t'
          << format_double(p.difference) << '\n';
    });
  }
  dir.write("warnings.tsv", [&](std::ostream& o) { write_lines(o, warnings); });
  emit_warnings(ctx, warnings);
  return 0;
}

int cmd_analyze(Context& ctx, const IngestFlags& ingest, const LearnFlags& lf, const EvalFlags& ef,
                const AnalyzeFlags& af, const std::string& out_dir, bool seed_given) {
  if (af.what == "predictability") {
    if (!seed_given) throw CLI::RequiredError("--seed");
    return cmd_predictability(ctx, ingest, lf, af, out_dir, "analyze");
  }
  Manifest manifest("analyze", ctx.args);
  manifest.set("what", af.what);
  const auto cohort = load_cohort(ingest, manifest);
  std::vector<std::string> warnings;
  if (af.what == "flags" || af.what == "topbottom") {
    std::optional<std::vector<F1Row>> f1;
    if (af.what == "topbottom") {
      if (af.f1.empty()) throw CLI::RequiredError("--f1");
      const auto text = read_file(af.f1);
      manifest.input("f1", af.f1, text);
      f1 = parse_f1_table(text);
      manifest.set("n", af.n);
    }
    OutputDir dir(out_dir);
    dir.set_digest(manifest.finish(dir.manifest_path()));
    write_flag_outputs(dir, cohort.records, f1 ? &*f1 : nullptr, af.n, warnings);
    dir.write("warnings.tsv", [&](std::ostream& o) { write_lines(o, warnings); });
  } else {
    if (!seed_given) throw CLI::RequiredError("--seed");
    if (ef.reference.empty()) throw CLI::RequiredError("--reference");
    const auto reference = load_reference_input(ef.reference, cohort.excluded, manifest);
    const auto learner = parse_learner(lf.model);
    SubgroupOptions options;
    options.min_size = af.min_size;
    options.learn = learn_options(lf, learner);
    options.eval = eval_options(ef);
    describe_learner(manifest, lf, learner, options.learn);
    manifest.set("subgroups", ordered_json{{"partition", af.partition}, {"min_size", af.min_size}});
    OutputDir dir(out_dir);
    dir.set_digest(manifest.finish(dir.manifest_path()));
    const auto result = subgroup_learn(cohort.records, parse_partition(af.partition), learner, reference.graph, options);
    warnings = result.warnings;
    dir.write("subgroups.tsv", [&](std::ostream& o) { write_subgroups(o, result); });
    dir.write("warnings.tsv", [&](std::ostream& o) { write_lines(o, warnings); });
  }
  emit_warnings(ctx, warnings);
  return 0;
}

int cmd_pipeline(Context& ctx, const IngestFlags& ingest, const LearnFlags& lf, const EvalFlags& ef,
                 const AnalyzeFlags& af, const std::string& out_dir, std::size_t top_k) {
  Manifest manifest("pipeline", ctx.args);
  const auto cohort = load_cohort(ingest, manifest);
  const auto reference = load_reference_input(ef.reference, cohort.excluded, manifest);
  const auto learner = parse_learner(lf.model);
  const auto options = learn_options(lf, learner);
  describe_learner(manifest, lf, learner, options);
  manifest.set("eval", ordered_json{{"budget", ef.budget}, {"b_mode", ef.b_mode},
                                    {"excluded_reference_edges", reference.dropped}});
  manifest.set("n", af.n);
  OutputDir dir(out_dir);
  dir.set_digest(manifest.finish(dir.manifest_path()));

  dir.write("vocabulary.tsv", [&](std::ostream& o) { write_vocabulary(o, cohort.records.vocabulary); });
  const auto scores = learn(cohort.records, learner, options);
  write_score_outputs(dir, scores, top_k);
  auto report = evaluate(scores, reference.graph, eval_options(ef));
  write_eval_outputs(dir, report);
  std::vector<std::string> warnings = scores.warnings;
  if (reference.dropped > 0)
    warnings.push_back(std::to_string(reference.dropped) + " reference edges touch excluded symptoms");
  warnings.insert(warnings.end(), report.warnings.begin(), report.warnings.end());
  write_flag_outputs(dir, cohort.records, &report.f1, af.n, warnings);
  dir.write("warnings.tsv", [&](std::ostream& o) { write_lines(o, warnings); });
  emit_warnings(ctx, warnings);
  ctx.out << "records " << cohort.records.size() << ", diseases " << cohort.records.vocabulary.num_diseases()
          << ", symptoms " << cohort.records.vocabulary.num_symptoms() << ", auprc "
          << format_double(report.auprc.auprc) << ", mean_f1 " << format_double(report.mean_f1) << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn and evaluate disease-symptom knowledge graphs", "hkg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  IngestFlags ingest;
  LearnFlags learn_flags;
  EvalFlags eval_flags;
  AnalyzeFlags analyze_flags;
  SynthFlags synth_flags;
  std::string out_dir;
  std::string scores_path;
  std::size_t top_k = 25;

  auto* ingest_cmd = app.add_subcommand("ingest", "Build the vocabulary and aggregated records");
  add_ingest_flags(ingest_cmd, ingest);
  ingest_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Sample a synthetic note stream from a truth spec");
  synth_cmd->add_option("--spec", synth_flags.spec, "Truth spec file")->required();
  synth_cmd->add_option("--patients", synth_flags.patients, "Number of patients")->required();
  synth_cmd->add_option("--seed", synth_flags.seed, "Run seed (64-bit)")->required();
  synth_cmd->add_option("--threads", synth_flags.threads, "Worker threads")->capture_default_str();
  synth_cmd->add_option("--out", synth_flags.out, "Records output (default: stdout)");
  synth_cmd->add_option("--truth-out", synth_flags.truth_out, "Truth graph output");
  synth_cmd->add_option("--manifest", synth_flags.manifest, "Manifest path (default: <out>.manifest.json)");

  auto* learn_cmd = app.add_subcommand("learn", "Learn an importance matrix");
  add_ingest_flags(learn_cmd, ingest);
  add_learn_flags(learn_cmd, learn_flags, true);
  learn_cmd->add_option("--top-k", top_k, "Edges per disease in graph.tsv")->capture_default_str();
  learn_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Score an importance matrix against a reference graph");
  eval_cmd->add_option("--scores", scores_path, "Score file")->required();
  add_eval_flags(eval_cmd, eval_flags, true);
  eval_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "Robustness analyses");
  analyze_cmd->add_option("--what", analyze_flags.what, "flags, topbottom, subgroups or predictability")
      ->check(CLI::IsMember({"flags", "topbottom", "subgroups", "predictability"}))
      ->required();
  add_ingest_flags(analyze_cmd, ingest);
  add_learn_flags(analyze_cmd, learn_flags, false);
  analyze_cmd->add_option("--reference", eval_flags.reference, "Reference graph (subgroups)");
  analyze_cmd->add_option("--b-mode", eval_flags.b_mode, "Terminal precision mode (subgroups)")
      ->check(CLI::IsMember({"retained", "full"}));
  analyze_cmd->add_option("--f1", analyze_flags.f1, "Per-disease F1 table (topbottom)");
  analyze_cmd->add_option("--n", analyze_flags.n, "Group size for topbottom")->capture_default_str();
  analyze_cmd->add_option("--partition", analyze_flags.partition, "sex or age_brackets (subgroups)")
      ->check(CLI::IsMember({"sex", "age_brackets"}))
      ->capture_default_str();
  analyze_cmd->add_option("--min-size", analyze_flags.min_size, "Smallest subgroup learned")->capture_default_str();
  analyze_cmd->add_option("--target", analyze_flags.target, "disease or symptom (predictability)")
      ->check(CLI::IsMember({"disease", "symptom"}));
  analyze_cmd->add_option("--family", analyze_flags.families, "Model families (predictability)")
      ->check(CLI::IsMember({"logistic", "random_forest", "naive_bayes"}));
  analyze_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* predict_cmd = app.add_subcommand("predictability", "Cross-validated AUROC per target");
  add_ingest_flags(predict_cmd, ingest);
  add_learn_flags(predict_cmd, learn_flags, true);
  predict_cmd->add_option("--target", analyze_flags.target, "disease or symptom")
      ->check(CLI::IsMember({"disease", "symptom"}))
      ->capture_default_str();
  predict_cmd->add_option("--family", analyze_flags.families, "Model families")
      ->check(CLI::IsMember({"logistic", "random_forest", "naive_bayes"}))
      ->capture_default_str();
  predict_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* pipeline_cmd = app.add_subcommand("pipeline", "ingest -> learn -> eval -> analyze with one seed");
  add_ingest_flags(pipeline_cmd, ingest);
  add_learn_flags(pipeline_cmd, learn_flags, true);
  add_eval_flags(pipeline_cmd, eval_flags, false);
  pipeline_cmd->add_option("--n", analyze_flags.n, "Group size for the top/bottom summary")->capture_default_str();
  pipeline_cmd->add_option("--top-k", top_k, "Edges per disease in graph.tsv")->capture_default_str();
  pipeline_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  std::vector<const char*> argv{"hkg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  Context ctx{args, out, err};
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (ingest_cmd->parsed()) return cmd_ingest(ctx, ingest, out_dir);
    if (synth_cmd->parsed()) return cmd_synth(ctx, synth_flags);
    if (learn_cmd->parsed()) return cmd_learn(ctx, ingest, learn_flags, out_dir, top_k);
    if (eval_cmd->parsed()) return cmd_eval(ctx, scores_path, eval_flags, out_dir);
    if (analyze_cmd->parsed())
      return cmd_analyze(ctx, ingest, learn_flags, eval_flags, analyze_flags, out_dir,
                         analyze_cmd->count("--seed") > 0);
    if (predict_cmd->parsed()) return cmd_predictability(ctx, ingest, learn_flags, analyze_flags, out_dir, "predictability");
    if (pipeline_cmd->parsed()) return cmd_pipeline(ctx, ingest, learn_flags, eval_flags, analyze_flags, out_dir, top_k);
    return 2;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hkg
