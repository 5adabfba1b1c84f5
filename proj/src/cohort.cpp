#include "hkg/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace hkg {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<int> parse_int(const std::string& text) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

void sort_unique(std::vector<std::string>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> diseases, std::vector<std::string> symptoms)
    : diseases_(std::move(diseases)), symptoms_(std::move(symptoms)) {
  for (std::size_t j = 0; j < diseases_.size(); ++j) {
    if (!disease_lookup_.emplace(diseases_[j], static_cast<Eigen::Index>(j)).second)
      throw Error("duplicate disease identifier '" + diseases_[j] + "'");
  }
  for (std::size_t i = 0; i < symptoms_.size(); ++i) {
    if (disease_lookup_.count(symptoms_[i]))
      throw Error("identifier '" + symptoms_[i] + "' is both a disease and a symptom");
    if (!symptom_lookup_.emplace(symptoms_[i], static_cast<Eigen::Index>(i)).second)
      throw Error("duplicate symptom identifier '" + symptoms_[i] + "'");
  }
}

std::optional<Eigen::Index> Vocabulary::disease_index(const std::string& name) const {
  auto it = disease_lookup_.find(name);
  if (it == disease_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<Eigen::Index> Vocabulary::symptom_index(const std::string& name) const {
  auto it = symptom_lookup_.find(name);
  if (it == symptom_lookup_.end()) return std::nullopt;
  return it->second;
}

bool RecordSet::has_demographics() const {
  return std::any_of(age_years.begin(), age_years.end(), [](const auto& a) { return a.has_value(); }) ||
         std::any_of(sex.begin(), sex.end(), [](const auto& s) { return s.has_value(); });
}

RecordSet RecordSet::subset(const std::vector<std::size_t>& rows) const {
  RecordSet out;
  out.vocabulary = vocabulary;
  out.diseases = select_rows(diseases, rows);
  out.symptoms = select_rows(symptoms, rows);
  out.age_years.reserve(rows.size());
  for (auto r : rows) {
    out.age_years.push_back(age_years.at(r));
    out.sex.push_back(sex.at(r));
    out.patient_id.push_back(patient_id.at(r));
    out.source_note_count.push_back(source_note_count.at(r));
  }
  return out;
}

void RecordSet::validate() const {
  const auto n = static_cast<std::size_t>(size());
  if (n == 0) throw Error("record set is empty");
  if (symptoms.rows() != diseases.rows()) throw Error("record set: disease and symptom row counts differ");
  if (diseases.cols() != vocabulary.num_diseases() || symptoms.cols() != vocabulary.num_symptoms())
    throw Error("record set: column counts do not match the vocabulary");
  if (age_years.size() != n || sex.size() != n || patient_id.size() != n || source_note_count.size() != n)
    throw Error("record set: per-record field lengths differ from N");
  for (int c : source_note_count)
    if (c < 1) throw Error("record set: source_note_count must be >= 1");
}

AggregationMode parse_aggregation_mode(const std::string& text) {
  if (text == "single") return AggregationMode::single;
  if (text == "episode") return AggregationMode::episode;
  if (text == "patient") return AggregationMode::patient;
  throw Error("unknown aggregation mode '" + text + "'");
}

DemoEncoding parse_demo_encoding(const std::string& text) {
  if (text == "none") return DemoEncoding::none;
  if (text == "continuous") return DemoEncoding::continuous;
  if (text == "bracket") return DemoEncoding::bracket;
  throw Error("unknown demographic encoding '" + text + "'");
}

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::single: return "single";
    case AggregationMode::episode: return "episode";
    case AggregationMode::patient: return "patient";
  }
  return "?";
}

std::string to_string(DemoEncoding encoding) {
  switch (encoding) {
    case DemoEncoding::none: return "none";
    case DemoEncoding::continuous: return "continuous";
    case DemoEncoding::bracket: return "bracket";
  }
  return "?";
}

int age_bracket(int age_years) {
  if (age_years < 21) return 0;
  if (age_years < 45) return 1;
  if (age_years < 65) return 2;
  if (age_years < 85) return 3;
  return 4;
}

const std::vector<std::string>& age_bracket_labels() {
  static const std::vector<std::string> labels{"under 21", "21-44", "45-64", "65-84", "85+"};
  return labels;
}

Date parse_date(const std::string& text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw Error("invalid date '" + text + "'");
  auto y = parse_int(text.substr(0, 4));
  auto m = parse_int(text.substr(5, 2));
  auto d = parse_int(text.substr(8, 2));
  if (!y || !m || !d || *m < 1 || *d < 1) throw Error("invalid date '" + text + "'");
  const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*m)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) throw Error("invalid date '" + text + "'");
  return sys_days{ymd};
}

std::string format_date(Date date) {
  using namespace std::chrono;
  const year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<RawNote> parse_records(std::istream& in) {
  std::vector<RawNote> notes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto where = " at line " + std::to_string(line_no);
    auto fields = split(line, '\t');
    if (fields.size() != 5)
      throw Error("malformed record" + where + ": expected 5 tab-separated fields, got " +
                  std::to_string(fields.size()));
    RawNote note;
    note.patient_id = fields[0];
    if (note.patient_id.empty()) throw Error("empty patient_id" + where);
    try {
      note.date = parse_date(fields[1]);
    } catch (const Error&) {
      throw Error("invalid date" + where);
    }
    if (!fields[2].empty()) {
      auto age = parse_int(fields[2]);
      if (!age || *age < 0) throw Error("invalid age_years" + where);
      note.age_years = *age;
    }
    if (fields[3] == "F") {
      note.sex = Sex::female;
    } else if (fields[3] == "M") {
      note.sex = Sex::male;
    } else if (!fields[3].empty()) {
      throw Error("invalid sex" + where);
    }
    if (!fields[4].empty()) {
      for (const auto& token : split(fields[4], ';')) {
        if (token.empty()) continue;
        if (token.size() > 2 && token.compare(0, 2, "d:") == 0) {
          note.diseases.push_back(token.substr(2));
        } else if (token.size() > 2 && token.compare(0, 2, "s:") == 0) {
          note.symptoms.push_back(token.substr(2));
        } else {
          throw Error("invalid concept token '" + token + "'" + where);
        }
      }
    }
    sort_unique(note.diseases);
    sort_unique(note.symptoms);
    notes.push_back(std::move(note));
  }
  return notes;
}

void write_records(std::ostream& out, std::span<const RawNote> notes) {
  for (const auto& note : notes) {
    out << note.patient_id << '\t' << format_date(note.date) << '\t';
    if (note.age_years) out << *note.age_years;
    out << '\t';
    if (note.sex) out << (*note.sex == Sex::female ? 'F' : 'M');
    out << '\t';
    bool first = true;
    for (const auto& d : note.diseases) {
      out << (first ? "" : ";") << "d:" << d;
      first = false;
    }
    for (const auto& s : note.symptoms) {
      out << (first ? "" : ";") << "s:" << s;
      first = false;
    }
    out << '\n';
  }
}

Vocabulary filter_support(std::span<const RawNote> notes, const SupportOptions& options) {
  std::map<std::string, int> disease_counts;
  std::map<std::string, int> symptom_counts;
  for (const auto& note : notes) {
    for (const auto& d : note.diseases) ++disease_counts[d];
    for (const auto& s : note.symptoms) ++symptom_counts[s];
  }
  std::vector<std::string> diseases;
  std::vector<std::string> symptoms;
  for (const auto& [name, count] : disease_counts)
    if (count >= options.min_disease_count) diseases.push_back(name);
  for (const auto& [name, count] : symptom_counts)
    if (count >= options.min_symptom_count && !options.excluded_symptoms.count(name)) symptoms.push_back(name);
  if (diseases.empty() || symptoms.empty())
    throw Error("support filter left an empty vocabulary (" + std::to_string(diseases.size()) + " diseases, " +
                std::to_string(symptoms.size()) + " symptoms)");
  return Vocabulary(std::move(diseases), std::move(symptoms));
}

std::vector<std::vector<RawNote>> segment_episodes(std::span<const RawNote> notes, int gap_days) {
  std::vector<RawNote> sorted(notes.begin(), notes.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const RawNote& a, const RawNote& b) { return a.date < b.date; });
  std::vector<std::vector<RawNote>> episodes;
  for (auto& note : sorted) {
    if (episodes.empty() || (note.date - episodes.back().back().date).count() > gap_days) episodes.emplace_back();
    episodes.back().push_back(std::move(note));
  }
  return episodes;
}

namespace {

struct RecordBuilder {
  const Vocabulary& vocabulary;
  std::vector<Eigen::Triplet<double>> disease_entries;
  std::vector<Eigen::Triplet<double>> symptom_entries;
  RecordSet out;

  void add(std::span<const RawNote> members) {
    const auto row = static_cast<Eigen::Index>(out.patient_id.size());
    std::set<Eigen::Index> ds;
    std::set<Eigen::Index> ss;
    std::optional<int> age;
    std::optional<Sex> sex;
    for (const auto& note : members) {
      for (const auto& d : note.diseases)
        if (auto j = vocabulary.disease_index(d)) ds.insert(*j);
      for (const auto& s : note.symptoms)
        if (auto i = vocabulary.symptom_index(s)) ss.insert(*i);
      if (!age && note.age_years) age = note.age_years;
      if (!sex && note.sex) sex = note.sex;
    }
    for (auto j : ds) disease_entries.emplace_back(row, j, 1.0);
    for (auto i : ss) symptom_entries.emplace_back(row, i, 1.0);
    out.age_years.push_back(age);
    out.sex.push_back(sex);
    out.patient_id.push_back(members.front().patient_id);
    out.source_note_count.push_back(static_cast<int>(members.size()));
  }

  RecordSet finish() {
    const auto n = static_cast<Eigen::Index>(out.patient_id.size());
    out.vocabulary = vocabulary;
    out.diseases.resize(n, vocabulary.num_diseases());
    out.diseases.setFromTriplets(disease_entries.begin(), disease_entries.end());
    out.symptoms.resize(n, vocabulary.num_symptoms());
    out.symptoms.setFromTriplets(symptom_entries.begin(), symptom_entries.end());
    out.validate();
    return std::move(out);
  }
};

}  // namespace

RecordSet aggregate(std::span<const RawNote> notes, const Vocabulary& vocabulary, AggregationMode mode,
                    int gap_days) {
  if (notes.empty()) throw Error("cannot aggregate an empty note list");
  std::map<std::string, std::vector<RawNote>> by_patient;
  for (const auto& note : notes) by_patient[note.patient_id].push_back(note);

  RecordBuilder builder{vocabulary, {}, {}, {}};
  for (const auto& [patient, patient_notes] : by_patient) {
    auto episodes = segment_episodes(patient_notes, gap_days);
    switch (mode) {
      case AggregationMode::single:
        for (const auto& episode : episodes)
          for (const auto& note : episode) builder.add(std::span<const RawNote>(&note, 1));
        break;
      case AggregationMode::episode:
        for (const auto& episode : episodes) builder.add(episode);
        break;
      case AggregationMode::patient: {
        std::vector<RawNote> all;
        for (auto& episode : episodes) all.insert(all.end(), episode.begin(), episode.end());
        builder.add(all);
        break;
      }
    }
  }
  return builder.finish();
}

std::vector<std::string> demographic_column_names(DemoEncoding encoding) {
  switch (encoding) {
    case DemoEncoding::none: return {};
    case DemoEncoding::continuous: return {"age_years", "sex_female"};
    case DemoEncoding::bracket:
      return {"age_lt21", "age_21_44", "age_45_64", "age_65_84", "age_85plus", "sex_female", "sex_male"};
  }
  return {};
}

FeatureTable demographic_columns(const RecordSet& records, DemoEncoding encoding) {
  const auto n = records.size();
  const auto width = static_cast<Eigen::Index>(demographic_column_names(encoding).size());
  std::vector<Eigen::Triplet<double>> entries;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& age = records.age_years[static_cast<std::size_t>(r)];
    const auto& sex = records.sex[static_cast<std::size_t>(r)];
    if (encoding == DemoEncoding::continuous) {
      if (age && *age != 0) entries.emplace_back(r, 0, static_cast<double>(*age));
      if (sex == Sex::female) entries.emplace_back(r, 1, 1.0);
    } else if (encoding == DemoEncoding::bracket) {
      if (age) entries.emplace_back(r, age_bracket(*age), 1.0);
      if (sex) entries.emplace_back(r, *sex == Sex::female ? kAgeBrackets : kAgeBrackets + 1, 1.0);
    }
  }
  FeatureTable table(n, width);
  table.setFromTriplets(entries.begin(), entries.end());
  return table;
}

FeatureMatrix attach_demographics(const RecordSet& records, Block block, DemoEncoding encoding) {
  FeatureMatrix out;
  const auto& base = block == Block::symptoms ? records.symptoms : records.diseases;
  out.base_columns = base.cols();
  out.encoding = encoding;
  out.demo_columns = demographic_column_names(encoding);
  out.table = encoding == DemoEncoding::none ? base : hstack(base, demographic_columns(records, encoding));
  return out;
}

}  // namespace hkg
