#include "helpers.hpp"
#include "oracles.hpp"

#include "hkg/cohort.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

using namespace hkg;
using namespace hkg::test;
using hkg::test::day;

namespace {

std::vector<RawNote> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_records(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

RawNote note(const std::string& patient, int offset, std::vector<std::string> diseases,
             std::vector<std::string> symptoms) {
  RawNote n;
  n.patient_id = patient;
  n.date = day(offset);
  n.diseases = std::move(diseases);
  n.symptoms = std::move(symptoms);
  return n;
}

std::vector<RawNote> random_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RawNote> notes;
  for (std::size_t k = 0; k < count; ++k) {
    RawNote n;
    n.patient_id = "p" + std::to_string(uniform_int(rng, 0, 60));
    n.date = day(static_cast<int>(uniform_int(rng, 0, 700)));
    if (bernoulli(rng, 0.8)) n.age_years = static_cast<int>(uniform_int(rng, 0, 95));
    if (bernoulli(rng, 0.8)) n.sex = bernoulli(rng, 0.5) ? Sex::female : Sex::male;
    for (int j = 0; j < 12; ++j)
      if (bernoulli(rng, 0.05 + 0.02 * j)) n.diseases.push_back("dis" + std::to_string(j));
    for (int i = 0; i < 25; ++i)
      if (bernoulli(rng, 0.005 + 0.002 * i)) n.symptoms.push_back("sym" + std::to_string(i));
    if (bernoulli(rng, 0.3)) n.symptoms.push_back("pain");
    std::sort(n.diseases.begin(), n.diseases.end());
    std::sort(n.symptoms.begin(), n.symptoms.end());
    notes.push_back(std::move(n));
  }
  return notes;
}

// Independent scan: split wherever the gap to the previous sorted note exceeds
// gap_days. Returns the sorted dates and the episode start positions.

}  // namespace

TEST(ParseRecords, FullLineMapsFields) {
  auto notes = parse("p1\t2010-03-02\t54\tF\td:pneumonia;s:cough\n");
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_EQ(notes[0].patient_id, "p1");
  EXPECT_EQ(format_date(notes[0].date), "2010-03-02");
  EXPECT_EQ(notes[0].age_years, 54);
  EXPECT_EQ(notes[0].sex, Sex::female);
  EXPECT_EQ(notes[0].diseases, std::vector<std::string>{"pneumonia"});
  EXPECT_EQ(notes[0].symptoms, std::vector<std::string>{"cough"});
}

TEST(ParseRecords, EmptyOptionalFields) {
  auto notes = parse("p2\t2011-01-01\t\t\t\n");
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_TRUE(notes[0].diseases.empty());
  EXPECT_TRUE(notes[0].symptoms.empty());
  EXPECT_FALSE(notes[0].age_years);
  EXPECT_FALSE(notes[0].sex);
}

TEST(ParseRecords, InvalidDateNamesLine) {
  EXPECT_EQ(error_of("p1\t2010-01-01\t\t\t\np2\t2011-01-01\t\t\t\np3\t2011-13-40\t\t\t\n"), "invalid date at line 3");
}

TEST(ParseRecords, OtherErrors) {
  EXPECT_NE(error_of("p1\t2010-01-01\t\tX\t\n").find("invalid sex at line 1"), std::string::npos);
  EXPECT_NE(error_of("p1\t2010-01-01\t\t\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("p1\t2010-01-01\t\t\tq:foo\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("p1\t2010-02-30\t\t\t\n").find("invalid date"), std::string::npos);
}

TEST(ParseRecords, CommentsSkippedAndUnknownTokensKept) {
  auto notes = parse("# header\n\np1\t2010-01-01\t\tM\ts:zzz_unknown\n");
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_EQ(notes[0].symptoms, std::vector<std::string>{"zzz_unknown"});
  EXPECT_EQ(notes[0].sex, Sex::male);
}

TEST(ParseRecords, WriteParseRoundTrip) {
  auto notes = random_corpus(300, 5);
  std::ostringstream out;
  write_records(out, notes);
  EXPECT_EQ(parse(out.str()), notes);
}

TEST(FilterSupport, BoundaryInclusive) {
  std::vector<RawNote> notes;
  for (int k = 0; k < 100; ++k) notes.push_back(note("p", k, {"flu"}, k < 9 ? std::vector<std::string>{"rare"} : std::vector<std::string>{}));
  for (int k = 0; k < 99; ++k) notes.push_back(note("q", k, {"cold"}, {"cough"}));
  auto vocab = filter_support(notes, {100, 10, {}});
  EXPECT_EQ(vocab.diseases(), std::vector<std::string>{"flu"});
  EXPECT_EQ(vocab.symptoms(), std::vector<std::string>{"cough"});
}

TEST(FilterSupport, EmptyVocabularyThrows) {
  std::vector<RawNote> notes{note("p", 0, {"flu"}, {"cough"})};
  EXPECT_THROW(filter_support(notes, {100, 10, {}}), Error);
}

TEST(FilterSupport, MatchesRecountOracleAndIsIdempotent) {
  auto notes = random_corpus(1000, 11);
  const SupportOptions options{60, 10, {"pain"}};
  auto vocab = filter_support(notes, options);

  std::map<std::string, int> dcount, scount;
  for (const auto& n : notes) {
    for (const auto& d : std::set<std::string>(n.diseases.begin(), n.diseases.end())) dcount[d]++;
    for (const auto& s : std::set<std::string>(n.symptoms.begin(), n.symptoms.end())) scount[s]++;
  }
  std::vector<std::string> want_d, want_s;
  for (const auto& [d, c] : dcount)
    if (c >= options.min_disease_count) want_d.push_back(d);
  for (const auto& [s, c] : scount)
    if (c >= options.min_symptom_count && s != "pain") want_s.push_back(s);
  EXPECT_EQ(vocab.diseases(), want_d);
  EXPECT_EQ(vocab.symptoms(), want_s);
  EXPECT_LT(want_d.size(), 12u);
  EXPECT_LT(want_s.size(), 25u);

  std::vector<RawNote> filtered;
  for (auto n : notes) {
    std::erase_if(n.diseases, [&](const std::string& d) { return !vocab.disease_index(d); });
    std::erase_if(n.symptoms, [&](const std::string& s) { return !vocab.symptom_index(s); });
    filtered.push_back(n);
  }
  EXPECT_EQ(filter_support(filtered, options), vocab);
  EXPECT_EQ(filter_support(notes, options), vocab);
}

TEST(Segmentation, Examples) {
  std::vector<RawNote> a{note("p", 0, {}, {}), note("p", 10, {}, {}), note("p", 50, {}, {})};
  auto ea = segment_episodes(a, 30);
  ASSERT_EQ(ea.size(), 2u);
  EXPECT_EQ(ea[0].size(), 2u);
  EXPECT_EQ(ea[1].size(), 1u);

  std::vector<RawNote> b{note("p", 0, {}, {}), note("p", 30, {}, {}), note("p", 60, {}, {})};
  EXPECT_EQ(segment_episodes(b, 30).size(), 1u);
  EXPECT_TRUE(segment_episodes(std::vector<RawNote>{}, 30).empty());
}

TEST(Segmentation, SameDayKeepsInputOrder) {
  std::vector<RawNote> notes{note("p", 5, {"b"}, {}), note("p", 1, {}, {}), note("p", 5, {"a"}, {})};
  auto episodes = segment_episodes(notes, 0);
  ASSERT_EQ(episodes.size(), 2u);
  ASSERT_EQ(episodes[1].size(), 2u);
  EXPECT_EQ(episodes[1][0].diseases, std::vector<std::string>{"b"});
  EXPECT_EQ(episodes[1][1].diseases, std::vector<std::string>{"a"});
}

TEST(Segmentation, RandomTimelinesMatchScanOracle) {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    const int count = static_cast<int>(uniform_int(rng, 0, 20));
    const int gap = t % 2 == 0 ? 30 : static_cast<int>(uniform_int(rng, 0, 60));
    std::vector<RawNote> notes;
    std::vector<int> days;
    for (int k = 0; k < count; ++k) {
      const int d = static_cast<int>(uniform_int(rng, 0, 300));
      days.push_back(d);
      notes.push_back(note("p", d, {"n" + std::to_string(k)}, {}));
    }
    auto episodes = segment_episodes(notes, gap);
    std::vector<std::size_t> starts;
    std::size_t at = 0;
    std::vector<RawNote> flat;
    for (const auto& e : episodes) {
      starts.push_back(at);
      at += e.size();
      flat.insert(flat.end(), e.begin(), e.end());
    }
    EXPECT_EQ(starts, scan_boundaries(days, gap));
    std::vector<RawNote> sorted = notes;
    std::stable_sort(sorted.begin(), sorted.end(), [](const RawNote& a, const RawNote& b) { return a.date < b.date; });
    EXPECT_EQ(flat, sorted);
  }
}

TEST(Aggregate, EpisodeOrsAndSingleSplits) {
  Vocabulary vocab({"flu"}, {"cough", "fever"});
  std::vector<RawNote> notes{note("p", 0, {}, {"cough"}), note("p", 3, {}, {"fever"})};
  auto episode = aggregate(notes, vocab, AggregationMode::episode);
  ASSERT_EQ(episode.size(), 1);
  EXPECT_EQ(episode.symptoms.row(0).sum(), 2.0);
  EXPECT_EQ(episode.source_note_count[0], 2);
  auto single = aggregate(notes, vocab, AggregationMode::single);
  ASSERT_EQ(single.size(), 2);
  EXPECT_EQ(single.symptoms.row(0).sum(), 1.0);
  EXPECT_EQ(single.symptoms.row(1).sum(), 1.0);
  EXPECT_THROW(parse_aggregation_mode("visit"), Error);
}

TEST(Aggregate, PatientModeCountsAndMonotonicity) {
  auto notes = random_corpus(1500, 23);
  std::set<std::string> ids;
  for (const auto& n : notes) ids.insert(n.patient_id);
  auto vocab = filter_support(notes, {1, 1, {}});
  auto single = aggregate(notes, vocab, AggregationMode::single);
  auto episode = aggregate(notes, vocab, AggregationMode::episode);
  auto patient = aggregate(notes, vocab, AggregationMode::patient);
  EXPECT_EQ(static_cast<std::size_t>(patient.size()), ids.size());
  EXPECT_GE(single.size(), episode.size());
  EXPECT_GE(episode.size(), patient.size());
  EXPECT_EQ(single.size(), static_cast<Eigen::Index>(notes.size()));

  // Per patient, the union of set bits grows (weakly) with coarser modes and
  // each coarse record is the OR of the finer records it contains.
  auto bits_by_patient = [](const RecordSet& r) {
    std::map<std::string, std::set<std::pair<char, Eigen::Index>>> out;
    std::map<std::string, std::size_t> max_bits;
    for (Eigen::Index n = 0; n < r.size(); ++n) {
      auto& s = out[r.patient_id[static_cast<std::size_t>(n)]];
      for (FeatureTable::InnerIterator it(r.diseases, n); it; ++it) s.insert({'d', it.col()});
      for (FeatureTable::InnerIterator it(r.symptoms, n); it; ++it) s.insert({'s', it.col()});
      auto& m = max_bits[r.patient_id[static_cast<std::size_t>(n)]];
      m = std::max<std::size_t>(m, static_cast<std::size_t>(r.diseases.row(n).sum() + r.symptoms.row(n).sum()));
    }
    return std::make_pair(out, max_bits);
  };
  auto [us, ms] = bits_by_patient(single);
  auto [ue, me] = bits_by_patient(episode);
  auto [up, mp] = bits_by_patient(patient);
  EXPECT_EQ(us, ue);
  EXPECT_EQ(ue, up);
  for (const auto& id : ids) {
    EXPECT_LE(ms[id], me[id]);
    EXPECT_LE(me[id], mp[id]);
    EXPECT_EQ(mp[id], up[id].size());
  }
}

TEST(Aggregate, AgeFromEarliestNote) {
  Vocabulary vocab({"flu"}, {"cough"});
  auto late = note("p", 20, {"flu"}, {});
  late.age_years = 41;
  auto early = note("p", 0, {}, {"cough"});
  early.age_years = 40;
  early.sex = Sex::female;
  std::vector<RawNote> notes{late, early};
  auto r = aggregate(notes, vocab, AggregationMode::episode);
  ASSERT_EQ(r.size(), 1);
  EXPECT_EQ(r.age_years[0], 40);
  EXPECT_EQ(r.sex[0], Sex::female);
}

TEST(Aggregate, VocabularyDeterminism) {
  auto notes = random_corpus(800, 3);
  auto a = filter_support(notes, {30, 5, {"pain"}});
  auto b = filter_support(notes, {30, 5, {"pain"}});
  EXPECT_EQ(a.diseases(), b.diseases());
  EXPECT_EQ(a.symptoms(), b.symptoms());
  EXPECT_TRUE(std::is_sorted(a.diseases().begin(), a.diseases().end()));
}

TEST(Demographics, BracketBoundaries) {
  EXPECT_EQ(age_bracket(0), 0);
  EXPECT_EQ(age_bracket(20), 0);
  EXPECT_EQ(age_bracket(21), 1);
  EXPECT_EQ(age_bracket(44), 1);
  EXPECT_EQ(age_bracket(45), 2);
  EXPECT_EQ(age_bracket(64), 2);
  EXPECT_EQ(age_bracket(65), 3);
  EXPECT_EQ(age_bracket(84), 3);
  EXPECT_EQ(age_bracket(85), 4);
  EXPECT_EQ(age_bracket(120), 4);
}

TEST(Demographics, EncodingsAndMissingValues) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 1);
  Eigen::MatrixXd s = Eigen::MatrixXd::Ones(4, 2);
  auto records = test::records_from(d, s, {21, 85, std::nullopt, 30}, {Sex::female, Sex::male, std::nullopt, std::nullopt});

  auto bracket = attach_demographics(records, Block::symptoms, DemoEncoding::bracket);
  ASSERT_EQ(bracket.table.cols(), 2 + 7);
  Eigen::MatrixXd dense = bracket.table;
  EXPECT_EQ(dense(0, 2 + 1), 1.0);
  EXPECT_EQ(dense.row(0).segment(2, 5).sum(), 1.0);
  EXPECT_EQ(dense(1, 2 + 4), 1.0);
  EXPECT_EQ(dense.row(1).segment(2, 5).sum(), 1.0);
  EXPECT_EQ(dense(0, 2 + 5), 1.0);
  EXPECT_EQ(dense(1, 2 + 6), 1.0);
  EXPECT_EQ(dense.row(2).segment(2, 7).sum(), 0.0);
  EXPECT_EQ(dense.row(3).segment(7, 2).sum(), 0.0);
  for (Eigen::Index r = 0; r < 4; ++r) {
    EXPECT_LE(dense.row(r).segment(2, 5).sum(), 1.0);
    EXPECT_LE(dense.row(r).segment(7, 2).sum(), 1.0);
  }

  auto cont = attach_demographics(records, Block::diseases, DemoEncoding::continuous);
  ASSERT_EQ(cont.table.cols(), 1 + 2);
  Eigen::MatrixXd c = cont.table;
  EXPECT_EQ(c(0, 1), 21.0);
  EXPECT_EQ(c(0, 2), 1.0);
  EXPECT_EQ(c(1, 2), 0.0);
  EXPECT_EQ(c(2, 1), 0.0);
  EXPECT_EQ(cont.base_columns, 1);

  EXPECT_EQ(attach_demographics(records, Block::symptoms, DemoEncoding::none).table.cols(), 2);
}
