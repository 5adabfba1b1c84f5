#include "helpers.hpp"
#include "oracles.hpp"

#include "hkg/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace hkg;
using namespace hkg::test;

namespace {

Instance toy() {
  Instance in{Vocabulary({"a", "b", "c"}, {"s1", "s2", "s3", "s4"}), Eigen::MatrixXd::Zero(3, 4), {}};
  in.reference.add({"a", "s1"});
  in.reference.add({"a", "s2"});
  in.reference.add({"b", "s3"});
  return in;
}

}  // namespace

TEST(Auprc, PerfectRankingToy) {
  auto in = toy();
  in.scores << 0.9, 0.8, 0.1, 0.0,  //
      0.2, 0.3, 0.7, 0.0,           //
      0.5, 0.5, 0.5, 0.5;
  auto r = auprc(in.scores, in.vocab, in.reference);
  EXPECT_EQ(r.B, 1.0);
  ASSERT_EQ(r.curve.size(), 4u);
  for (const auto& p : r.curve) EXPECT_EQ(p.precision, 1.0);
  EXPECT_NEAR(r.auprc, 1.0, 1e-15);
  auto full = auprc(in.scores, in.vocab, in.reference, BMode::full);
  EXPECT_NEAR(full.B, 0.25, 1e-15);
  EXPECT_NEAR(full.auprc, 1.0, 1e-15);
}

TEST(Auprc, ImperfectToyByHand) {
  auto in = toy();
  in.scores << 0.9, 0.1, 0.8, 0.0,  //
      0.0, 0.0, 0.7, 0.0,           //
      0.5, 0.5, 0.5, 0.5;
  EXPECT_NEAR(auprc(in.scores, in.vocab, in.reference).auprc, 29.0 / 36.0, 1e-12);
  EXPECT_NEAR(auprc(in.scores, in.vocab, in.reference, BMode::full).auprc, 49.0 / 72.0, 1e-12);
}

TEST(Auprc, AllRetainedEqualGivesSinglePoint) {
  auto in = toy();
  in.scores << 0.5, 0.5, 0.0, 0.0,  //
      0.0, 0.0, 0.5, 0.0,           //
      0.0, 0.0, 0.0, 0.0;
  auto r = auprc(in.scores, in.vocab, in.reference);
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_EQ(r.curve[0].recall, 1.0);
  EXPECT_EQ(r.curve[0].precision, r.B);
  EXPECT_NEAR(r.auprc, r.B, 1e-15);
}

TEST(Auprc, DegenerateWithoutNonzeroScores) {
  auto in = toy();
  auto r = auprc(in.scores, in.vocab, in.reference, BMode::full);
  EXPECT_TRUE(r.degenerate);
  EXPECT_NEAR(r.auprc, r.B / 2, 1e-15);
}

TEST(Auprc, EmptyOrOutsideReferenceThrows) {
  auto in = toy();
  EXPECT_THROW(auprc(in.scores, in.vocab, KnowledgeGraph{}), Error);
  KnowledgeGraph outside;
  outside.add({"zzz", "s1"});
  EXPECT_THROW(auprc(in.scores, in.vocab, outside), Error);
}

TEST(Auprc, MatchesBruteForceOracle) {
  Rng rng(99);
  for (int t = 0; t < 100; ++t) {
    auto in = random_instance(rng);
    for (bool full : {false, true}) {
      auto r = auprc(in.scores, in.vocab, in.reference, full ? BMode::full : BMode::retained);
      auto o = oracle_auprc(in, full);
      EXPECT_NEAR(r.auprc, o.area, 1e-9);
      EXPECT_NEAR(r.B, o.B, 1e-15);
      ASSERT_EQ(r.curve.size(), o.points.size() + 1);
      for (std::size_t k = 0; k < o.points.size(); ++k) {
        EXPECT_NEAR(r.curve[k].recall, o.points[k].first, 1e-12);
        EXPECT_NEAR(r.curve[k].precision, o.points[k].second, 1e-12);
        if (k > 0) {
          EXPECT_LT(r.curve[k].threshold, r.curve[k - 1].threshold);
          EXPECT_GE(r.curve[k].recall, r.curve[k - 1].recall);
        }
      }
      const auto& last = r.curve.back();
      EXPECT_EQ(last.recall, 1.0);
      EXPECT_EQ(last.precision, r.B);
      const auto& before = r.curve.size() > 1 ? r.curve[r.curve.size() - 2] : PRPoint{0, 0, 0};
      const double extension = (1.0 - before.recall) * (before.precision + r.B) / 2;
      EXPECT_GE(r.auprc + 1e-12, extension);
      EXPECT_LE(r.auprc, 1.0 + 1e-12);
    }
  }
}

TEST(F1, FormulaExamples) {
  Vocabulary vocab({"d"}, {"a", "b", "c", "e"});
  KnowledgeGraph ref;
  ref.add({"d", "a"});
  ref.add({"d", "b"});
  ref.add({"d", "c"});
  Eigen::MatrixXd scores(1, 4);
  scores << 0.9, 0.8, 0.1, 0.7;
  auto rows = f1_per_disease(scores, vocab, ref, PerDiseaseK{3});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].tp, 2u);
  EXPECT_EQ(rows[0].fp, 1u);
  EXPECT_EQ(rows[0].fn, 1u);
  EXPECT_NEAR(rows[0].f1, 4.0 / 6.0, 1e-15);
  scores << 0.9, 0.8, 0.7, 0.1;
  EXPECT_EQ(f1_per_disease(scores, vocab, ref, ReferenceMatched{&ref})[0].f1, 1.0);
  EXPECT_THROW(f1_per_disease(scores, vocab, KnowledgeGraph{}, PerDiseaseK{3}), Error);
}

TEST(F1, MatchesEnumerationOracleAndIdentity) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    auto in = random_instance(rng, 10, t < 50 ? 8 : 20);
    for (std::optional<std::size_t> k : {std::optional<std::size_t>{}, std::optional<std::size_t>{3}}) {
      auto rows = k ? f1_per_disease(in.scores, in.vocab, in.reference, PerDiseaseK{*k})
                    : f1_per_disease(in.scores, in.vocab, in.reference, ReferenceMatched{&in.reference});
      auto oracle = oracle_f1(in, k);
      ASSERT_EQ(rows.size(), oracle.size());
      for (const auto& row : rows) {
        EXPECT_NEAR(row.f1, oracle.at(row.disease), 1e-9);
        if (!k) {
          EXPECT_EQ(row.fp, row.fn);
          EXPECT_NEAR(row.f1, static_cast<double>(row.tp) / static_cast<double>(row.reference_edges), 1e-15);
        }
      }
    }
  }
}

TEST(Eval, InvariantUnderIncreasingTransform) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    auto in = random_instance(rng);
    Eigen::MatrixXd transformed = in.scores.unaryExpr([](double v) { return v * v * v + 2 * v; });
    auto a = auprc(in.scores, in.vocab, in.reference);
    auto b = auprc(transformed, in.vocab, in.reference);
    EXPECT_NEAR(a.auprc, b.auprc, 1e-12);
    auto fa = f1_per_disease(in.scores, in.vocab, in.reference, ReferenceMatched{&in.reference});
    auto fb = f1_per_disease(transformed, in.vocab, in.reference, ReferenceMatched{&in.reference});
    for (std::size_t k = 0; k < fa.size(); ++k) EXPECT_EQ(fa[k].f1, fb[k].f1);
  }
}

TEST(LoadReference, ExclusionsAndComposition) {
  std::istringstream in("flu\tpain\nflu\tcough\n");
  auto loaded = load_reference(in, {"pain"});
  EXPECT_EQ(loaded.dropped, 1u);
  EXPECT_EQ(loaded.graph.size(), 1u);
  EXPECT_FALSE(loaded.graph.contains("flu", "pain"));

  std::istringstream again("flu\tpain\nflu\tcough\n");
  auto identity = load_reference(again, {});
  EXPECT_EQ(identity.dropped, 0u);
  EXPECT_EQ(identity.graph, parse_graph_text("flu\tpain\nflu\tcough\n"));

  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    KnowledgeGraph g;
    for (int e = 0; e < 200; ++e)
      g.add({"d" + std::to_string(uniform_int(rng, 0, 20)), "s" + std::to_string(uniform_int(rng, 0, 30))});
    const std::set<std::string> excluded{"s1", "s7", "s22"};
    const auto text = "# fuzz\n" + serialize_graph(g);
    std::istringstream file(text);
    auto got = load_reference(file, excluded);
    KnowledgeGraph want;
    std::size_t dropped = 0;
    const auto parsed = parse_graph_text(text);
    for (const auto& e : parsed.edges()) {
      if (excluded.count(e.symptom))
        ++dropped;
      else
        want.add(e);
    }
    EXPECT_EQ(got.graph, want);
    EXPECT_EQ(got.dropped, dropped);
  }
  EXPECT_THROW(load_reference(std::string("/nonexistent/ref.tsv"), {}), IoError);
}

TEST(Evaluate, RestrictsReferenceAndReports) {
  auto in = toy();
  in.scores << 0.9, 0.1, 0.8, 0.0,  //
      0.0, 0.0, 0.7, 0.0,           //
      0.5, 0.5, 0.5, 0.5;
  ScoreMatrix sm;
  sm.vocabulary = in.vocab;
  sm.values = in.scores;
  sm.raw = in.scores;
  sm.learner = "test";
  auto ref = in.reference;
  ref.add({"a", "pain"});
  ref.add({"unknown", "s1"});
  auto report = evaluate(sm, ref);
  EXPECT_EQ(report.reference_dropped, 2u);
  EXPECT_NEAR(report.auprc.auprc, 29.0 / 36.0, 1e-12);
  ASSERT_EQ(report.f1.size(), 2u);
  EXPECT_NEAR(report.mean_f1, (0.5 + 1.0) / 2, 1e-15);
  EXPECT_EQ(report.budget, "reference_matched");
  auto topk = evaluate(sm, ref, {2, BMode::retained});
  EXPECT_EQ(topk.budget, "top_2");

  // Ranking follows raw when the matrix asks for it.
  sm.rank_by_raw = true;
  sm.values.setZero();
  EXPECT_NEAR(evaluate(sm, ref).auprc.auprc, 29.0 / 36.0, 1e-12);

  KnowledgeGraph outside;
  outside.add({"zzz", "s1"});
  EXPECT_THROW(evaluate(sm, outside), Error);

  std::ostringstream f1, pr, summary;
  write_f1_table(f1, report);
  write_pr_curve(pr, report);
  write_eval_summary(summary, report);
  EXPECT_NE(pr.str().find("extension"), std::string::npos);
  EXPECT_NE(summary.str().find("auprc"), std::string::npos);
}
