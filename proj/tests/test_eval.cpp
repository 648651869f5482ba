#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "roomsemble/eval.hpp"
#include "support/errors.hpp"
#include "support/paths.hpp"

using namespace roomsemble;
using namespace roomsemble::eval;
using testing_support::fixture_dir;
using testing_support::kind_of;

namespace {

SurveyQuestion question(std::vector<double> votes) {
  SurveyQuestion q;
  q.question_id = "Q";
  q.category = "kitchen";
  q.anchor_path = "a.jpg";
  for (std::size_t i = 0; i < votes.size(); ++i) q.candidate_paths.push_back("c" + std::to_string(i) + ".jpg");
  q.votes = std::move(votes);
  return q;
}

std::vector<SurveyQuestion> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_survey(in);
}

// Textbook form for untied rankings: 1 - 6 sum(d^2) / (n (n^2 - 1)).
double spearman_untied(const std::vector<double>& votes, const std::vector<std::size_t>& ranking) {
  const std::size_t n = votes.size();
  std::vector<std::size_t> by_votes(n);
  std::iota(by_votes.begin(), by_votes.end(), 0);
  std::sort(by_votes.begin(), by_votes.end(), [&](auto a, auto b) { return votes[a] > votes[b]; });
  std::vector<double> vr(n), mr(n);
  for (std::size_t r = 0; r < n; ++r) {
    vr[by_votes[r]] = r + 1.0;
    mr[ranking[r]] = r + 1.0;
  }
  double d2 = 0;
  for (std::size_t i = 0; i < n; ++i) d2 += (vr[i] - mr[i]) * (vr[i] - mr[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

const char* kHeader = "question_id,category,anchor_path,candidate_path,votes\n";

}  // namespace

TEST(Parse, GroupsRowsByQuestion) {
  const auto s = parse(std::string(kHeader) + "Q1,kitchen,a.jpg,b.jpg,3\nQ1,kitchen,a.jpg,c.jpg,5\nQ2,yard,d.jpg,e.jpg,0\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].candidate_paths, (std::vector<std::string>{"b.jpg", "c.jpg"}));
  EXPECT_EQ(s[0].votes, (std::vector<double>{3, 5}));
  EXPECT_EQ(s[1].category, "yard");
}

TEST(Parse, MalformedInputsRejected) {
  for (const std::string text : {std::string(""), std::string("a,b,c\n"), std::string(kHeader),
                                 std::string(kHeader) + "Q1,kitchen,a.jpg,b.jpg\n",
                                 std::string(kHeader) + "Q1,kitchen,a.jpg,b.jpg,many\n",
                                 std::string(kHeader) + "Q1,kitchen,a.jpg,b.jpg,-2\n",
                                 std::string(kHeader) + "Q1,kitchen,a.jpg,b.jpg,1\nQ1,kitchen,z.jpg,c.jpg,1\n",
                                 std::string(kHeader) + "Q1,kitchen,a.jpg,b.jpg,1\nQ1,yard,a.jpg,c.jpg,1\n"}) {
    EXPECT_EQ(kind_of([&] { parse(text); }), ErrorKind::MalformedSurvey) << text;
  }
  EXPECT_EQ(kind_of([] { load_survey("/nonexistent/survey.csv"); }), ErrorKind::MalformedSurvey);
}

TEST(Parse, FixturePathsResolveAgainstCsvDirectory) {
  const auto s = load_survey((fixture_dir() / "survey" / "survey.csv").string());
  ASSERT_EQ(s.size(), 5u);
  for (const auto& q : s) {
    EXPECT_EQ(q.candidate_paths.size(), 5u);
    EXPECT_TRUE(std::filesystem::exists(q.anchor_path)) << q.anchor_path;
  }
}

TEST(Agreement, IdenticalRankingIsPerfect) {
  const auto q = question({9, 7, 5, 3, 1});
  const auto a = agreement(q, {0, 1, 2, 3, 4});
  EXPECT_TRUE(a.top1_match);
  EXPECT_EQ(a.top3_overlap, 3u);
  EXPECT_DOUBLE_EQ(a.spearman_rho, 1.0);
}

TEST(Agreement, ReversedRankingIsMinusOne) {
  const auto q = question({9, 7, 5, 3, 1});
  const auto a = agreement(q, {4, 3, 2, 1, 0});
  EXPECT_FALSE(a.top1_match);
  EXPECT_EQ(a.top3_overlap, 1u);
  EXPECT_DOUBLE_EQ(a.spearman_rho, -1.0);
}

TEST(Agreement, TiedLeadersAllCountAsTopOne) {
  const auto q = question({5, 8, 8, 1, 0});
  EXPECT_TRUE(agreement(q, {2, 1, 0, 3, 4}).top1_match);
  EXPECT_TRUE(agreement(q, {1, 2, 0, 3, 4}).top1_match);
  EXPECT_FALSE(agreement(q, {0, 1, 2, 3, 4}).top1_match);
  // Vote top-3 with ties in input order is {1, 2, 0}.
  EXPECT_EQ(agreement(q, {3, 4, 0, 1, 2}).top3_overlap, 1u);
}

TEST(Agreement, SpearmanMatchesTextbookFormula) {
  std::mt19937 rng(3);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> votes(6);
    std::iota(votes.begin(), votes.end(), 1.0);
    std::shuffle(votes.begin(), votes.end(), rng);
    std::vector<std::size_t> ranking(6);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    EXPECT_NEAR(agreement(question(votes), ranking).spearman_rho, spearman_untied(votes, ranking), 1e-12);
  }
}

TEST(Agreement, AverageRanksForTies) {
  EXPECT_EQ(average_ranks_desc({3, 5, 5, 1}), (std::vector<double>{3, 1.5, 1.5, 4}));
}

TEST(Agreement, InvariantUnderRelabeling) {
  std::mt19937 rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> votes(5);
    for (auto& v : votes) v = static_cast<double>(rng() % 6);
    std::vector<std::size_t> ranking(5), perm(5);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    // Candidate i becomes candidate perm[i].
    std::vector<double> pv(5);
    for (std::size_t i = 0; i < 5; ++i) pv[perm[i]] = votes[i];
    std::vector<std::size_t> pr;
    for (auto i : ranking) pr.push_back(perm[i]);
    const auto a = agreement(question(votes), ranking), b = agreement(question(pv), pr);
    EXPECT_EQ(a.top1_match, b.top1_match);
    EXPECT_NEAR(a.spearman_rho, b.spearman_rho, 1e-12);
    bool untied = true;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) untied = untied && votes[i] != votes[j];
    if (untied) EXPECT_EQ(a.top3_overlap, b.top3_overlap);
  }
}

TEST(Agreement, RankingMustBePermutation) {
  EXPECT_EQ(kind_of([] { agreement(question({1, 2, 3}), {0, 0, 1}); }), ErrorKind::DimensionMismatch);
  EXPECT_EQ(kind_of([] { agreement(question({1, 2, 3}), {0, 1}); }), ErrorKind::DimensionMismatch);
}

TEST(Run, FixtureSurveyReproducesReportedAgreement) {
  const auto survey = load_survey((fixture_dir() / "survey" / "survey.csv").string());
  for (std::uint64_t seed : {1u, 7u}) {
    const auto model = embedding::random_orthonormal_model(embedding::kBaseFeatureDim, 64, seed);
    const auto r = run_eval(survey, model);
    ASSERT_EQ(r.questions.size(), 5u);
    const bool expected[] = {true, true, false, false, true};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.questions[i].top1_match, expected[i]) << r.questions[i].question_id;
    EXPECT_DOUBLE_EQ(r.top1_rate, 0.6);
    EXPECT_EQ(r.questions[3].top3_overlap, 3u);
    const auto j = to_json(r);
    EXPECT_EQ(j["top1_matches"], 3);
    EXPECT_EQ(j["questions"][0]["model_ranking"].size(), 5u);
    EXPECT_NE(format_table(r).find("top1 rate: 3/5"), std::string::npos);
  }
}

TEST(Run, MissingImageReported) {
  auto q = question({1, 2});
  q.anchor_path = "/nonexistent/a.jpg";
  const auto model = embedding::random_orthonormal_model(embedding::kBaseFeatureDim, 8, 1);
  EXPECT_EQ(kind_of([&] { run_eval({q}, model); }), ErrorKind::MissingImage);
}
