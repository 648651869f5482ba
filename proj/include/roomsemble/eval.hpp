#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "roomsemble/csv.hpp"
#include "roomsemble/error.hpp"
#include "roomsemble/imagecore.hpp"
#include "roomsemble/retrieval.hpp"

namespace roomsemble::eval {

struct SurveyQuestion {
  std::string question_id;
  std::string category;
  std::string anchor_path;
  std::vector<std::string> candidate_paths;
  std::vector<double> votes;
};

struct QuestionAgreement {
  std::string question_id;
  std::string category;
  std::vector<std::size_t> model_ranking;  // candidate indices, best first
  std::vector<double> model_scores;        // ensemble score per candidate (input order)
  bool top1_match = false;
  std::size_t top3_overlap = 0;
  double spearman_rho = 0.0;
};

struct AgreementReport {
  std::vector<QuestionAgreement> questions;
  double top1_rate = 0.0;
};

/// `question_id,category,anchor_path,candidate_path,votes`, one row per
/// candidate. Rows of a question need not be adjacent; candidate order is
/// first appearance. Relative paths resolve against the CSV's directory.
inline std::vector<SurveyQuestion> parse_survey(std::istream& in, const std::filesystem::path& base_dir = {}) {
  auto header = csv::read_row(in);
  if (!header || csv::is_blank(*header)) fail(ErrorKind::MalformedSurvey, "survey is empty");
  static const char* expected[] = {"question_id", "category", "anchor_path", "candidate_path", "votes"};
  if (header->size() != 5) fail(ErrorKind::MalformedSurvey, "survey header must have 5 columns");
  for (std::size_t i = 0; i < 5; ++i) {
    if (csv::trim((*header)[i]) != expected[i]) {
      fail(ErrorKind::MalformedSurvey, "unexpected survey column '" + (*header)[i] + "'");
    }
  }
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty()) ? path.string() : (base_dir / path).string();
  };
  std::vector<SurveyQuestion> out;
  std::map<std::string, std::size_t> by_id;
  std::size_t line = 1;
  while (auto row = csv::read_row(in)) {
    ++line;
    if (csv::is_blank(*row)) continue;
    const std::string where = "survey line " + std::to_string(line);
    if (row->size() != 5) fail(ErrorKind::MalformedSurvey, where + ": expected 5 columns");
    const auto qid = csv::trim((*row)[0]);
    if (qid.empty()) fail(ErrorKind::MalformedSurvey, where + ": empty question_id");
    double votes = 0;
    std::size_t used = 0;
    const auto vtext = csv::trim((*row)[4]);
    try {
      votes = std::stod(vtext, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (vtext.empty() || used != vtext.size() || !(votes >= 0) || !std::isfinite(votes)) {
      fail(ErrorKind::MalformedSurvey, where + ": votes must be a non-negative number");
    }
    auto [it, fresh] = by_id.emplace(qid, out.size());
    if (fresh) out.push_back({qid, csv::trim((*row)[1]), resolve(csv::trim((*row)[2])), {}, {}});
    auto& q = out[it->second];
    if (q.category != csv::trim((*row)[1]) || q.anchor_path != resolve(csv::trim((*row)[2]))) {
      fail(ErrorKind::MalformedSurvey, where + ": category/anchor differ within question " + qid);
    }
    q.candidate_paths.push_back(resolve(csv::trim((*row)[3])));
    q.votes.push_back(votes);
  }
  if (out.empty()) fail(ErrorKind::MalformedSurvey, "survey has no questions");
  return out;
}

inline std::vector<SurveyQuestion> load_survey(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MalformedSurvey, "cannot open survey " + path);
  return parse_survey(in, std::filesystem::path(path).parent_path());
}

namespace detail {

inline Image load_required(const std::string& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingImage, "survey image not found: " + path);
  return load_image(path);
}

}  // namespace detail

struct CandidateRanking {
  std::vector<std::size_t> order;  // candidate indices, best first
  std::vector<double> scores;      // per candidate, input order
};

/// Runs the retrieval ensemble with every candidate in the shortlist.
inline CandidateRanking rank_candidates(const SurveyQuestion& q, const embedding::EmbeddingModel& model,
                                        const retrieval::EnsembleConfig& base_cfg = {},
                                        const sift::MatchConfig& sift_cfg = {}) {
  const auto query = retrieval::prepare_query(detail::load_required(q.anchor_path), 0, model, sift_cfg);
  retrieval::CatalogIndex pool;
  pool.model = model;
  char key[16];
  for (std::size_t i = 0; i < q.candidate_paths.size(); ++i) {
    const Image img = detail::load_required(q.candidate_paths[i]);
    retrieval::IndexEntry e;
    std::snprintf(key, sizeof key, "%08zu", i);  // id order = input order for ties
    e.image_id = key;
    e.category_id = 0;
    e.features = embedding::base_features(img);
    e.embedding = embedding::embed(model, e.features);
    embedding::quantize_all(e.embedding);
    e.descriptors = sift::extract(img, sift_cfg).descriptors;
    pool.entries.push_back(std::move(e));
  }
  auto cfg = base_cfg;
  cfg.shortlist_size = cfg.k = std::max<std::size_t>(1, pool.entries.size());
  const auto outcome = retrieval::recommend(query, pool, {}, cfg, sift_cfg);
  CandidateRanking r;
  r.scores.assign(pool.entries.size(), 0.0);
  for (const auto& res : outcome.results) {
    const auto idx = static_cast<std::size_t>(std::stoul(res.image_id));
    r.order.push_back(idx);
    r.scores[idx] = res.ensemble_score;
  }
  return r;
}

/// 1-based ranks of `values` sorted descending; ties share their average rank.
inline std::vector<double> average_ranks_desc(const std::vector<double>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation of the two rank vectors. Zero when either is constant.
inline double spearman(const std::vector<double>& ra, const std::vector<double>& rb) {
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Compares a model ranking with the votes. Vote ties: top-1 counts when the
/// model's first choice is among the tied leaders; the vote top-3 takes tied
/// candidates in input order.
inline QuestionAgreement agreement(const SurveyQuestion& q, const std::vector<std::size_t>& model_ranking) {
  const std::size_t n = q.votes.size();
  if (model_ranking.size() != n || q.candidate_paths.size() != n) {
    fail(ErrorKind::DimensionMismatch, "ranking and votes cover different candidates in " + q.question_id);
  }
  std::vector<bool> seen(n, false);
  for (auto i : model_ranking) {
    if (i >= n || seen[i]) fail(ErrorKind::DimensionMismatch, "model ranking is not a permutation");
    seen[i] = true;
  }
  QuestionAgreement a;
  a.question_id = q.question_id;
  a.category = q.category;
  a.model_ranking = model_ranking;
  if (n == 0) return a;

  const double best = *std::max_element(q.votes.begin(), q.votes.end());
  a.top1_match = q.votes[model_ranking.front()] == best;

  std::vector<std::size_t> by_votes(n);
  std::iota(by_votes.begin(), by_votes.end(), 0);
  std::stable_sort(by_votes.begin(), by_votes.end(), [&](std::size_t x, std::size_t y) { return q.votes[x] > q.votes[y]; });
  const std::size_t top = std::min<std::size_t>(3, n);
  for (std::size_t i = 0; i < top; ++i) {
    if (std::find(model_ranking.begin(), model_ranking.begin() + static_cast<std::ptrdiff_t>(top), by_votes[i]) !=
        model_ranking.begin() + static_cast<std::ptrdiff_t>(top)) {
      ++a.top3_overlap;
    }
  }

  std::vector<double> model_rank(n);
  for (std::size_t r = 0; r < n; ++r) model_rank[model_ranking[r]] = static_cast<double>(r + 1);
  a.spearman_rho = spearman(average_ranks_desc(q.votes), model_rank);
  return a;
}

inline AgreementReport run_eval(const std::vector<SurveyQuestion>& survey, const embedding::EmbeddingModel& model,
                                const retrieval::EnsembleConfig& cfg = {}, const sift::MatchConfig& sift_cfg = {}) {
  AgreementReport report;
  std::size_t matches = 0;
  for (const auto& q : survey) {
    const auto ranking = rank_candidates(q, model, cfg, sift_cfg);
    auto a = agreement(q, ranking.order);
    a.model_scores = ranking.scores;
    matches += a.top1_match ? 1 : 0;
    report.questions.push_back(std::move(a));
  }
  report.top1_rate = survey.empty() ? 0.0 : static_cast<double>(matches) / static_cast<double>(survey.size());
  return report;
}

inline AgreementReport run_eval(const std::string& survey_csv, const retrieval::CatalogIndex& index,
                                const retrieval::EnsembleConfig& cfg = {}, const sift::MatchConfig& sift_cfg = {}) {
  return run_eval(load_survey(survey_csv), index.model, cfg, sift_cfg);
}

inline nlohmann::json to_json(const AgreementReport& r) {
  nlohmann::json qs = nlohmann::json::array();
  std::size_t matches = 0;
  for (const auto& a : r.questions) {
    matches += a.top1_match ? 1 : 0;
    nlohmann::json ranking = nlohmann::json::array();
    for (auto i : a.model_ranking) ranking.push_back(i + 1);
    qs.push_back({{"question_id", a.question_id},
                  {"category", a.category},
                  {"model_ranking", ranking},
                  {"model_scores", a.model_scores},
                  {"top1_match", a.top1_match},
                  {"top3_overlap", a.top3_overlap},
                  {"spearman_rho", a.spearman_rho}});
  }
  return {{"questions", qs},
          {"top1_matches", matches},
          {"question_count", r.questions.size()},
          {"top1_rate", r.top1_rate}};
}

/// Candidate numbers in the table are 1-based positions within the question.
inline std::string format_table(const AgreementReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-12s %-16s %-6s %-6s %8s\n", "question", "category", "model ranking", "top1",
                "top3", "rho");
  out << buf;
  for (const auto& a : r.questions) {
    std::string ranking;
    for (auto i : a.model_ranking) ranking += (ranking.empty() ? "" : ",") + std::to_string(i + 1);
    std::snprintf(buf, sizeof buf, "%-10s %-12s %-16s %-6s %-6zu %8.3f\n", a.question_id.c_str(), a.category.c_str(),
                  ranking.c_str(), a.top1_match ? "yes" : "no", a.top3_overlap, a.spearman_rho);
    out << buf;
  }
  std::size_t matches = 0;
  for (const auto& a : r.questions) matches += a.top1_match ? 1 : 0;
  std::snprintf(buf, sizeof buf, "top1 rate: %zu/%zu = %.3f\n", matches, r.questions.size(), r.top1_rate);
  out << buf;
  return out.str();
}

}  // namespace roomsemble::eval
