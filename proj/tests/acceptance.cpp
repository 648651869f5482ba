// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <regex>
#include <set>

// Eigen (via criteria.hpp) must precede httplib.h: <resolv.h> defines a
// `_res` macro that collides with Eigen parameter names.
#include "support/criteria.hpp"

#include "httplib.h"
#include "json.hpp"
#include "roomsemble/imagecore.hpp"
#include "support/paths.hpp"
#include "support/subprocess.hpp"

namespace criteria = testing_support::criteria;
using criteria::Verdict;
using nlohmann::json;
using testing_support::cli_path;
using testing_support::fixture_dir;
using testing_support::TempDir;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

testing_support::RunResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), cli_path().string());
  auto r = testing_support::run(args);
  if (r.exit_code != 0) {
    std::string cmd;
    for (const auto& a : args) cmd += a + " ";
    throw CliError(cmd + "exited " + std::to_string(r.exit_code) + ": " + r.err);
  }
  return r;
}

std::string catalog_labels() { return (fixture_dir() / "catalog" / "labels.csv").string(); }

/// ingest + build-index into `dir`; returns the index path.
std::string build_pipeline(const std::filesystem::path& dir) {
  cli({"ingest", "--manifest", (fixture_dir() / "catalog" / "manifest.csv").string(), "--store",
       (dir / "store").string(), "--labels", catalog_labels()});
  const auto index = (dir / "index" / "catalog.ridx").string();
  cli({"build-index", "--store", (dir / "store").string(), "--out", index});
  return index;
}

Verdict survey_agreement() {
  TempDir dir("rs-accept");
  const auto index = build_pipeline(dir.path());
  const auto out = (dir / "eval.json").string();
  cli({"eval", "--survey", (fixture_dir() / "survey" / "survey.csv").string(), "--index", index, "--json", out});
  std::ifstream in(out);
  const auto j = json::parse(in);
  std::map<std::string, bool> top1;
  std::size_t q4_overlap = 0;
  for (const auto& q : j["questions"]) {
    top1[q["question_id"]] = q["top1_match"];
    if (q["question_id"] == "Q4") q4_overlap = q["top3_overlap"];
  }
  const std::map<std::string, bool> expected = {{"Q1", true}, {"Q2", true}, {"Q3", false}, {"Q4", false}, {"Q5", true}};
  Verdict v;
  v.pass = top1 == expected && j["top1_matches"] == 3 && j["question_count"] == 5 &&
           j["top1_rate"].get<double>() == 3.0 / 5.0 && q4_overlap == 3;
  std::string got;
  for (const auto& [id, m] : top1) got += id + "=" + (m ? "T" : "F") + " ";
  v.detail = got + "top1_rate=" + j["top1_rate"].dump() + " Q4 top3_overlap=" + std::to_string(q4_overlap);
  return v;
}

Verdict pipeline_integration() {
  TempDir dir("rs-accept");
  const auto index = build_pipeline(dir.path());
  const auto before = cli({"ingest", "--manifest", (fixture_dir() / "catalog" / "manifest.csv").string(), "--store",
                           (dir / "store").string(), "--labels", catalog_labels()});
  const bool reingest_noop = before.out.find("listings added: 0\nimages added: 0\n") != std::string::npos;

  std::ofstream(dir / "serve.json") << json{{"bind_address", "127.0.0.1"},
                                            {"port", 0},
                                            {"image_store_root", (dir / "store").string()},
                                            {"index_path", index},
                                            {"labels_path", catalog_labels()}}
                                           .dump();
  testing_support::Background server({cli_path().string(), "serve", "--config", (dir / "serve.json").string()});
  const auto line = server.read_line(std::chrono::seconds(60));
  std::smatch m;
  if (!line || !std::regex_search(*line, m, std::regex(R"(listening on http://[^:]+:(\d+))"))) {
    return {false, "server did not report a listening address"};
  }
  httplib::Client c("127.0.0.1", std::stoi(m[1]));
  c.set_read_timeout(60);
  std::ifstream photo(fixture_dir() / "queries" / "kitchen_query.jpg", std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(photo), std::istreambuf_iterator<char>()};
  const auto res = c.Post("/api/photos", httplib::MultipartFormDataItems{{"photo", bytes, "kitchen.jpg", "image/jpeg"}});
  if (!res) return {false, "POST /api/photos failed: " + httplib::to_string(res.error())};
  if (res->status != 201) return {false, "POST /api/photos returned " + std::to_string(res->status) + ": " + res->body};
  const auto body = json::parse(res->body);
  const auto& recs = body["recommendations"];
  std::size_t kitchen = 0, fetched = 0;
  std::vector<std::pair<std::string, int>> posted;
  for (const auto& r : recs) {
    if (r["category"] == "kitchen") ++kitchen;
    const auto img = c.Get(r["image_url"].get<std::string>());
    if (img && img->status == 200) {
      try {
        roomsemble::decode_image(std::vector<std::uint8_t>(img->body.begin(), img->body.end()));
        ++fetched;
      } catch (const std::exception&) {
      }
    }
    posted.emplace_back(r["image_id"], r["rank"]);
  }
  const auto photo_res = c.Get(body["photo_url"].get<std::string>());
  const bool photo_ok = photo_res && photo_res->status == 200;

  const auto latest = c.Get("/api/recommendations/latest");
  std::vector<std::pair<std::string, int>> stored;
  if (latest && latest->status == 200) {
    const auto l = json::parse(latest->body);
    for (const auto& r : l["recommendations"]) stored.emplace_back(r["image_id"], r["rank"]);
  }
  server.stop();

  const auto after = cli({"ingest", "--manifest", (fixture_dir() / "catalog" / "manifest.csv").string(), "--store",
                          (dir / "store").string(), "--labels", catalog_labels()});
  const bool still_noop = after.out.find("listings added: 0\nimages added: 0\n") != std::string::npos;

  Verdict v;
  v.pass = !recs.empty() && recs.size() <= 12 && kitchen == recs.size() && fetched == recs.size() && photo_ok &&
           stored == posted && reingest_noop && still_noop;
  v.detail = "201 with " + std::to_string(recs.size()) + " results, " + std::to_string(kitchen) + " kitchen, " +
             std::to_string(fetched) + " image URLs fetched, latest " + (stored == posted ? "matches" : "DIFFERS") +
             ", re-ingest " + (reingest_noop && still_noop ? "no-op" : "ADDED ROWS");
  return v;
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0 = no runtime bound
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all = {
      {"sift-correctness", 60, [] { return criteria::sift_suite(); }},
      {"gradient-check", 10, [] { return criteria::gradient_check(); }},
      {"sampler-soundness", 5, [] { return criteria::sampler_soundness(); }},
      {"training-separation", 60, [] { return criteria::training_separation(); }},
      {"retrieval-oracle", 120, [] { return criteria::retrieval_oracle(); }},
      {"pca-oracle", 0, [] { return criteria::pca_oracle(); }},
      {"survey-agreement", 0, survey_agreement},
      {"pipeline-integration", 120, pipeline_integration},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      v.pass = false;
      v.detail += " (over the " + std::to_string(static_cast<int>(c.budget_seconds)) + " s budget)";
    }
    std::printf("%s %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", c.name, secs, v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%zu/%zu criteria passed\n", all.size() - failed, all.size());
  return failed == 0 ? 0 : 1;
}
