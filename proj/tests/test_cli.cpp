#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "oracles.hpp"
#include "srm/cli.hpp"
#include "srm/metrics.hpp"

using namespace srm;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = std::filesystem::temp_directory_path() / ("srm-cli-" + std::to_string(rd()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string judgments_jsonl(TaskKind t, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::string s;
    for (int i = 0; i < n; ++i) {
      nlohmann::ordered_json j;
      j["raw"] = oracle::random_judgment(t, rng).text;
      j["truth"] = to_json(oracle::random_truth(t, rng));
      s += j.dump() + "\n";
    }
    return s;
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(CliTest, RewardWritesOneBreakdownPerLine) {
  spit(path("j.jsonl"), judgments_jsonl(TaskKind::PairwisePreference, 25, 1));
  auto r = run({"reward", "--task", "t1", "--in", path("j.jsonl"), "--out", path("r.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  std::istringstream lines(slurp(path("r.jsonl")));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j["parse_ok"].get<bool>());
    EXPECT_GE(j["total"].get<double>(), 0.0);
    EXPECT_LE(j["total"].get<double>(), 2.0);
    ++n;
  }
  EXPECT_EQ(n, 25);
}

TEST_F(CliTest, RewardWeightsAndStdout) {
  spit(path("j.jsonl"), R"({"raw":"junk","truth":{"label":"A","dims_a":[1,2,3,4,5],"dims_b":[5,4,3,2,1]}})"
                        "\n");
  auto r = run({"reward", "--task", "t4", "--in", path("j.jsonl"), "--lambda-fmt", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["total"].get<double>(), -3.0);
}

TEST_F(CliTest, GradcheckReportsPass) {
  auto r = run({"gradcheck", "--tol", "1e-4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("max_rel_error_grpo"), std::string::npos);
  EXPECT_NE(r.out.find("status pass"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  spit(path("p.jsonl"), "");
  EXPECT_EQ(run({"split", "--in", path("p.jsonl"), "--seed", "1", "--ratios", "0.5,0.5,0.5"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"split", "--in", path("p.jsonl"), "--seed", "1", "--ratios", "a,b"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"reward", "--task", "t9", "--in", path("p.jsonl")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"pairs", "--in", path("p.jsonl")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"reward", "--task", "t1", "--in", path("missing.jsonl")}).code, cli::kExitUsage);
  auto same = run({"filter-cycles", "--in", path("p.jsonl"), "--out", path("p.jsonl")});
  EXPECT_EQ(same.code, cli::kExitUsage);
  EXPECT_FALSE(same.err.empty());
  EXPECT_EQ(run({"train-toy", "--seed", "1", "--group-size", "1"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, ValidationErrorsExitOne) {
  spit(path("bad.jsonl"), "{\"text_id\": 3}\n");
  auto r = run({"filter-cycles", "--in", path("bad.jsonl")});
  EXPECT_EQ(r.code, cli::kExitValidation);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
  auto lenient = run({"filter-cycles", "--in", path("bad.jsonl"), "--lenient"});
  EXPECT_EQ(lenient.code, cli::kExitOk) << lenient.err;
}

TEST_F(CliTest, ParseSingleFile) {
  std::mt19937_64 rng(2);
  auto j = oracle::random_judgment(TaskKind::QualityAssessment, rng);
  spit(path("ok.txt"), j.text);
  auto ok = run({"parse", "--task", "t2", "--in", path("ok.txt")});
  ASSERT_EQ(ok.code, 0) << ok.err;
  auto parsed = nlohmann::json::parse(ok.out);
  EXPECT_TRUE(parsed["ok"].get<bool>());
  spit(path("bad.txt"), "<think>x</think>");
  auto bad = run({"parse", "--task", "t2", "--in", path("bad.txt")});
  EXPECT_EQ(bad.code, cli::kExitValidation);
  EXPECT_EQ(nlohmann::json::parse(bad.out)["error"]["kind"], "MissingAnswer");
}

TEST_F(CliTest, EvalWritesTableAndJson) {
  spit(path("j.jsonl"), judgments_jsonl(TaskKind::QualityAssessment, 30, 3));
  auto r = run({"eval", "--task", "t2", "--in", path("j.jsonl"), "--out", path("e.json"), "--report",
                path("e.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(path("e.txt")));
  auto j = nlohmann::json::parse(slurp(path("e.json")));
  EXPECT_EQ(j["n"], 30);
  EXPECT_TRUE(j.contains("pcc_overall"));
}

TEST_F(CliTest, PipelineIsIdempotentAndLeavesInputsAlone) {
  spit(path("cands.jsonl"), oracle::candidate_corpus(30, 5, 11));
  const std::string before = slurp(path("cands.jsonl"));
  auto stage = [&](const std::string& tag) {
    std::vector<std::vector<std::string>> steps{
        {"pairs", "--in", path("cands.jsonl"), "--out", path("p" + tag), "--seed", "5"},
        {"filter-cycles", "--in", path("p" + tag), "--out", path("c" + tag), "--report",
         path("cr" + tag)},
        {"vote-filter", "--in", path("c" + tag), "--out", path("v" + tag)},
        {"split", "--in", path("v" + tag), "--out", path("s" + tag), "--seed", "5", "--ratios",
         "0.7,0.2,0.1"}};
    for (const auto& s : steps) {
      auto r = run(s);
      ASSERT_EQ(r.code, 0) << s[0] << ": " << r.err;
    }
  };
  stage("1");
  stage("2");
  for (const char* f : {"p", "c", "cr", "v", "s"}) {
    EXPECT_EQ(slurp(path(std::string(f) + "1")), slurp(path(std::string(f) + "2"))) << f;
  }
  EXPECT_EQ(slurp(path("cands.jsonl")), before);
  auto pairs_bytes = slurp(path("p1"));
  EXPECT_EQ(std::count(pairs_bytes.begin(), pairs_bytes.end(), '\n'), 300);
}

TEST_F(CliTest, JobsDoNotChangeOutput) {
  spit(path("j.jsonl"), judgments_jsonl(TaskKind::ScenarioPreference, 60, 4));
  auto one = run({"reward", "--task", "t3", "--in", path("j.jsonl")});
  auto four = run({"reward", "--task", "t3", "--in", path("j.jsonl"), "--jobs", "4"});
  ASSERT_EQ(one.code, 0);
  EXPECT_EQ(one.out, four.out);
}

TEST_F(CliTest, TrainToyCurveIsReproducible) {
  std::vector<std::string> args{"train-toy", "--seed", "3", "--iterations", "20", "--prompts", "4",
                                "--out", path("a.csv")};
  ASSERT_EQ(run(args).code, 0);
  args.back() = path("b.csv");
  ASSERT_EQ(run(args).code, 0);
  auto a = slurp(path("a.csv"));
  EXPECT_EQ(a, slurp(path("b.csv")));
  EXPECT_EQ(a.substr(0, a.find('\n')), "iteration,mean_total_reward,mean_kl");
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 21);
}
