#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "oracles.hpp"
#include "srm/parser.hpp"
#include "srm/rewards.hpp"

using namespace srm;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Golden {
  std::string name;
  TaskKind task;
  std::string text;
};

std::vector<Golden> goldens() {
  std::vector<Golden> out;
  for (const auto& e : std::filesystem::directory_iterator(oracle::fixture_dir() / "golden")) {
    std::string name = e.path().filename().string();
    out.push_back({name, parse_task_code(name.substr(0, 2)), read_file(e.path())});
  }
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.name < b.name; });
  return out;
}

ParsedJudgment ok(const ParseResult& r) {
  if (const auto* e = std::get_if<FormatError>(&r)) {
    ADD_FAILURE() << to_string(e->kind) << " at " << e->location << ": " << e->detail;
    return {};
  }
  return std::get<ParsedJudgment>(r);
}

FormatErrorKind kind_of(const ParseResult& r) {
  const auto* e = std::get_if<FormatError>(&r);
  if (!e) {
    ADD_FAILURE() << "expected a format error";
    return FormatErrorKind::MissingThink;
  }
  return e->kind;
}

const char* kT1 =
    "<think>\n"
    "[Speech A]\n"
    "1) Text Fidelity & Intelligibility: score=8/10; explanation: clear.\n"
    "2) Speaker Similarity to Prompt Speech: score=7/10; explanation: close.\n"
    "3) Prosody & Expressiveness Appropriateness: score=6/10; explanation: flat.\n"
    "4) Naturalness & Audio Quality: score=9/10; explanation: clean.\n"
    "Total_A = 8+7+6+9 = 30\n"
    "[Speech B]\n"
    "1) Text Fidelity & Intelligibility: score=5/10; explanation: slurred.\n"
    "2) Speaker Similarity to Prompt Speech: score=7/10; explanation: close.\n"
    "3) Prosody & Expressiveness Appropriateness: score=7/10; explanation: lively.\n"
    "4) Naturalness & Audio Quality: score=9/10; explanation: clean.\n"
    "Total_B = 5+7+7+9 = 28\n"
    "[Comparison summary]\n"
    "A is clearer.\n"
    "</think>\n"
    "<answer>Speech A is better</answer>";

}  // namespace

TEST(ParseJudgment, HandWrittenPairwise) {
  const auto& j = ok(parse_judgment(kT1, TaskKind::PairwisePreference));
  EXPECT_EQ(j.answer_pref, PreferenceLabel::SpeechA);
  EXPECT_EQ(j.candidate_a->scores.values, (std::vector<double>{8, 7, 6, 9}));
  EXPECT_EQ(j.candidate_b->scores.values, (std::vector<double>{5, 7, 7, 9}));
  EXPECT_EQ(j.candidate_a->total, 30);
  EXPECT_EQ(j.candidate_a->explanations[2], "flat.");
  EXPECT_EQ(j.comparison_summary, "A is clearer.");
  EXPECT_FALSE(j.answer_mos);
  EXPECT_FALSE(j.tie_warning());
}

TEST(ParseJudgment, MosAnswer) {
  std::string raw =
      "<think>\n[Aspect descriptions]\nNoise description: none.\n\n"
      "[Natural language description]\nFine.\n</think>\n"
      "<answer>noise=4; distortion=3; speed=4; continuity=5; naturalness=4; "
      "listening_effort=4; overall=4;</answer>";
  const auto& j = ok(parse_judgment(raw, TaskKind::QualityAssessment));
  EXPECT_EQ(*j.answer_mos, MosVector::from_values({4, 3, 4, 5, 4, 4, 4}));
  EXPECT_EQ(j.aspect_descriptions, "Noise description: none.");
  EXPECT_FALSE(j.candidate_a);
  EXPECT_FALSE(j.answer_pref);
}

TEST(ParseJudgment, MissingThinkClose) {
  std::string raw = kT1;
  raw.erase(raw.find("</think>"), 8);
  EXPECT_EQ(kind_of(parse_judgment(raw, TaskKind::PairwisePreference)),
            FormatErrorKind::MissingThink);
}

TEST(ParseJudgment, DimensionNamesFoldCaseAndSpaces) {
  std::string raw = kT1;
  auto at = raw.find("Speaker Similarity to Prompt Speech");
  raw.replace(at, 35, "speaker   SIMILARITY to prompt speech");
  EXPECT_TRUE(std::holds_alternative<ParsedJudgment>(
      parse_judgment(raw, TaskKind::PairwisePreference)));
}

TEST(ParseJudgment, TaskFamilyMustMatch) {
  EXPECT_TRUE(std::holds_alternative<FormatError>(
      parse_judgment(kT1, TaskKind::QualityAssessment)));
  EXPECT_TRUE(std::holds_alternative<FormatError>(
      parse_judgment(kT1, TaskKind::DialoguePreference)));
}

TEST(ParseJudgment, EmptyExplanationAndSummaryAccepted) {
  std::string raw = kT1;
  raw.replace(raw.find(" clear."), 7, "");
  raw.replace(raw.find("A is clearer.\n"), 14, "");
  const auto& j = ok(parse_judgment(raw, TaskKind::PairwisePreference));
  EXPECT_EQ(j.candidate_a->explanations[0], "");
  EXPECT_EQ(j.comparison_summary, "");
}

TEST(ParseJudgment, TieIsFlagged) {
  auto j = make_pairwise_judgment(TaskKind::PairwisePreference, {{8, 7, 6, 9}},
                                  {{9, 6, 7, 8}}, PreferenceLabel::SpeechB,
                                  {"a", "b", "c", "d"}, {"e", "f", "g", "h"}, "Even.");
  auto rendered = render_judgment(j);
  EXPECT_TRUE(rendered.tie_warning);
  const auto& back = ok(parse_judgment(rendered.text, TaskKind::PairwisePreference));
  EXPECT_TRUE(back.tie_warning());
}

TEST(GoldenCorpus, AtLeastThreePerTask) {
  auto g = goldens();
  for (TaskKind t : kAllTasks) {
    auto n = std::count_if(g.begin(), g.end(), [&](const Golden& x) { return x.task == t; });
    EXPECT_GE(n, 3) << task_code(t);
  }
}

TEST(GoldenCorpus, ParsesWithZeroFormatReward) {
  for (const auto& g : goldens()) {
    SCOPED_TRACE(g.name);
    auto r = parse_judgment(g.text, g.task);
    ok(r);
    EXPECT_EQ(format_reward(r), 0.0);
  }
}

TEST(GoldenCorpus, RenderOfParseIsIdentity) {
  for (const auto& g : goldens()) {
    SCOPED_TRACE(g.name);
    const auto& j = ok(parse_judgment(g.text, g.task));
    EXPECT_EQ(render_judgment(j).text, g.text);
  }
}

TEST(GoldenCorpus, ExtractAnswerAgrees) {
  for (const auto& g : goldens()) {
    SCOPED_TRACE(g.name);
    const auto& j = ok(parse_judgment(g.text, g.task));
    auto a = extract_answer(g.text, g.task);
    if (is_pairwise(g.task)) {
      ASSERT_TRUE(std::holds_alternative<PreferenceLabel>(a));
      EXPECT_EQ(std::get<PreferenceLabel>(a), *j.answer_pref);
    } else {
      ASSERT_TRUE(std::holds_alternative<MosVector>(a));
      EXPECT_EQ(std::get<MosVector>(a), *j.answer_mos);
    }
  }
}

TEST(CorruptionCorpus, EachMutationFailsWithItsKind) {
  std::ifstream f(oracle::fixture_dir() / "corruptions.json");
  auto cases = nlohmann::json::parse(f);
  ASSERT_GE(cases.size(), 12u);
  for (const auto& c : cases) {
    std::string name = c["name"];
    SCOPED_TRACE(name);
    std::string base = c["base"];
    std::string text = read_file(oracle::fixture_dir() / "golden" / base);
    std::string find = c["find"];
    auto at = text.find(find);
    ASSERT_NE(at, std::string::npos);
    text.replace(at, find.size(), c["replace"].get<std::string>());
    auto r = parse_judgment(text, parse_task_code(base.substr(0, 2)));
    const auto* e = std::get_if<FormatError>(&r);
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(to_string(e->kind), c["kind"].get<std::string>()) << e->detail;
    EXPECT_EQ(format_reward(r), -1.0);
  }
}

TEST(ExtractAnswer, ExactLiterals) {
  std::string base = "<think>\nreasoning\n</think>\n<answer>";
  auto b = extract_answer(base + "Speech B is better</answer>", TaskKind::PairwisePreference);
  ASSERT_TRUE(std::holds_alternative<PreferenceLabel>(b));
  EXPECT_EQ(std::get<PreferenceLabel>(b), PreferenceLabel::SpeechB);
  auto lower = extract_answer(base + "speech b is better</answer>", TaskKind::PairwisePreference);
  ASSERT_TRUE(std::holds_alternative<FormatError>(lower));
  EXPECT_EQ(std::get<FormatError>(lower).kind, FormatErrorKind::BadAnswerString);
}

TEST(ExtractAnswer, AgreesWithParserOnRandomJudgments) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    TaskKind t = kAllTasks[i % 4];
    auto j = oracle::random_judgment(t, rng);
    const auto& p = ok(parse_judgment(j.text, t));
    auto a = extract_answer(j.text, t);
    if (is_pairwise(t)) {
      EXPECT_EQ(std::get<PreferenceLabel>(a), *p.answer_pref);
      EXPECT_EQ(*p.answer_pref, j.answer);
      EXPECT_EQ(p.candidate_a->scores.values, j.a);
      EXPECT_EQ(p.candidate_b->scores.values, j.b);
    } else {
      EXPECT_EQ(std::get<MosVector>(a), *p.answer_mos);
      EXPECT_EQ(p.answer_mos->values(), j.mos);
    }
  }
}

TEST(ExtractAnswer, SameKindWhenAnswerIsFirstDefect) {
  std::mt19937_64 rng(4);
  const std::pair<std::string, std::string> edits[] = {
      {"Speech A is better</answer>", "Speech A is best</answer>"},
      {"Speech B is better</answer>", "Speech  B is better</answer>"},
      {"</answer>", ""},
      {"overall=", "overal="},
      {"speed=", "speed=x"},
  };
  for (int i = 0; i < 200; ++i) {
    TaskKind t = kAllTasks[i % 4];
    std::string text = oracle::random_judgment(t, rng).text;
    for (const auto& [from, to] : edits) {
      auto at = text.find(from);
      if (at == std::string::npos) continue;
      std::string bad = text;
      bad.replace(at, from.size(), to);
      auto p = parse_judgment(bad, t);
      auto a = extract_answer(bad, t);
      ASSERT_TRUE(std::holds_alternative<FormatError>(p));
      ASSERT_TRUE(std::holds_alternative<FormatError>(a));
      EXPECT_EQ(std::get<FormatError>(p).kind, std::get<FormatError>(a).kind) << bad;
    }
  }
}

TEST(RenderJudgment, MosAnswerHasSevenPairsInOrder) {
  auto j = make_mos_judgment(MosVector::from_values({1, 2, 3, 4, 5, 4, 3}),
                             "Noise description: none.", "Fine.");
  auto text = render_judgment(j).text;
  auto open = text.find("<answer>") + 8;
  EXPECT_EQ(text.substr(open, text.find("</answer>") - open),
            "noise=1; distortion=2; speed=3; continuity=4; naturalness=5; "
            "listening_effort=4; overall=3;");
}

TEST(RenderJudgment, ParseOfRenderIsIdentity) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    TaskKind t = kAllTasks[i % 4];
    auto parsed = ok(parse_judgment(oracle::random_judgment(t, rng).text, t));
    auto again = ok(parse_judgment(render_judgment(parsed).text, t));
    EXPECT_EQ(again, parsed);
  }
}

TEST(RenderJudgment, InvariantViolationsThrow) {
  auto j = ok(parse_judgment(kT1, TaskKind::PairwisePreference));
  auto bad_total = j;
  bad_total.candidate_a->total = 31;
  EXPECT_THROW(render_judgment(bad_total), SchemaError);
  auto out_of_range = j;
  out_of_range.candidate_b->scores.values[0] = 12;
  EXPECT_THROW(render_judgment(out_of_range), SchemaError);
  auto multiline = j;
  multiline.candidate_a->explanations[0] = "two\nlines";
  EXPECT_THROW(render_judgment(multiline), SchemaError);
  auto tagged = j;
  tagged.comparison_summary = "see </think>";
  EXPECT_THROW(render_judgment(tagged), SchemaError);
  auto no_answer = j;
  no_answer.answer_pref.reset();
  EXPECT_THROW(render_judgment(no_answer), SchemaError);
}

TEST(ParseJudgment, TotalOnArbitraryInput) {
  std::mt19937_64 rng(77);
  const std::string alphabet = "<>/thinkswera[]=;:+-0123456789 \n.ABS";
  for (int i = 0; i < 3000; ++i) {
    std::string s(rng() % 200, ' ');
    for (char& c : s) c = alphabet[rng() % alphabet.size()];
    for (TaskKind t : kAllTasks) {
      EXPECT_NO_THROW(parse_judgment(s, t));
      EXPECT_NO_THROW(extract_answer(s, t));
    }
  }
  for (const auto& g : goldens()) {
    for (std::size_t cut = 0; cut < g.text.size(); cut += 7) {
      auto r = parse_judgment(std::string_view(g.text).substr(0, cut), g.task);
      EXPECT_TRUE(std::holds_alternative<FormatError>(r));
    }
  }
  EXPECT_EQ(kind_of(parse_judgment("", TaskKind::PairwisePreference)),
            FormatErrorKind::MissingThink);
}

TEST(ParseJudgment, LargeGarbageIsFastAndDeterministic) {
  std::string big;
  big.reserve(4 << 20);
  std::mt19937_64 rng(1);
  while (big.size() < (4u << 20)) big += "<think> score=7/10; Total_A = 1+2 \n"[rng() % 30];
  auto start = std::chrono::steady_clock::now();
  auto a = parse_judgment(big, TaskKind::PairwisePreference);
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 2.0);
  auto b = parse_judgment(big, TaskKind::PairwisePreference);
  ASSERT_TRUE(std::holds_alternative<FormatError>(a));
  EXPECT_EQ(std::get<FormatError>(a).kind, std::get<FormatError>(b).kind);
  EXPECT_EQ(std::get<FormatError>(a).location, std::get<FormatError>(b).location);

  std::string long_think = "<think>\n" + std::string(3 << 20, 'x') + "\n</think>\n<answer>";
  auto c = parse_judgment(long_think + "Speech A is better</answer>", TaskKind::PairwisePreference);
  EXPECT_TRUE(std::holds_alternative<FormatError>(c));
}

TEST(FormatScore, ShortestForm) {
  EXPECT_EQ(format_score(8), "8");
  EXPECT_EQ(format_score(7.5), "7.5");
  EXPECT_EQ(format_score(0), "0");
  EXPECT_EQ(format_score(0.1), "0.1");
}
