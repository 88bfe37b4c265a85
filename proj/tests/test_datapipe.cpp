#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "oracles.hpp"
#include "srm/datapipe.hpp"

using namespace srm;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

CandidateSet make_set(const std::string& text, std::size_t n) {
  CandidateSet s{text, {}, true};
  s.candidates.push_back({text + "-gt", "gt"});
  for (std::size_t i = 1; i < n; ++i) s.candidates.push_back({text + "-s" + std::to_string(i), "tts"});
  return s;
}

// Candidate k scores k on every dimension, so later candidates always win.
PairLabeler rising_labeler() {
  return [](const Candidate& a, const Candidate& b) {
    auto score = [](const Candidate& c) {
      double k = c.source == "gt" ? 0.0 : std::stod(c.id.substr(c.id.rfind('s') + 1));
      return DimScores{{k, k, k, k}};
    };
    return PairAnnotation{score(a), score(b), std::nullopt};
  };
}

PairRecord edge(const std::string& text, const std::string& winner, const std::string& loser) {
  PairRecord r;
  r.text_id = text;
  r.cand_a = winner;
  r.cand_b = loser;
  r.auto_label = PreferenceLabel::SpeechA;
  return r;
}

std::vector<PairRecord> records_of(const Edges& edges) {
  std::vector<PairRecord> out;
  for (auto [u, v] : edges) out.push_back(edge("g", "n" + std::to_string(u), "n" + std::to_string(v)));
  return out;
}

std::set<std::pair<std::string, std::string>> winner_loser(const std::vector<PairRecord>& rs) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& r : rs) out.insert({r.winner(), r.loser()});
  return out;
}

void expect_matches_oracle(std::size_t n, const Edges& edges) {
  auto res = filter_cycles(records_of(edges));
  auto on_cycle = oracle::edges_on_cycles(n, edges);
  std::set<std::pair<std::string, std::string>> want_kept;
  Edges kept_edges;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!on_cycle[e]) {
      want_kept.insert({"n" + std::to_string(edges[e].first), "n" + std::to_string(edges[e].second)});
      kept_edges.push_back(edges[e]);
    }
  }
  EXPECT_EQ(winner_loser(res.kept), want_kept);
  EXPECT_EQ(res.kept.size() + res.removed.size(), edges.size());
  EXPECT_FALSE(oracle::has_cycle(n, kept_edges));
  EXPECT_EQ(res.report.kept + res.report.removed(), res.report.input);
}

PairRecord random_record(std::mt19937_64& rng, std::size_t i) {
  PairRecord r;
  r.text_id = "text-" + std::to_string(rng() % 50);
  r.cand_a = "c" + std::to_string(i) + "a";
  r.cand_b = "c" + std::to_string(i) + "b";
  r.auto_label = rng() % 2 ? PreferenceLabel::SpeechA : PreferenceLabel::SpeechB;
  auto dims = [&] {
    DimScores d;
    for (int k = 0; k < 4; ++k) d.values.push_back(static_cast<double>(rng() % 21) / 2.0);
    return d;
  };
  if (rng() % 4) {
    r.dim_scores_a = dims();
    r.dim_scores_b = dims();
  }
  if (rng() % 2) {
    std::vector<AnnotatorVote> v;
    for (int k = 0; k < 3; ++k) v.push_back(static_cast<AnnotatorVote>(rng() % 3));
    r.votes = v;
  }
  if (rng() % 2) r.split = static_cast<Split>(rng() % 3);
  r.order_seed = rng();
  r.tie = rng() % 5 == 0;
  return r;
}

}  // namespace

TEST(FormPairs, CountsAreBinomial) {
  EXPECT_EQ(form_pairs(make_set("t", 3), 1, rising_labeler()).size(), 3u);
  EXPECT_EQ(form_pairs(make_set("t", 5), 1, rising_labeler()).size(), 10u);
  EXPECT_EQ(form_pairs(make_set("t", 2), 1, rising_labeler()).size(), 1u);
  EXPECT_THROW(form_pairs(make_set("t", 1), 1, rising_labeler()), DomainError);
}

TEST(FormPairs, EachUnorderedPairOnceWithCorrectLabel) {
  auto pairs = form_pairs(make_set("t", 6), 42, rising_labeler());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    EXPECT_NE(p.cand_a, p.cand_b);
    EXPECT_TRUE(seen.insert(std::minmax(p.cand_a, p.cand_b)).second);
    ASSERT_TRUE(p.dim_scores_a && p.dim_scores_b);
    double ta = p.dim_scores_a->values[0], tb = p.dim_scores_b->values[0];
    EXPECT_EQ(p.auto_label, label_from_totals(ta, tb));
    // The candidate with the larger index wins regardless of orientation.
    auto index = [](const std::string& id) { return id.back() == 't' ? 0 : id.back() - '0'; };
    EXPECT_GT(index(p.winner()), index(p.loser()));
  }
}

TEST(FormPairs, OrientationIsRandomizedAndSeeded) {
  int swapped = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    auto p = form_pairs(make_set("t", 2), seed, rising_labeler());
    if (p[0].cand_a != "t-gt") ++swapped;
    EXPECT_EQ(p[0].order_seed, pair_order_seed(seed, "t", 0, 1));
  }
  EXPECT_GT(swapped, 850);
  EXPECT_LT(swapped, 1150);
  EXPECT_EQ(form_pairs(make_set("t", 5), 3, rising_labeler()),
            form_pairs(make_set("t", 5), 3, rising_labeler()));
}

TEST(FormPairs, SwapReorientsVotes) {
  auto labeler = [](const Candidate&, const Candidate&) {
    return PairAnnotation{DimScores{{9, 9, 9, 9}}, DimScores{{1, 1, 1, 1}},
                          std::vector<AnnotatorVote>{AnnotatorVote::A, AnnotatorVote::A,
                                                     AnnotatorVote::Invalid}};
  };
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = form_pairs(make_set("t", 2), seed, labeler)[0];
    EXPECT_EQ(p.winner(), "t-gt");
    auto keep = vote_filter(p);
    EXPECT_TRUE(keep.keep);
  }
}

TEST(FilterCycles, HandExamples) {
  auto three = filter_cycles({edge("g", "A", "B"), edge("g", "B", "C"), edge("g", "C", "A")});
  EXPECT_EQ(three.kept.size(), 0u);
  EXPECT_EQ(three.removed.size(), 3u);
  EXPECT_EQ(three.report.removed_cycles, 3u);

  auto chain = filter_cycles({edge("g", "A", "B"), edge("g", "B", "C"), edge("g", "A", "C")});
  EXPECT_EQ(chain.kept.size(), 3u);

  auto tail = filter_cycles(
      {edge("g", "A", "B"), edge("g", "B", "C"), edge("g", "C", "A"), edge("g", "A", "D")});
  ASSERT_EQ(tail.kept.size(), 1u);
  EXPECT_EQ(tail.kept[0].cand_b, "D");

  auto contradictory = filter_cycles({edge("g", "A", "B"), edge("g", "B", "A")});
  EXPECT_EQ(contradictory.removed.size(), 2u);
}

TEST(FilterCycles, GroupsAreIndependent) {
  auto res = filter_cycles({edge("g1", "A", "B"), edge("g2", "B", "C"), edge("g1", "B", "C"),
                            edge("g2", "C", "A"), edge("g1", "C", "A"), edge("g2", "A", "B")});
  EXPECT_EQ(res.kept.size(), 0u);
  auto split = filter_cycles({edge("g1", "A", "B"), edge("g1", "B", "C"), edge("g2", "C", "A")});
  EXPECT_EQ(split.kept.size(), 3u);
  EXPECT_EQ(split.report.per_group_detail.size(), 2u);
}

TEST(FilterCycles, EveryTournamentUpToFiveNodes) {
  for (std::size_t n = 2; n <= 5; ++n) {
    Edges pairs;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v) pairs.push_back({u, v});
    for (std::uint32_t mask = 0; mask < (1u << pairs.size()); ++mask) {
      Edges e;
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        auto [u, v] = pairs[k];
        e.push_back(mask >> k & 1 ? std::pair{v, u} : std::pair{u, v});
      }
      expect_matches_oracle(n, e);
    }
  }
}

TEST(FilterCycles, RandomDigraphsUpToEightNodes) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 500; ++t) {
    std::size_t n = 2 + rng() % 7;
    double density = 0.1 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    Edges e;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v)
        if (u != v && static_cast<double>(rng() % 1000) / 1000.0 < density) e.push_back({u, v});
    std::shuffle(e.begin(), e.end(), rng);
    expect_matches_oracle(n, e);
  }
}

TEST(FilterCycles, PreservesInputOrder) {
  auto in = records_of({{0, 1}, {1, 2}, {2, 0}, {3, 4}, {0, 3}, {5, 4}});
  auto res = filter_cycles(in);
  std::vector<PairRecord> expect_kept{in[3], in[4], in[5]};
  EXPECT_EQ(res.kept, expect_kept);
  std::vector<PairRecord> expect_removed{in[0], in[1], in[2]};
  EXPECT_EQ(res.removed, expect_removed);
}

TEST(StronglyConnected, SmallGraph) {
  auto scc = strongly_connected_components(5, {{0, 1}, {1, 0}, {1, 2}, {3, 4}, {4, 3}});
  std::set<std::vector<std::size_t>> comps;
  for (auto c : scc) {
    std::sort(c.begin(), c.end());
    comps.insert(c);
  }
  EXPECT_EQ(comps, (std::set<std::vector<std::size_t>>{{0, 1}, {2}, {3, 4}}));
}

TEST(VoteFilter, HandExamples) {
  using V = AnnotatorVote;
  auto rec = [](std::vector<V> v, PreferenceLabel l) {
    PairRecord r = edge("g", "x", "y");
    r.votes = v;
    r.auto_label = l;
    return r;
  };
  EXPECT_TRUE(vote_filter(rec({V::A, V::A, V::B}, PreferenceLabel::SpeechA)).keep);
  auto nm = vote_filter(rec({V::A, V::B, V::Invalid}, PreferenceLabel::SpeechA));
  EXPECT_FALSE(nm.keep);
  EXPECT_EQ(nm.reason, DiscardReason::NoMajority);
  EXPECT_EQ(vote_filter(rec({V::B, V::B, V::B}, PreferenceLabel::SpeechA)).reason,
            DiscardReason::AutoMismatch);
  EXPECT_EQ(vote_filter(rec({V::A, V::Invalid, V::Invalid}, PreferenceLabel::SpeechA)).reason,
            DiscardReason::Invalidity);
  EXPECT_THROW(vote_filter(rec({V::A, V::A}, PreferenceLabel::SpeechA)), DomainError);
  EXPECT_THROW(vote_filter(edge("g", "x", "y")), DomainError);
}

TEST(VoteFilter, FullTruthTable) {
  const AnnotatorVote all[] = {AnnotatorVote::A, AnnotatorVote::B, AnnotatorVote::Invalid};
  int cases = 0;
  for (auto v0 : all)
    for (auto v1 : all)
      for (auto v2 : all)
        for (auto l : {PreferenceLabel::SpeechA, PreferenceLabel::SpeechB}) {
          PairRecord r = edge("g", "x", "y");
          r.votes = std::vector<AnnotatorVote>{v0, v1, v2};
          r.auto_label = l;
          auto got = vote_filter(r);
          auto want = oracle::vote_outcome({v0, v1, v2}, l);
          EXPECT_EQ(got.keep, !want.has_value());
          if (want) {
            ASSERT_TRUE(got.reason);
            EXPECT_EQ(std::string(to_string(*got.reason)), *want);
          }
          ++cases;
        }
  EXPECT_EQ(cases, 54);
}

TEST(VoteFilter, BatchReportBalances) {
  std::mt19937_64 rng(2);
  std::vector<PairRecord> recs;
  for (int i = 0; i < 300; ++i) {
    PairRecord r = edge("g" + std::to_string(i % 7), "x", "y");
    std::vector<AnnotatorVote> v;
    for (int k = 0; k < 3; ++k) v.push_back(static_cast<AnnotatorVote>(rng() % 3));
    r.votes = v;
    recs.push_back(r);
  }
  auto res = vote_filter_all(recs);
  std::size_t by_reason = 0;
  for (auto [reason, count] : res.report.removed_votes) by_reason += count;
  EXPECT_EQ(res.report.kept + by_reason, 300u);
  EXPECT_EQ(res.kept.size() + res.removed.size(), 300u);
}

TEST(SplitDataset, RatiosByGroup) {
  std::vector<PairRecord> recs;
  for (int g = 0; g < 100; ++g)
    for (int k = 0; k < 3; ++k) recs.push_back(edge("text-" + std::to_string(g), "a", "b"));
  auto a = split_dataset(recs, {0.7, 0.2, 0.1}, 17);
  EXPECT_EQ(a.by_text.size(), 100u);
  EXPECT_NEAR(static_cast<double>(a.group_counts[0]), 70, 1);
  EXPECT_NEAR(static_cast<double>(a.group_counts[1]), 20, 1);
  EXPECT_NEAR(static_cast<double>(a.group_counts[2]), 10, 1);
  apply_split(recs, a);
  std::map<std::string, Split> seen;
  for (const auto& r : recs) {
    ASSERT_TRUE(r.split);
    auto [it, fresh] = seen.emplace(r.text_id, *r.split);
    EXPECT_EQ(it->second, *r.split);
  }
  auto b = split_dataset(recs, {0.7, 0.2, 0.1}, 17);
  EXPECT_EQ(a.by_text, b.by_text);
}

TEST(SplitDataset, DegenerateRatiosAndErrors) {
  std::vector<PairRecord> recs;
  for (int g = 0; g < 10; ++g) recs.push_back(edge("t" + std::to_string(g), "a", "b"));
  auto a = split_dataset(recs, {1, 0, 0}, 5);
  for (const auto& [text, s] : a.by_text) EXPECT_EQ(s, Split::SFT);
  EXPECT_THROW(split_dataset({}, {1, 0, 0}, 5), DomainError);
  EXPECT_THROW(validate(SplitRatios{0.5, 0.5, 0.5}), DomainError);
  EXPECT_THROW(validate(SplitRatios{1.2, -0.2, 0}), DomainError);
  EXPECT_NO_THROW(validate(SplitRatios{0.7, 0.2, 0.1}));
}

TEST(SplitDataset, SeedsChangeAssignment) {
  std::vector<PairRecord> recs;
  for (int g = 0; g < 50; ++g) recs.push_back(edge("t" + std::to_string(g), "a", "b"));
  EXPECT_NE(split_dataset(recs, {0.5, 0.3, 0.2}, 1).by_text,
            split_dataset(recs, {0.5, 0.3, 0.2}, 2).by_text);
}

TEST(JsonLines, RoundTripThousandRecords) {
  std::mt19937_64 rng(1000);
  std::vector<PairRecord> recs;
  for (std::size_t i = 0; i < 1000; ++i) recs.push_back(random_record(rng, i));
  std::stringstream ss;
  write_records(recs, ss);
  auto back = read_records(ss);
  EXPECT_EQ(back.skipped, 0u);
  EXPECT_EQ(back.records, recs);
}

TEST(JsonLines, LenientSkipsCorruptLine) {
  std::mt19937_64 rng(3);
  std::vector<PairRecord> recs;
  for (std::size_t i = 0; i < 1000; ++i) recs.push_back(random_record(rng, i));
  std::stringstream ss;
  write_records(recs, ss);
  std::string text = ss.str();
  std::size_t at = 0;
  for (int line = 0; line < 500; ++line) at = text.find('\n', at) + 1;
  text.insert(at, "{\"text_id\": \"broken\", \"cand_a\": \n");
  std::stringstream lenient(text), strict(text);
  auto r = read_records(lenient, ReadMode::Lenient);
  EXPECT_EQ(r.records.size(), 1000u);
  EXPECT_EQ(r.skipped, 1u);
  try {
    read_records(strict);
    FAIL() << "strict mode accepted a corrupt line";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.line(), 501u);
  }
}

TEST(JsonLines, SkipCountsMissingFields) {
  std::stringstream ss(
      "{\"text_id\":\"t\",\"cand_a\":\"a\",\"cand_b\":\"b\",\"auto_label\":\"A\"}\n"
      "{\"text_id\":\"t\",\"cand_a\":\"a\",\"auto_label\":\"A\"}\n"
      "{\"text_id\":\"t\",\"cand_a\":\"a\",\"cand_b\":\"b\",\"auto_label\":\"C\"}\n");
  auto r = read_records(ss, ReadMode::Lenient);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.skipped, 2u);
  EXPECT_EQ(r.diagnostics.size(), 2u);
}

TEST(JsonLines, EmptyFileAndUnknownFields) {
  std::stringstream empty("");
  EXPECT_TRUE(read_records(empty).records.empty());
  std::string line =
      "{\"text_id\":\"t\",\"cand_a\":\"a\",\"cand_b\":\"b\",\"auto_label\":\"B\","
      "\"dims_a\":[1,2.5],\"dims_b\":[3,4],\"note\":{\"z\":1,\"a\":[true,null]},\"rater\":\"x\"}";
  std::stringstream in(line + "\n");
  auto r = read_records(in);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].extra["rater"], "x");
  std::stringstream out;
  write_records(r.records, out);
  auto again = nlohmann::ordered_json::parse(out.str());
  EXPECT_EQ(again["note"], nlohmann::ordered_json::parse(R"({"z":1,"a":[true,null]})"));
  EXPECT_EQ(again["dims_a"].dump(), "[1,2.5]");
}

TEST(CandidateCorpus, LabelerMatchesPerPairJudgments) {
  std::stringstream in(oracle::candidate_corpus(5, 4, 9));
  std::string line;
  std::size_t pairs = 0;
  while (std::getline(in, line)) {
    auto g = candidate_group_from_json(nlohmann::ordered_json::parse(line));
    auto recs = form_pairs(g.set, 1, make_labeler(g));
    pairs += recs.size();
    for (const auto& r : recs) {
      ASSERT_TRUE(r.votes);
      EXPECT_EQ(r.votes->size(), 3u);
    }
  }
  EXPECT_EQ(pairs, 5u * 6u);
}
