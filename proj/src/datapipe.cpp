#include "srm/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace srm {

using json = nlohmann::ordered_json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Unbiased draw in [0, bound).
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

AnnotatorVote flip(AnnotatorVote v) {
  switch (v) {
    case AnnotatorVote::A: return AnnotatorVote::B;
    case AnnotatorVote::B: return AnnotatorVote::A;
    case AnnotatorVote::Invalid: return AnnotatorVote::Invalid;
  }
  return v;
}

double sum(const DimScores& s) {
  return std::accumulate(s.values.begin(), s.values.end(), 0.0);
}

AnnotatorVote parse_vote(std::string_view s) {
  if (s == "A") return AnnotatorVote::A;
  if (s == "B") return AnnotatorVote::B;
  if (s == "invalid") return AnnotatorVote::Invalid;
  throw std::invalid_argument("vote must be \"A\", \"B\" or \"invalid\"");
}

Split parse_split(std::string_view s) {
  if (s == "sft") return Split::SFT;
  if (s == "rl") return Split::RL;
  if (s == "bench") return Split::Bench;
  throw std::invalid_argument("split must be \"sft\", \"rl\" or \"bench\"");
}

DimScores dims_from_json(const json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + " must be an array");
  DimScores s;
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument(std::string(field) + " holds a non-number");
    s.values.push_back(v.get<double>());
  }
  return s;
}

json dims_to_json(const DimScores& s) {
  json arr = json::array();
  for (double v : s.values) arr.push_back(number_json(v));
  return arr;
}

std::vector<AnnotatorVote> votes_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("votes must be an array");
  std::vector<AnnotatorVote> votes;
  for (const auto& v : j) {
    if (!v.is_string()) throw std::invalid_argument("votes must be strings");
    votes.push_back(parse_vote(v.get<std::string>()));
  }
  return votes;
}

json votes_to_json(const std::vector<AnnotatorVote>& votes) {
  json arr = json::array();
  for (auto v : votes) arr.push_back(std::string(to_string(v)));
  return arr;
}

const std::string& require_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string()) {
    throw std::invalid_argument(std::string("missing string field '") + field + "'");
  }
  return it->get_ref<const std::string&>();
}

}  // namespace

std::string_view to_string(AnnotatorVote v) {
  switch (v) {
    case AnnotatorVote::A: return "A";
    case AnnotatorVote::B: return "B";
    case AnnotatorVote::Invalid: return "invalid";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::SFT: return "sft";
    case Split::RL: return "rl";
    case Split::Bench: return "bench";
  }
  return "?";
}

std::string_view to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::Invalidity: return "invalidity";
    case DiscardReason::NoMajority: return "no_majority";
    case DiscardReason::AutoMismatch: return "auto_mismatch";
  }
  return "?";
}

json number_json(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9e15) {
    return json(static_cast<long long>(v));
  }
  return json(v);
}

// --- pair formation --------------------------------------------------------

std::uint64_t pair_order_seed(std::uint64_t seed, std::string_view text_id,
                              std::size_t i, std::size_t j) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(fnv1a(text_id)));
  return splitmix64(h ^ (static_cast<std::uint64_t>(i) << 32 | static_cast<std::uint64_t>(j)));
}

std::vector<PairRecord> form_pairs(const CandidateSet& cands, std::uint64_t seed,
                                   const PairLabeler& labeler) {
  validate(cands);
  const auto& c = cands.candidates;
  if (c.size() < 2) {
    throw DomainError("form_pairs: text group '" + cands.text_id +
                      "' needs at least two candidates");
  }
  std::vector<PairRecord> out;
  out.reserve(c.size() * (c.size() - 1) / 2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      PairAnnotation ann = labeler(c[i], c[j]);
      PairRecord r;
      r.text_id = cands.text_id;
      r.order_seed = pair_order_seed(seed, cands.text_id, i, j);
      bool swap = (r.order_seed & 1u) != 0;
      r.cand_a = swap ? c[j].id : c[i].id;
      r.cand_b = swap ? c[i].id : c[j].id;
      DimScores sa = swap ? ann.scores_second : ann.scores_first;
      DimScores sb = swap ? ann.scores_first : ann.scores_second;
      double ta = sum(sa);
      double tb = sum(sb);
      r.auto_label = label_from_totals(ta, tb);
      r.tie = is_tie(ta, tb);
      r.dim_scores_a = std::move(sa);
      r.dim_scores_b = std::move(sb);
      if (ann.votes) {
        r.votes = *ann.votes;
        if (swap) {
          for (auto& v : *r.votes) v = flip(v);
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

// --- vote filter -----------------------------------------------------------

VoteDecision vote_filter(const PairRecord& record) {
  if (!record.votes || record.votes->size() != 3) {
    throw DomainError("vote_filter: pair (" + record.cand_a + ", " + record.cand_b +
                      ") needs exactly three votes");
  }
  int a = 0;
  int b = 0;
  int invalid = 0;
  for (auto v : *record.votes) {
    a += v == AnnotatorVote::A;
    b += v == AnnotatorVote::B;
    invalid += v == AnnotatorVote::Invalid;
  }
  if (3 - invalid < 2) return {false, DiscardReason::Invalidity};
  std::optional<PreferenceLabel> majority;
  if (a >= 2) majority = PreferenceLabel::SpeechA;
  if (b >= 2) majority = PreferenceLabel::SpeechB;
  if (!majority) return {false, DiscardReason::NoMajority};
  if (*majority != record.auto_label) return {false, DiscardReason::AutoMismatch};
  return {true, std::nullopt};
}

std::size_t FilterReport::removed() const {
  std::size_t n = removed_cycles;
  for (const auto& [reason, count] : removed_votes) n += count;
  return n;
}

json FilterReport::to_json() const {
  json j;
  j["input"] = input;
  j["kept"] = kept;
  j["removed_cycles"] = removed_cycles;
  json votes = json::object();
  for (auto r : {DiscardReason::Invalidity, DiscardReason::NoMajority,
                 DiscardReason::AutoMismatch}) {
    auto it = removed_votes.find(r);
    votes[std::string(to_string(r))] = it == removed_votes.end() ? 0 : it->second;
  }
  j["removed_votes"] = votes;
  json groups = json::array();
  for (const auto& g : per_group_detail) {
    json d;
    d["text_id"] = g.text_id;
    d["input"] = g.input;
    d["kept"] = g.kept;
    d["removed"] = g.removed;
    d["cyclic_component_sizes"] = g.cyclic_component_sizes;
    groups.push_back(std::move(d));
  }
  j["per_group_detail"] = groups;
  return j;
}

FilterResult vote_filter_all(const std::vector<PairRecord>& pairs) {
  FilterResult result;
  result.report.input = pairs.size();
  for (const auto& r : pairs) {
    auto d = vote_filter(r);
    if (d.keep) {
      result.kept.push_back(r);
    } else {
      result.removed.push_back(r);
      ++result.report.removed_votes[*d.reason];
    }
  }
  result.report.kept = result.kept.size();
  return result;
}

// --- cycle filter ----------------------------------------------------------

std::vector<std::vector<std::size_t>> strongly_connected_components(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [u, v] : edges) adj[u].push_back(v);

  // Iterative Tarjan.
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnvisited);
  std::vector<std::size_t> low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> components;
  std::size_t counter = 0;

  struct Frame {
    std::size_t node;
    std::size_t next_edge;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.next_edge < adj[f.node].size()) {
        std::size_t w = adj[f.node][f.next_edge++];
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.node] = std::min(low[f.node], index[w]);
        }
        continue;
      }
      std::size_t v = f.node;
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
      }
      call.pop_back();
      if (!call.empty()) {
        std::size_t parent = call.back().node;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }
  return components;
}

FilterResult filter_cycles(const std::vector<PairRecord>& pairs) {
  // Group indices by text_id in order of first appearance.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(pairs[i].text_id);
    if (fresh) order.push_back(pairs[i].text_id);
    it->second.push_back(i);
  }

  std::vector<bool> cyclic(pairs.size(), false);
  FilterResult result;
  result.report.input = pairs.size();
  for (const auto& text_id : order) {
    const auto& members = groups[text_id];
    std::unordered_map<std::string, std::size_t> node_of;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    auto node = [&](const std::string& id) {
      auto [it, fresh] = node_of.try_emplace(id, node_of.size());
      return it->second;
    };
    for (std::size_t i : members) {
      edges.emplace_back(node(pairs[i].winner()), node(pairs[i].loser()));
    }
    auto comps = strongly_connected_components(node_of.size(), edges);
    std::vector<std::size_t> comp_of(node_of.size());
    GroupDetail detail;
    detail.text_id = text_id;
    detail.input = members.size();
    for (std::size_t c = 0; c < comps.size(); ++c) {
      for (std::size_t v : comps[c]) comp_of[v] = c;
      if (comps[c].size() >= 2) detail.cyclic_component_sizes.push_back(comps[c].size());
    }
    std::sort(detail.cyclic_component_sizes.begin(), detail.cyclic_component_sizes.end());
    for (std::size_t k = 0; k < members.size(); ++k) {
      auto [u, v] = edges[k];
      if (comp_of[u] == comp_of[v] && comps[comp_of[u]].size() >= 2) {
        cyclic[members[k]] = true;
        ++detail.removed;
      }
    }
    detail.kept = detail.input - detail.removed;
    result.report.per_group_detail.push_back(std::move(detail));
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    (cyclic[i] ? result.removed : result.kept).push_back(pairs[i]);
  }
  result.report.kept = result.kept.size();
  result.report.removed_cycles = result.removed.size();
  return result;
}

// --- splits ----------------------------------------------------------------

void validate(const SplitRatios& r) {
  for (double v : {r.sft, r.rl, r.bench}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("split ratios must be finite and non-negative");
    }
  }
  if (std::fabs(r.sft + r.rl + r.bench - 1.0) > 1e-9) {
    throw DomainError("split ratios must sum to 1");
  }
}

SplitAssignment split_dataset(const std::vector<PairRecord>& records,
                              const SplitRatios& ratios, std::uint64_t seed) {
  validate(ratios);
  if (records.empty()) throw DomainError("split_dataset: no records");
  std::set<std::string> distinct;
  for (const auto& r : records) distinct.insert(r.text_id);
  std::vector<std::string> ids(distinct.begin(), distinct.end());

  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[bounded(rng, i)]);
  }

  // Largest-remainder allocation of whole groups.
  const std::size_t n = ids.size();
  const std::array<double, 3> r{ratios.sft, ratios.rl, ratios.bench};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    double exact = r[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::array<std::size_t, 3> by_remainder{0, 1, 2};
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
    if (r[by_remainder[k]] > 0.0) {
      ++counts[by_remainder[k]];
      ++assigned;
    }
  }

  SplitAssignment out;
  out.group_counts = counts;
  std::size_t pos = 0;
  const std::array<Split, 3> splits{Split::SFT, Split::RL, Split::Bench};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < counts[k]; ++c) out.by_text[ids[pos++]] = splits[k];
  }
  return out;
}

void apply_split(std::vector<PairRecord>& records, const SplitAssignment& a) {
  for (auto& r : records) {
    auto it = a.by_text.find(r.text_id);
    if (it == a.by_text.end()) {
      throw DomainError("apply_split: text group '" + r.text_id + "' was not assigned");
    }
    r.split = it->second;
  }
}

// --- JSON ------------------------------------------------------------------

namespace {

const std::set<std::string>& known_record_fields() {
  static const std::set<std::string> fields = {
      "text_id", "cand_a", "cand_b", "auto_label", "dims_a",
      "dims_b",  "votes",  "split",  "order_seed", "tie"};
  return fields;
}

}  // namespace

json to_json(const PairRecord& r) {
  json j;
  j["text_id"] = r.text_id;
  j["cand_a"] = r.cand_a;
  j["cand_b"] = r.cand_b;
  j["auto_label"] = std::string(label_code(r.auto_label));
  if (r.dim_scores_a) j["dims_a"] = dims_to_json(*r.dim_scores_a);
  if (r.dim_scores_b) j["dims_b"] = dims_to_json(*r.dim_scores_b);
  if (r.votes) j["votes"] = votes_to_json(*r.votes);
  if (r.split) j["split"] = std::string(to_string(*r.split));
  j["order_seed"] = r.order_seed;
  if (r.tie) j["tie"] = true;
  for (const auto& [key, value] : r.extra.items()) j[key] = value;
  return j;
}

PairRecord pair_record_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  PairRecord r;
  r.text_id = require_string(j, "text_id");
  r.cand_a = require_string(j, "cand_a");
  r.cand_b = require_string(j, "cand_b");
  if (r.cand_a == r.cand_b) throw std::invalid_argument("cand_a equals cand_b");
  try {
    r.auto_label = parse_label_code(require_string(j, "auto_label"));
  } catch (const SchemaError& e) {
    throw std::invalid_argument(e.what());
  }
  if (auto it = j.find("dims_a"); it != j.end()) r.dim_scores_a = dims_from_json(*it, "dims_a");
  if (auto it = j.find("dims_b"); it != j.end()) r.dim_scores_b = dims_from_json(*it, "dims_b");
  if (auto it = j.find("votes"); it != j.end()) r.votes = votes_from_json(*it);
  if (auto it = j.find("split"); it != j.end()) {
    if (!it->is_string()) throw std::invalid_argument("split must be a string");
    r.split = parse_split(it->get<std::string>());
  }
  if (auto it = j.find("order_seed"); it != j.end()) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
      throw std::invalid_argument("order_seed must be a non-negative integer");
    }
    r.order_seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("tie"); it != j.end()) {
    if (!it->is_boolean()) throw std::invalid_argument("tie must be a boolean");
    r.tie = it->get<bool>();
  }
  for (const auto& [key, value] : j.items()) {
    if (!known_record_fields().count(key)) r.extra[key] = value;
  }
  return r;
}

ReadResult read_records(std::istream& in, ReadMode mode) {
  ReadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.records.push_back(pair_record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      if (mode == ReadMode::Strict) throw RecordError(line_no, e.what());
      ++result.skipped;
      result.diagnostics.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return result;
}

ReadResult read_records(const std::filesystem::path& path, ReadMode mode) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_records(in, mode);
}

void write_records(const std::vector<PairRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

void write_records(const std::vector<PairRecord>& records,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_records(records, out);
}

// --- candidate groups ------------------------------------------------------

CandidateGroupInput candidate_group_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("candidate group must be an object");
  CandidateGroupInput g;
  g.set.text_id = require_string(j, "text_id");
  if (auto it = j.find("includes_ground_truth"); it != j.end()) {
    if (!it->is_boolean()) throw std::invalid_argument("includes_ground_truth must be a boolean");
    g.set.includes_ground_truth = it->get<bool>();
  }
  auto cands = j.find("candidates");
  if (cands == j.end() || !cands->is_array()) {
    throw std::invalid_argument("missing array field 'candidates'");
  }
  for (const auto& c : *cands) {
    Candidate cand;
    cand.id = require_string(c, "id");
    if (auto it = c.find("source"); it != c.end() && it->is_string()) {
      cand.source = it->get<std::string>();
    }
    if (auto it = c.find("dims"); it != c.end()) {
      g.candidate_dims[cand.id] = dims_from_json(*it, "dims");
    }
    g.set.candidates.push_back(std::move(cand));
  }
  try {
    validate(g.set);
  } catch (const SchemaError& e) {
    throw std::invalid_argument(e.what());
  }
  if (auto js = j.find("judgments"); js != j.end()) {
    if (!js->is_array()) throw std::invalid_argument("judgments must be an array");
    for (const auto& x : *js) {
      CandidateGroupInput::Judgment jd;
      jd.a = require_string(x, "a");
      jd.b = require_string(x, "b");
      jd.dims_a = dims_from_json(x.value("dims_a", json()), "dims_a");
      jd.dims_b = dims_from_json(x.value("dims_b", json()), "dims_b");
      if (auto v = x.find("votes"); v != x.end()) jd.votes = votes_from_json(*v);
      g.judgments.push_back(std::move(jd));
    }
  }
  return g;
}

json to_json(const CandidateGroupInput& g) {
  json j;
  j["text_id"] = g.set.text_id;
  j["includes_ground_truth"] = g.set.includes_ground_truth;
  json cands = json::array();
  for (const auto& c : g.set.candidates) {
    json x;
    x["id"] = c.id;
    x["source"] = c.source;
    if (auto it = g.candidate_dims.find(c.id); it != g.candidate_dims.end()) {
      x["dims"] = dims_to_json(it->second);
    }
    cands.push_back(std::move(x));
  }
  j["candidates"] = cands;
  if (!g.judgments.empty()) {
    json js = json::array();
    for (const auto& jd : g.judgments) {
      json x;
      x["a"] = jd.a;
      x["b"] = jd.b;
      x["dims_a"] = dims_to_json(jd.dims_a);
      x["dims_b"] = dims_to_json(jd.dims_b);
      if (jd.votes) x["votes"] = votes_to_json(*jd.votes);
      js.push_back(std::move(x));
    }
    j["judgments"] = js;
  }
  return j;
}

PairLabeler make_labeler(const CandidateGroupInput& g) {
  return [&g](const Candidate& first, const Candidate& second) -> PairAnnotation {
    for (const auto& jd : g.judgments) {
      if (jd.a == first.id && jd.b == second.id) {
        return {jd.dims_a, jd.dims_b, jd.votes};
      }
      if (jd.a == second.id && jd.b == first.id) {
        std::optional<std::vector<AnnotatorVote>> votes;
        if (jd.votes) {
          votes = *jd.votes;
          for (auto& v : *votes) v = flip(v);
        }
        return {jd.dims_b, jd.dims_a, votes};
      }
    }
    auto fa = g.candidate_dims.find(first.id);
    auto fb = g.candidate_dims.find(second.id);
    if (fa == g.candidate_dims.end() || fb == g.candidate_dims.end()) {
      throw DomainError("no scores for pair (" + first.id + ", " + second.id +
                        ") in text group '" + g.set.text_id + "'");
    }
    return {fa->second, fb->second, std::nullopt};
  };
}

}  // namespace srm
