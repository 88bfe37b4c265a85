#pragma once

// Preference-pair construction and cleaning: pair formation with randomized
// presentation order, cyclic-conflict removal, three-annotator vote
// filtering, leakage-free group splits and JSON Lines persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "srm/schema.hpp"

namespace srm {

enum class AnnotatorVote { A, B, Invalid };
enum class Split { SFT, RL, Bench };

std::string_view to_string(AnnotatorVote v);  // "A", "B", "invalid"
std::string_view to_string(Split s);          // "sft", "rl", "bench"

struct PairRecord {
  std::string text_id;
  std::string cand_a;
  std::string cand_b;
  PreferenceLabel auto_label = PreferenceLabel::SpeechA;
  std::optional<DimScores> dim_scores_a;
  std::optional<DimScores> dim_scores_b;
  std::optional<std::vector<AnnotatorVote>> votes;
  std::optional<Split> split;
  std::uint64_t order_seed = 0;
  bool tie = false;  // auto label came from equal totals
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  const std::string& winner() const {
    return auto_label == PreferenceLabel::SpeechA ? cand_a : cand_b;
  }
  const std::string& loser() const {
    return auto_label == PreferenceLabel::SpeechA ? cand_b : cand_a;
  }

  bool operator==(const PairRecord&) const = default;
};

/// Dimension scores (and optional votes) for one candidate pair, oriented as
/// (first, second) in the arguments the labeler received.
struct PairAnnotation {
  DimScores scores_first;
  DimScores scores_second;
  std::optional<std::vector<AnnotatorVote>> votes;
};

using PairLabeler =
    std::function<PairAnnotation(const Candidate& first, const Candidate& second)>;

/// Deterministic per-pair seed; bit 0 decides whether the pair is swapped.
std::uint64_t pair_order_seed(std::uint64_t seed, std::string_view text_id,
                              std::size_t i, std::size_t j);

/// All C(n,2) unordered pairs of `cands`, each once, with the (A, B)
/// presentation order randomized per pair. The labeler sees the pair in
/// canonical (i < j) order; its scores and votes are re-oriented when the
/// pair is swapped. auto_label follows label_from_totals on the totals.
/// Throws DomainError for fewer than two candidates.
std::vector<PairRecord> form_pairs(const CandidateSet& cands, std::uint64_t seed,
                                   const PairLabeler& labeler);

enum class DiscardReason { Invalidity, NoMajority, AutoMismatch };
std::string_view to_string(DiscardReason r);

struct VoteDecision {
  bool keep = false;
  std::optional<DiscardReason> reason;
};

/// Keeps a pair iff at least two votes are not Invalid, at least two votes
/// agree on A or on B, and that majority equals auto_label. Reports the first
/// failing criterion in that order. Throws DomainError unless exactly three
/// votes are present.
VoteDecision vote_filter(const PairRecord& record);

struct GroupDetail {
  std::string text_id;
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t removed = 0;
  std::vector<std::size_t> cyclic_component_sizes;
};

struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t removed_cycles = 0;
  std::map<DiscardReason, std::size_t> removed_votes;
  std::vector<GroupDetail> per_group_detail;

  std::size_t removed() const;
  nlohmann::ordered_json to_json() const;
};

struct FilterResult {
  std::vector<PairRecord> kept;
  std::vector<PairRecord> removed;
  FilterReport report;
};

/// Per text group, drops every pair whose winner and loser share a strongly
/// connected component of the winner->loser digraph (i.e. the edge lies on
/// a directed cycle). Input order is preserved in both outputs.
FilterResult filter_cycles(const std::vector<PairRecord>& pairs);

/// Strongly connected components of a digraph on nodes [0, n).
std::vector<std::vector<std::size_t>> strongly_connected_components(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

/// vote_filter over a batch; records without votes are an error.
FilterResult vote_filter_all(const std::vector<PairRecord>& pairs);

struct SplitRatios {
  double sft = 0.0;
  double rl = 0.0;
  double bench = 0.0;
};

/// Non-negative, finite and summing to 1 within 1e-9; DomainError otherwise.
void validate(const SplitRatios& r);

struct SplitAssignment {
  std::map<std::string, Split> by_text;
  std::array<std::size_t, 3> group_counts{};  // sft, rl, bench
};

/// Assigns whole text groups to splits: sorted distinct text ids are
/// shuffled with `seed`, then cut by largest-remainder group counts.
/// Throws DomainError on empty input.
SplitAssignment split_dataset(const std::vector<PairRecord>& records,
                              const SplitRatios& ratios, std::uint64_t seed);

/// Sets `split` on every record from the assignment.
void apply_split(std::vector<PairRecord>& records, const SplitAssignment& a);

// --- JSON Lines ------------------------------------------------------------

enum class ReadMode { Strict, Lenient };

class RecordError : public std::runtime_error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ReadResult {
  std::vector<PairRecord> records;
  std::size_t skipped = 0;
  std::vector<std::string> diagnostics;
};

nlohmann::ordered_json to_json(const PairRecord& r);
/// Throws std::invalid_argument describing the first bad field.
PairRecord pair_record_from_json(const nlohmann::ordered_json& j);

/// Blank lines are ignored. Strict mode throws RecordError on the first bad
/// line; lenient mode skips and counts it.
ReadResult read_records(std::istream& in, ReadMode mode = ReadMode::Strict);
ReadResult read_records(const std::filesystem::path& path,
                        ReadMode mode = ReadMode::Strict);
void write_records(const std::vector<PairRecord>& records, std::ostream& out);
void write_records(const std::vector<PairRecord>& records,
                   const std::filesystem::path& path);

/// Candidate-set input for pair formation: one text group per line with its
/// candidates and either per-candidate "dims" or per-pair "judgments".
struct CandidateGroupInput {
  CandidateSet set;
  std::map<std::string, DimScores> candidate_dims;
  struct Judgment {
    std::string a;
    std::string b;
    DimScores dims_a;
    DimScores dims_b;
    std::optional<std::vector<AnnotatorVote>> votes;
  };
  std::vector<Judgment> judgments;
};

CandidateGroupInput candidate_group_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const CandidateGroupInput& g);

/// Labeler that prefers a matching per-pair judgment and falls back to
/// per-candidate scores. Throws DomainError when neither is available.
PairLabeler make_labeler(const CandidateGroupInput& g);

/// Writes a number as an integer literal when it is integral.
nlohmann::ordered_json number_json(double v);

}  // namespace srm
