#pragma once

// Strict parser and canonical renderer for the two-part judgment format
//
//   <think> reasoning </think><answer> decision </answer>
//
// Pairwise tasks (T1/T3/T4) carry per-candidate dimension lines, stated
// totals, a comparison summary and an exact "Speech A is better" /
// "Speech B is better" answer. T2 carries free-form aspect descriptions and a
// fixed-order "key=value;" answer with seven integer aspects.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "srm/schema.hpp"

namespace srm {

struct CandidateJudgment {
  DimScores scores;
  std::vector<std::string> explanations;  // one per dimension, may be empty
  double total = 0.0;                     // as stated in the reasoning

  bool operator==(const CandidateJudgment&) const = default;
};

struct ParsedJudgment {
  TaskKind task = TaskKind::PairwisePreference;
  std::string think_text;  // trimmed body of the <think> block
  std::optional<CandidateJudgment> candidate_a;
  std::optional<CandidateJudgment> candidate_b;
  std::optional<std::string> comparison_summary;
  std::optional<PreferenceLabel> answer_pref;
  std::optional<MosVector> answer_mos;
  std::optional<std::string> aspect_descriptions;  // T2 only

  /// Pairwise judgment whose stated totals are equal.
  bool tie_warning() const {
    return candidate_a && candidate_b && candidate_a->total == candidate_b->total;
  }

  bool operator==(const ParsedJudgment&) const = default;
};

enum class FormatErrorKind {
  MissingThink,
  MissingAnswer,
  ExtraContent,
  BadDimensionLine,
  ScoreOutOfRange,
  TotalMismatch,
  BadAnswerString,
  MissingAspectKey,
  NonIntegerAspect,
  DuplicateBlock,
};

std::string_view to_string(FormatErrorKind kind);

struct FormatError {
  FormatErrorKind kind;
  std::size_t location;  // byte offset into the raw text
  std::string detail;
};

using ParseResult = std::variant<ParsedJudgment, FormatError>;
using AnswerResult = std::variant<PreferenceLabel, MosVector, FormatError>;

/// Parses untrusted model output. Never throws on any input; runs in time
/// linear in the input length. On failure returns the first defect in
/// document order.
ParseResult parse_judgment(std::string_view raw, TaskKind task);

/// Validates the envelope and the answer block only, skipping the reasoning.
/// Agrees with parse_judgment whenever that succeeds, and reports the same
/// error kind whenever the first defect is in the envelope or answer.
AnswerResult extract_answer(std::string_view raw, TaskKind task);

struct RenderedJudgment {
  std::string text;
  bool tie_warning = false;
};

/// Emits the canonical template text for `j`. Pairwise reasoning is rebuilt
/// from the structured fields; T2 reasoning is `think_text` verbatim.
/// Throws SchemaError if `j` violates the judgment invariants.
RenderedJudgment render_judgment(const ParsedJudgment& j);

/// Canonical reasoning body for a pairwise judgment, as render_judgment
/// writes it between the think tags.
std::string render_pairwise_think(const ParsedJudgment& j);

/// Shortest decimal form that parses back to the same double ("8", "7.5").
std::string format_score(double v);

/// Builds a complete pairwise judgment (think_text filled canonically) from
/// scores, explanations and summary. Totals are the sums of the scores.
ParsedJudgment make_pairwise_judgment(TaskKind task, DimScores a, DimScores b,
                                      PreferenceLabel answer,
                                      std::vector<std::string> explanations_a,
                                      std::vector<std::string> explanations_b,
                                      std::string summary);

/// Builds a T2 judgment whose reasoning carries the given aspect description
/// lines and a free-text quality paragraph.
ParsedJudgment make_mos_judgment(MosVector answer, std::string aspect_descriptions,
                                 std::string quality_paragraph);

/// Exact answer literal for a pairwise preference.
std::string_view answer_literal(PreferenceLabel label);

}  // namespace srm
