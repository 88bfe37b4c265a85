#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace srm {

/// Raised when a value does not fit the shape its task schema requires
/// (wrong dimension count, out-of-range score, mismatched task/truth).
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an argument lies outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class TaskKind {
  PairwisePreference,  // T1: utterance-level A/B preference
  QualityAssessment,   // T2: seven-aspect MOS assessment
  ScenarioPreference,  // T3: scenario-aware style coherency
  DialoguePreference,  // T4: multi-turn dialogue evaluation
};

inline constexpr std::array<TaskKind, 4> kAllTasks = {
    TaskKind::PairwisePreference, TaskKind::QualityAssessment,
    TaskKind::ScenarioPreference, TaskKind::DialoguePreference};

/// True for the A/B tasks (T1, T3, T4).
constexpr bool is_pairwise(TaskKind task) {
  return task != TaskKind::QualityAssessment;
}

/// Short code used on the command line and in JSONL ("t1".."t4").
std::string_view task_code(TaskKind task);
/// Accepts "t1".."t4" (case-insensitive). Throws SchemaError otherwise.
TaskKind parse_task_code(std::string_view code);

struct DimensionSchema {
  TaskKind task;
  std::vector<std::string> dimensions;
  double score_min;
  double score_max;
  bool integer_only;

  std::size_t count() const { return dimensions.size(); }
  bool in_range(double v) const { return v >= score_min && v <= score_max; }
};

/// The canonical schema for a task. References are stable for program life.
const DimensionSchema& schema_for(TaskKind task);

struct DimScores {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const DimScores&) const = default;
};

/// Throws SchemaError if `scores` has the wrong length, a non-finite value,
/// an out-of-range value, or (T2) a non-integer value.
void validate(const DimScores& scores, const DimensionSchema& schema);

enum class PreferenceLabel { SpeechA, SpeechB };

/// "A" / "B".
std::string_view label_code(PreferenceLabel label);
/// Accepts "A" / "B". Throws SchemaError otherwise.
PreferenceLabel parse_label_code(std::string_view code);

/// Seven QualiSpeech-style aspects, each an integer in [1, 5].
struct MosVector {
  static constexpr std::size_t kAspects = 7;
  static constexpr int kMin = 1;
  static constexpr int kMax = 5;
  /// Serialization keys in their fixed order.
  static constexpr std::array<std::string_view, kAspects> kKeys = {
      "noise",       "distortion",       "speed",  "continuity",
      "naturalness", "listening_effort", "overall"};

  int noise = kMin;
  int distortion = kMin;
  int speed = kMin;
  int continuity = kMin;
  int naturalness = kMin;
  int listening_effort = kMin;
  int overall = kMin;

  std::array<int, kAspects> values() const {
    return {noise, distortion, speed, continuity, naturalness, listening_effort,
            overall};
  }
  static MosVector from_values(const std::array<int, kAspects>& v);

  bool operator==(const MosVector&) const = default;
};

void validate(const MosVector& mos);

struct PairwiseTruth {
  DimScores a_star;
  DimScores b_star;
  PreferenceLabel label = PreferenceLabel::SpeechA;

  bool operator==(const PairwiseTruth&) const = default;
};

struct GroundTruth {
  TaskKind task = TaskKind::PairwisePreference;
  std::optional<PairwiseTruth> pairwise;
  std::optional<MosVector> mos;

  static GroundTruth make_pairwise(TaskKind task, DimScores a_star,
                                   DimScores b_star, PreferenceLabel label);
  static GroundTruth make_mos(MosVector mos);

  bool operator==(const GroundTruth&) const = default;
};

/// Exactly one of pairwise/mos, matching the task family, with valid values.
void validate(const GroundTruth& truth);

struct Candidate {
  std::string id;
  std::string source;  // e.g. a synthesizer tag or "gt"
};

/// Candidates synthesized for one target text, optionally including the
/// ground-truth recording.
struct CandidateSet {
  std::string text_id;
  std::vector<Candidate> candidates;
  bool includes_ground_truth = false;
};

/// Throws SchemaError on duplicate candidate ids.
void validate(const CandidateSet& set);

/// Sum of all dimension values after validating against `schema`.
double total_score(const DimScores& scores, const DimensionSchema& schema);

/// SpeechA iff total_a > total_b; SpeechB otherwise, ties included.
/// Throws DomainError on non-finite input.
PreferenceLabel label_from_totals(double total_a, double total_b);

/// Totals that would hit the tie branch of label_from_totals.
inline bool is_tie(double total_a, double total_b) { return total_a == total_b; }

}  // namespace srm
