#include "srm/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace srm {

namespace {

DimensionSchema make_schema(TaskKind task, std::vector<std::string> dims,
                            double lo, double hi, bool integer_only) {
  return DimensionSchema{task, std::move(dims), lo, hi, integer_only};
}

const std::array<DimensionSchema, 4>& all_schemas() {
  static const std::array<DimensionSchema, 4> schemas = {
      make_schema(TaskKind::PairwisePreference,
                  {"Text Fidelity & Intelligibility",
                   "Speaker Similarity to Prompt Speech",
                   "Prosody & Expressiveness Appropriateness",
                   "Naturalness & Audio Quality"},
                  0.0, 10.0, false),
      make_schema(TaskKind::QualityAssessment,
                  {"Noise", "Distortion", "Speed (speaking rate)",
                   "Continuity (smoothness / discontinuity)", "Naturalness",
                   "Listening effort", "Overall quality"},
                  1.0, 5.0, true),
      make_schema(TaskKind::ScenarioPreference,
                  {"Text Fidelity & Intelligibility", "Scenario Style Match",
                   "Naturalness & Audio Quality"},
                  0.0, 10.0, false),
      make_schema(TaskKind::DialoguePreference,
                  {"Intent Matching & Dialogue Act", "Speaker Consistency",
                   "Contextual Consistency", "Emotion & Prosody Match",
                   "Overall Naturalness"},
                  0.0, 10.0, false),
  };
  return schemas;
}

}  // namespace

std::string_view task_code(TaskKind task) {
  switch (task) {
    case TaskKind::PairwisePreference: return "t1";
    case TaskKind::QualityAssessment: return "t2";
    case TaskKind::ScenarioPreference: return "t3";
    case TaskKind::DialoguePreference: return "t4";
  }
  return "t?";
}

TaskKind parse_task_code(std::string_view code) {
  std::string lower(code);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (TaskKind t : kAllTasks) {
    if (lower == task_code(t)) return t;
  }
  throw SchemaError("unknown task code '" + std::string(code) +
                    "' (expected t1, t2, t3 or t4)");
}

const DimensionSchema& schema_for(TaskKind task) {
  return all_schemas()[static_cast<std::size_t>(task)];
}

void validate(const DimScores& scores, const DimensionSchema& schema) {
  if (scores.size() != schema.count()) {
    throw SchemaError("expected " + std::to_string(schema.count()) +
                      " dimension scores for " +
                      std::string(task_code(schema.task)) + ", got " +
                      std::to_string(scores.size()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double v = scores.values[i];
    if (!std::isfinite(v) || !schema.in_range(v)) {
      throw SchemaError("score for '" + schema.dimensions[i] +
                        "' out of range: " + std::to_string(v));
    }
    if (schema.integer_only && v != std::floor(v)) {
      throw SchemaError("score for '" + schema.dimensions[i] +
                        "' must be an integer");
    }
  }
}

std::string_view label_code(PreferenceLabel label) {
  return label == PreferenceLabel::SpeechA ? "A" : "B";
}

PreferenceLabel parse_label_code(std::string_view code) {
  if (code == "A") return PreferenceLabel::SpeechA;
  if (code == "B") return PreferenceLabel::SpeechB;
  throw SchemaError("preference label must be \"A\" or \"B\", got '" +
                    std::string(code) + "'");
}

MosVector MosVector::from_values(const std::array<int, kAspects>& v) {
  MosVector m;
  m.noise = v[0];
  m.distortion = v[1];
  m.speed = v[2];
  m.continuity = v[3];
  m.naturalness = v[4];
  m.listening_effort = v[5];
  m.overall = v[6];
  return m;
}

void validate(const MosVector& mos) {
  auto values = mos.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] < MosVector::kMin || values[k] > MosVector::kMax) {
      throw SchemaError("MOS aspect '" + std::string(MosVector::kKeys[k]) +
                        "' out of range: " + std::to_string(values[k]));
    }
  }
}

GroundTruth GroundTruth::make_pairwise(TaskKind task, DimScores a_star,
                                       DimScores b_star,
                                       PreferenceLabel label) {
  GroundTruth t;
  t.task = task;
  t.pairwise = PairwiseTruth{std::move(a_star), std::move(b_star), label};
  validate(t);
  return t;
}

GroundTruth GroundTruth::make_mos(MosVector mos) {
  GroundTruth t;
  t.task = TaskKind::QualityAssessment;
  t.mos = mos;
  validate(t);
  return t;
}

void validate(const GroundTruth& truth) {
  if (truth.pairwise.has_value() == truth.mos.has_value()) {
    throw SchemaError("ground truth must carry exactly one of pairwise/mos");
  }
  if (is_pairwise(truth.task)) {
    if (!truth.pairwise) {
      throw SchemaError("pairwise task " + std::string(task_code(truth.task)) +
                        " needs a pairwise ground truth");
    }
    const auto& schema = schema_for(truth.task);
    validate(truth.pairwise->a_star, schema);
    validate(truth.pairwise->b_star, schema);
  } else {
    if (!truth.mos) throw SchemaError("t2 needs a MOS ground truth");
    validate(*truth.mos);
  }
}

void validate(const CandidateSet& set) {
  std::set<std::string_view> seen;
  for (const auto& c : set.candidates) {
    if (!seen.insert(c.id).second) {
      throw SchemaError("duplicate candidate id '" + c.id + "' in text group '" +
                        set.text_id + "'");
    }
  }
}

double total_score(const DimScores& scores, const DimensionSchema& schema) {
  validate(scores, schema);
  double total = 0.0;
  for (double v : scores.values) total += v;
  return total;
}

PreferenceLabel label_from_totals(double total_a, double total_b) {
  if (!std::isfinite(total_a) || !std::isfinite(total_b)) {
    throw DomainError("label_from_totals: totals must be finite");
  }
  return total_a > total_b ? PreferenceLabel::SpeechA : PreferenceLabel::SpeechB;
}

}  // namespace srm
