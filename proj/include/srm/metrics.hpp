#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "srm/parser.hpp"
#include "srm/rewards.hpp"
#include "srm/schema.hpp"

namespace srm {

/// Pearson r is undefined when either input has zero variance.
class UndefinedCorrelation : public DomainError {
 public:
  using DomainError::DomainError;
};

/// matches / total. Throws DomainError on empty or mismatched inputs.
double accuracy(std::span<const PreferenceLabel> preds,
                std::span<const PreferenceLabel> truths);

/// Sample Pearson correlation. Throws DomainError for fewer than two points,
/// mismatched lengths or non-finite values, UndefinedCorrelation when either
/// side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Round half up, then clamp into the range. Throws DomainError on a
/// non-finite score.
int bin_mos(double score, MosRange range = {});

struct DimAccuracy {
  std::vector<std::optional<double>> per_dim;  // absent when no records
  std::vector<std::size_t> counts;
  std::optional<double> avg;  // macro average over present dimensions
};

/// Per dimension i, the fraction of records where sign(a_i - b_i) agrees
/// with sign(a*_i - b*_i). Throws DomainError on mixed or non-pairwise
/// tasks, SchemaError when a record lacks candidate scores.
DimAccuracy dim_accuracy(
    std::span<const std::pair<ParsedJudgment, GroundTruth>> records);

/// Mean of evidence-groundedness scores in {0, 1, 2}.
double eg_mean(std::span<const int> scores);

/// One prediction to evaluate. `prediction` holds the parse of the model's
/// raw output, successful or not.
struct EvalItem {
  ParseResult prediction;
  GroundTruth truth;
  std::optional<int> eg;
};

struct EvalReport {
  TaskKind task = TaskKind::PairwisePreference;
  std::size_t n = 0;
  std::size_t parsed = 0;
  std::size_t failed = 0;
  std::optional<double> accuracy;
  std::optional<double> pcc_overall;
  std::optional<std::array<std::optional<double>, MosVector::kAspects>>
      pcc_per_aspect;
  std::optional<DimAccuracy> dim_accuracy;
  std::optional<double> eg_mean;

  nlohmann::ordered_json to_json() const;
  /// Aligned plain-text table; accuracies as percentages, two decimals.
  std::string to_table() const;
};

/// Accuracy counts parse failures as wrong. T2 accuracy compares binned
/// overall scores; PCC uses parsed predictions only and is left absent
/// where undefined. Throws DomainError on empty input or a task mismatch.
EvalReport eval_report(std::span<const EvalItem> items, TaskKind task);

// --- JSON ------------------------------------------------------------------

/// Pairwise: {"label": "A"|"B", "dims_a": [...], "dims_b": [...]}.
/// T2: {"noise": 3, ..., "overall": 4}.
nlohmann::ordered_json to_json(const GroundTruth& truth);
/// Throws SchemaError on a malformed or invalid truth.
GroundTruth ground_truth_from_json(const nlohmann::ordered_json& j, TaskKind task);

nlohmann::ordered_json to_json(const RewardBreakdown& r);

/// {"raw": str, "truth": {...}, "task"?: "t1".., "eg"?: 0|1|2}. A present
/// "task" must equal `task`.
EvalItem eval_item_from_json(const nlohmann::ordered_json& j, TaskKind task);

}  // namespace srm
