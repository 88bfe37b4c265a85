#pragma once

#include <string_view>
#include <utility>

#include "srm/parser.hpp"
#include "srm/schema.hpp"

namespace srm {

struct RewardWeights {
  double lambda_fmt = 1.0;
  double lambda_acc = 1.0;
  double lambda_rc = 1.0;
};

/// Throws DomainError unless every weight is finite.
void validate(const RewardWeights& w);

struct RewardBreakdown {
  double r_fmt = 0.0;  // 0 when well-formed, -1 otherwise
  double r_acc = 0.0;  // [0, 1]
  double r_rc = 0.0;   // [0, 1]
  double total = 0.0;
  bool parse_ok = false;
};

/// Closed score interval used by the MOS distance rewards.
struct MosRange {
  double min = 1.0;
  double max = 5.0;
};

double format_reward(const ParseResult& parse_result);

double accuracy_reward_pairwise(PreferenceLabel pred, PreferenceLabel truth);

/// clamp(1 - |pred - truth| / (max - min), 0, 1). Throws DomainError when
/// max <= min.
double accuracy_reward_mos(double pred_overall, double truth_overall,
                           MosRange range = {});

/// Fraction of dimensions where sign(a_i - b_i) == sign(a*_i - b*_i).
/// Throws SchemaError when the four vectors differ in length or are empty.
double rc_reward_pairwise(const DimScores& a, const DimScores& b,
                          const DimScores& a_star, const DimScores& b_star);

/// clamp(1 - mean_k |pred_k - truth_k| / (max - min), 0, 1).
double rc_reward_mos(const MosVector& pred, const MosVector& truth,
                     MosRange range = {});

/// Scores one rollout. A parse failure yields (-1, 0, 0) with total
/// -lambda_fmt. Throws DomainError when `truth` does not belong to `task`.
RewardBreakdown judge_reward(std::string_view raw, const GroundTruth& truth,
                             TaskKind task, const RewardWeights& weights = {},
                             MosRange range = {});

/// Same as judge_reward, starting from an existing parse.
RewardBreakdown reward_from_parse(const ParseResult& parsed,
                                  const GroundTruth& truth, TaskKind task,
                                  const RewardWeights& weights = {},
                                  MosRange range = {});

}  // namespace srm
