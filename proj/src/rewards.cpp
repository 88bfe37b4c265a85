#include "srm/rewards.hpp"

#include <algorithm>
#include <cmath>

namespace srm {

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

double range_width(MosRange range) {
  if (!std::isfinite(range.min) || !std::isfinite(range.max) ||
      !(range.max > range.min)) {
    throw DomainError("MOS range needs max > min");
  }
  return range.max - range.min;
}

}  // namespace

void validate(const RewardWeights& w) {
  if (!std::isfinite(w.lambda_fmt) || !std::isfinite(w.lambda_acc) ||
      !std::isfinite(w.lambda_rc)) {
    throw DomainError("reward weights must be finite");
  }
}

double format_reward(const ParseResult& parse_result) {
  return std::holds_alternative<ParsedJudgment>(parse_result) ? 0.0 : -1.0;
}

double accuracy_reward_pairwise(PreferenceLabel pred, PreferenceLabel truth) {
  return pred == truth ? 1.0 : 0.0;
}

double accuracy_reward_mos(double pred_overall, double truth_overall,
                           MosRange range) {
  double width = range_width(range);
  double r = 1.0 - std::fabs(pred_overall - truth_overall) / width;
  return std::clamp(r, 0.0, 1.0);
}

double rc_reward_pairwise(const DimScores& a, const DimScores& b,
                          const DimScores& a_star, const DimScores& b_star) {
  const std::size_t d = a.size();
  if (d == 0 || b.size() != d || a_star.size() != d || b_star.size() != d) {
    throw SchemaError("rc_reward_pairwise: score vectors must share one non-empty length");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < d; ++i) {
    if (sign(a.values[i] - b.values[i]) ==
        sign(a_star.values[i] - b_star.values[i])) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(d);
}

double rc_reward_mos(const MosVector& pred, const MosVector& truth,
                     MosRange range) {
  double width = range_width(range);
  auto p = pred.values();
  auto t = truth.values();
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += std::fabs(static_cast<double>(p[k] - t[k])) / width;
  }
  double r = 1.0 - acc / static_cast<double>(p.size());
  return std::clamp(r, 0.0, 1.0);
}

RewardBreakdown reward_from_parse(const ParseResult& parsed,
                                  const GroundTruth& truth, TaskKind task,
                                  const RewardWeights& weights, MosRange range) {
  validate(weights);
  if (truth.task != task) {
    throw DomainError("ground truth is for " + std::string(task_code(truth.task)) +
                      " but the rollout is " + std::string(task_code(task)));
  }
  validate(truth);

  RewardBreakdown r;
  r.r_fmt = format_reward(parsed);
  r.parse_ok = r.r_fmt == 0.0;
  if (r.parse_ok) {
    const auto& j = std::get<ParsedJudgment>(parsed);
    if (is_pairwise(task)) {
      const auto& t = *truth.pairwise;
      r.r_acc = accuracy_reward_pairwise(*j.answer_pref, t.label);
      r.r_rc = rc_reward_pairwise(j.candidate_a->scores, j.candidate_b->scores,
                                  t.a_star, t.b_star);
    } else {
      r.r_acc = accuracy_reward_mos(j.answer_mos->overall, truth.mos->overall, range);
      r.r_rc = rc_reward_mos(*j.answer_mos, *truth.mos, range);
    }
  }
  r.total = weights.lambda_fmt * r.r_fmt + weights.lambda_acc * r.r_acc +
            weights.lambda_rc * r.r_rc;
  return r;
}

RewardBreakdown judge_reward(std::string_view raw, const GroundTruth& truth,
                             TaskKind task, const RewardWeights& weights,
                             MosRange range) {
  return reward_from_parse(parse_judgment(raw, task), truth, task, weights, range);
}

}  // namespace srm
