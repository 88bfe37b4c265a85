#pragma once

// Group-relative policy optimization on a small enumerable softmax policy.
//
// The toy policy has one logit per (prompt, output) pair over a finite
// vocabulary of rendered judgments, so every distribution, KL term and
// gradient can be computed exactly.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "srm/rewards.hpp"
#include "srm/schema.hpp"

namespace srm {

struct Hyperparams {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double adv_epsilon = 1e-8;
  double kl_beta = 0.04;
  RewardWeights weights;
  double sft_lr = 1e-5;
  double rl_lr = 1e-6;
};

/// group_size >= 2, clip_epsilon in (0,1), adv_epsilon > 0, finite beta and
/// learning rates. Throws DomainError otherwise.
void validate(const Hyperparams& h);

struct Rollout {
  std::string output_text;
  std::size_t output_id = 0;
  double logprob_current = 0.0;
  double logprob_old = 0.0;
  RewardBreakdown reward;
  std::optional<double> advantage;
};

struct Group {
  std::string prompt_id;
  std::size_t prompt_index = 0;
  std::vector<Rollout> rollouts;
};

/// Tabular softmax policy: logits(prompt)[output].
class ToyPolicy {
 public:
  /// All logits zero, i.e. uniform over the vocabulary for every prompt.
  ToyPolicy(std::vector<std::string> prompt_ids,
            std::vector<std::string> vocabulary);

  std::size_t num_prompts() const { return prompt_ids_.size(); }
  std::size_t vocab_size() const { return vocabulary_.size(); }
  const std::vector<std::string>& prompt_ids() const { return prompt_ids_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  std::span<const double> logits(std::size_t prompt) const;
  std::span<double> logits(std::size_t prompt);
  /// Flattened logits, prompt-major.
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  void set_parameters(std::span<const double> params);

  std::vector<double> probabilities(std::size_t prompt) const;
  double log_prob(std::size_t prompt, std::size_t output) const;

  /// Throws DomainError for unknown ids.
  std::size_t prompt_index(std::string_view id) const;
  std::size_t output_index(std::string_view text) const;

 private:
  std::vector<std::string> prompt_ids_;
  std::vector<std::string> vocabulary_;
  std::vector<double> params_;
};

/// A = (R - mean) / (std + eps) with the population standard deviation.
/// An all-equal group yields exact zeros. Throws DomainError when empty.
std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double adv_epsilon);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A). Throws DomainError
/// for a non-positive ratio.
double clipped_surrogate(double ratio, double advantage, double clip_epsilon);

/// sum p ln(p / q) over a shared finite support. Throws DomainError when the
/// sizes differ or q vanishes where p does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as ToyPolicy::parameters()
};

/// Mean over all rollouts of the negated clipped surrogate (sequence-level
/// ratio against `old_policy`) plus beta times the mean per-group exact
/// KL(policy || ref_policy). Rollouts without an advantage get one from
/// normalize_advantages over their group's total rewards.
double grpo_loss(std::span<const Group> groups, const ToyPolicy& policy,
                 const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                 const Hyperparams& h);
LossAndGrad grpo_loss_and_grad(std::span<const Group> groups,
                               const ToyPolicy& policy,
                               const ToyPolicy& old_policy,
                               const ToyPolicy& ref_policy, const Hyperparams& h);

struct SftExample {
  std::size_t prompt = 0;
  std::size_t target = 0;
};

/// Mean negative log-likelihood of the targets. For a whole-output softmax
/// the sequence log-probability is the sum of its per-token terms, so this
/// is the token-summed objective. Throws DomainError on unknown targets.
double sft_nll(const ToyPolicy& policy, std::span<const SftExample> dataset);
LossAndGrad sft_nll_and_grad(const ToyPolicy& policy,
                             std::span<const SftExample> dataset);

/// One plain gradient step on sft_nll. Returns the pre-step loss.
double sft_step(ToyPolicy& policy, std::span<const SftExample> dataset, double lr);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
  bool finite = true;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

using LossFn = std::function<double(std::span<const double>)>;
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

/// Compares `grad_fn` against central differences of `loss_fn` with step
/// `step`. Per-coordinate error is |a - n| / max(|a|, |n|, floor). A
/// non-finite loss anywhere marks the report failed with finite = false.
GradCheckReport grad_check(const LossFn& loss_fn, const GradFn& grad_fn,
                           std::span<const double> params, double step,
                           double tol, double floor = 1e-6);

struct GradCheckSuiteOptions {
  int draws = 100;
  double step = 1e-5;
  double tol = 1e-4;
  std::uint64_t seed = 0;
  Hyperparams h;
};

struct GradCheckSuiteReport {
  int draws = 0;
  int failures = 0;
  double max_rel_error_sft = 0.0;
  double max_rel_error_grpo = 0.0;
  bool passed() const { return failures == 0; }
};

/// grad_check of sft_nll and grpo_loss on random small policies, old and
/// reference policies, rollout groups and rewards. Draws with a probability
/// ratio within 1e-3 of a clip boundary are redrawn.
GradCheckSuiteReport run_grad_check_suite(const GradCheckSuiteOptions& o);

// --- toy training ----------------------------------------------------------

/// A synthetic judgment task: prompts with ground truths and a shared
/// vocabulary of rendered judgments the policy chooses among.
struct ToyTask {
  std::vector<std::string> prompt_ids;
  std::vector<TaskKind> tasks;
  std::vector<GroundTruth> truths;
  std::vector<std::string> vocabulary;
};

/// judge_reward of every (prompt, output) pair, prompt-major.
std::vector<std::vector<RewardBreakdown>> reward_table(const ToyTask& task,
                                                       const RewardWeights& w);

/// Exact expected total reward under `policy`, averaged over prompts.
double expected_reward(const ToyPolicy& policy,
                       const std::vector<std::vector<RewardBreakdown>>& table);

/// Mean over prompts of max_o R(prompt, o).
double max_expected_reward(const std::vector<std::vector<RewardBreakdown>>& table);

/// Builds a task in which, for every prompt, exactly one vocabulary entry is
/// the correct, well-formed judgment. The rest are judgments for other
/// prompts, answer-flipped judgments and single-defect malformed outputs.
ToyTask make_planted_task(std::size_t num_prompts, std::uint64_t seed);

/// Every vocabulary entry scores identically for every prompt.
ToyTask make_flat_task(std::size_t num_prompts, std::size_t vocab_size);

struct TrainOptions {
  int iterations = 150;
  int inner_steps = 2;
  int max_backtracks = 30;
};

struct CurvePoint {
  int iteration = 0;
  double mean_total_reward = 0.0;  // sampled, over this iteration's rollouts
  double mean_kl = 0.0;            // exact, policy vs reference, after update
};

struct TrainResult {
  ToyPolicy policy;
  ToyPolicy reference;
  std::vector<CurvePoint> curve;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Samples G rollouts per prompt from the current policy, scores them with
/// judge_reward, normalizes advantages and takes `inner_steps` backtracking
/// gradient steps (initial step h.rl_lr) on grpo_loss per iteration. The
/// reference policy is `initial` (uniform when omitted). Deterministic for a
/// fixed seed.
TrainResult train_toy(const ToyTask& task, const Hyperparams& h,
                      std::uint64_t seed, const TrainOptions& options = {},
                      const std::optional<ToyPolicy>& initial = std::nullopt);

/// Sum over outputs of |p - q| / 2 for one prompt.
double total_variation(std::span<const double> p, std::span<const double> q);

}  // namespace srm
