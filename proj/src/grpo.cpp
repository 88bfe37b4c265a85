#include "srm/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "srm/parser.hpp"

namespace srm {

namespace {

double log_sum_exp(std::span<const double> z) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> z) {
  double lse = log_sum_exp(z);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - lse);
  return p;
}

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations so runs are bitwise reproducible.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample_categorical(std::span<const double> p, std::mt19937_64& rng) {
  double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

void check_compatible(const ToyPolicy& a, const ToyPolicy& b, const char* what) {
  if (a.num_prompts() != b.num_prompts() || a.vocab_size() != b.vocab_size()) {
    throw DomainError(std::string(what) + " policy has a different shape");
  }
}

std::vector<double> group_advantages(const Group& g, const Hyperparams& h) {
  bool all_set = std::all_of(g.rollouts.begin(), g.rollouts.end(),
                             [](const Rollout& r) { return r.advantage.has_value(); });
  if (all_set) {
    std::vector<double> a;
    a.reserve(g.rollouts.size());
    for (const auto& r : g.rollouts) a.push_back(*r.advantage);
    return a;
  }
  std::vector<double> rewards;
  rewards.reserve(g.rollouts.size());
  for (const auto& r : g.rollouts) rewards.push_back(r.reward.total);
  return normalize_advantages(rewards, h.adv_epsilon);
}

LossAndGrad grpo_eval(std::span<const Group> groups, const ToyPolicy& policy,
                      const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                      const Hyperparams& h, bool want_grad) {
  validate(h);
  if (groups.empty()) throw DomainError("grpo_loss: no groups");
  check_compatible(policy, old_policy, "old");
  check_compatible(policy, ref_policy, "reference");

  std::size_t n_rollouts = 0;
  for (const auto& g : groups) n_rollouts += g.rollouts.size();
  if (n_rollouts == 0) throw DomainError("grpo_loss: groups hold no rollouts");

  const std::size_t vocab = policy.vocab_size();
  LossAndGrad out;
  if (want_grad) out.grad.assign(policy.parameters().size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n_rollouts);
  const double kl_scale = h.kl_beta / static_cast<double>(groups.size());

  double surrogate_sum = 0.0;
  double kl_sum = 0.0;
  for (const auto& g : groups) {
    if (g.prompt_index >= policy.num_prompts()) {
      throw DomainError("grpo_loss: prompt index out of range");
    }
    const auto p = policy.probabilities(g.prompt_index);
    const auto q = ref_policy.probabilities(g.prompt_index);
    const auto adv = group_advantages(g, h);
    double* grad_row =
        want_grad ? out.grad.data() + g.prompt_index * vocab : nullptr;

    for (std::size_t k = 0; k < g.rollouts.size(); ++k) {
      std::size_t o = g.rollouts[k].output_id;
      if (o >= vocab) throw DomainError("grpo_loss: output outside the vocabulary");
      double ratio = std::exp(policy.log_prob(g.prompt_index, o) -
                              old_policy.log_prob(g.prompt_index, o));
      double a = adv[k];
      surrogate_sum += clipped_surrogate(ratio, a, h.clip_epsilon);
      if (want_grad) {
        double clipped = std::clamp(ratio, 1.0 - h.clip_epsilon, 1.0 + h.clip_epsilon);
        // The unclipped branch is active (slope A) unless clipping binds.
        double dsur_dratio = (ratio * a <= clipped * a) ? a : 0.0;
        double coeff = -inv_n * dsur_dratio * ratio;
        if (coeff != 0.0) {
          for (std::size_t j = 0; j < vocab; ++j) {
            grad_row[j] += coeff * ((j == o ? 1.0 : 0.0) - p[j]);
          }
        }
      }
    }

    double kl = kl_divergence(p, q);
    kl_sum += kl;
    if (want_grad) {
      for (std::size_t j = 0; j < vocab; ++j) {
        double term = p[j] > 0.0 ? std::log(p[j] / q[j]) : 0.0;
        grad_row[j] += kl_scale * p[j] * (term - kl);
      }
    }
  }
  out.loss = -surrogate_sum * inv_n + kl_scale * kl_sum;
  return out;
}

}  // namespace

void validate(const Hyperparams& h) {
  if (h.group_size < 2) throw DomainError("group_size must be at least 2");
  if (!(h.clip_epsilon > 0.0 && h.clip_epsilon < 1.0)) {
    throw DomainError("clip_epsilon must lie in (0, 1)");
  }
  if (!(h.adv_epsilon > 0.0) || !std::isfinite(h.adv_epsilon)) {
    throw DomainError("adv_epsilon must be positive");
  }
  if (!std::isfinite(h.kl_beta) || !std::isfinite(h.sft_lr) ||
      !std::isfinite(h.rl_lr)) {
    throw DomainError("kl_beta and learning rates must be finite");
  }
  validate(h.weights);
}

// --- ToyPolicy -------------------------------------------------------------

ToyPolicy::ToyPolicy(std::vector<std::string> prompt_ids,
                     std::vector<std::string> vocabulary)
    : prompt_ids_(std::move(prompt_ids)), vocabulary_(std::move(vocabulary)) {
  if (prompt_ids_.empty() || vocabulary_.empty()) {
    throw DomainError("ToyPolicy needs at least one prompt and one output");
  }
  params_.assign(prompt_ids_.size() * vocabulary_.size(), 0.0);
}

std::span<const double> ToyPolicy::logits(std::size_t prompt) const {
  return std::span<const double>(params_).subspan(prompt * vocab_size(), vocab_size());
}

std::span<double> ToyPolicy::logits(std::size_t prompt) {
  return std::span<double>(params_).subspan(prompt * vocab_size(), vocab_size());
}

void ToyPolicy::set_parameters(std::span<const double> params) {
  if (params.size() != params_.size()) {
    throw DomainError("ToyPolicy::set_parameters: size mismatch");
  }
  std::copy(params.begin(), params.end(), params_.begin());
}

std::vector<double> ToyPolicy::probabilities(std::size_t prompt) const {
  return softmax(logits(prompt));
}

double ToyPolicy::log_prob(std::size_t prompt, std::size_t output) const {
  auto z = logits(prompt);
  return z[output] - log_sum_exp(z);
}

std::size_t ToyPolicy::prompt_index(std::string_view id) const {
  auto it = std::find(prompt_ids_.begin(), prompt_ids_.end(), id);
  if (it == prompt_ids_.end()) throw DomainError("unknown prompt '" + std::string(id) + "'");
  return static_cast<std::size_t>(it - prompt_ids_.begin());
}

std::size_t ToyPolicy::output_index(std::string_view text) const {
  auto it = std::find(vocabulary_.begin(), vocabulary_.end(), text);
  if (it == vocabulary_.end()) throw DomainError("output not in the vocabulary");
  return static_cast<std::size_t>(it - vocabulary_.begin());
}

// --- kernel ----------------------------------------------------------------

std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double adv_epsilon) {
  if (rewards.empty()) throw DomainError("normalize_advantages: empty group");
  const double n = static_cast<double>(rewards.size());
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  double sigma = std::sqrt(var / n);
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = (rewards[i] - mean) / (sigma + adv_epsilon);
  }
  if (std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards.front(); })) {
    std::fill(adv.begin(), adv.end(), 0.0);
  }
  return adv;
}

double clipped_surrogate(double ratio, double advantage, double clip_epsilon) {
  if (!(ratio > 0.0)) throw DomainError("clipped_surrogate: ratio must be positive");
  double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl_divergence: support mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw DomainError("kl_divergence: negative mass");
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw DomainError("kl_divergence: q vanishes where p does not");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

double grpo_loss(std::span<const Group> groups, const ToyPolicy& policy,
                 const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                 const Hyperparams& h) {
  return grpo_eval(groups, policy, old_policy, ref_policy, h, false).loss;
}

LossAndGrad grpo_loss_and_grad(std::span<const Group> groups,
                               const ToyPolicy& policy,
                               const ToyPolicy& old_policy,
                               const ToyPolicy& ref_policy, const Hyperparams& h) {
  return grpo_eval(groups, policy, old_policy, ref_policy, h, true);
}

LossAndGrad sft_nll_and_grad(const ToyPolicy& policy,
                             std::span<const SftExample> dataset) {
  if (dataset.empty()) throw DomainError("sft_nll: empty dataset");
  const std::size_t vocab = policy.vocab_size();
  LossAndGrad out;
  out.grad.assign(policy.parameters().size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  for (const auto& ex : dataset) {
    if (ex.prompt >= policy.num_prompts() || ex.target >= vocab) {
      throw DomainError("sft_nll: unknown prompt or target");
    }
    auto p = policy.probabilities(ex.prompt);
    out.loss -= policy.log_prob(ex.prompt, ex.target) * inv_n;
    double* row = out.grad.data() + ex.prompt * vocab;
    for (std::size_t j = 0; j < vocab; ++j) {
      row[j] += inv_n * (p[j] - (j == ex.target ? 1.0 : 0.0));
    }
  }
  return out;
}

double sft_nll(const ToyPolicy& policy, std::span<const SftExample> dataset) {
  return sft_nll_and_grad(policy, dataset).loss;
}

double sft_step(ToyPolicy& policy, std::span<const SftExample> dataset, double lr) {
  auto lg = sft_nll_and_grad(policy, dataset);
  auto params = policy.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * lg.grad[i];
  return lg.loss;
}

GradCheckReport grad_check(const LossFn& loss_fn, const GradFn& grad_fn,
                           std::span<const double> params, double step,
                           double tol, double floor) {
  GradCheckReport report;
  std::vector<double> x(params.begin(), params.end());
  if (!std::isfinite(loss_fn(x))) {
    report.finite = false;
    return report;
  }
  report.analytic = grad_fn(x);
  if (report.analytic.size() != x.size()) {
    throw DomainError("grad_check: gradient has the wrong size");
  }
  report.numeric.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double saved = x[i];
    x[i] = saved + step;
    double up = loss_fn(x);
    x[i] = saved - step;
    double down = loss_fn(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      report.finite = false;
      report.worst_index = i;
      return report;
    }
    report.numeric[i] = (up - down) / (2.0 * step);
    double a = report.analytic[i];
    double n = report.numeric[i];
    double err = std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
    if (i == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("total_variation: support mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::fabs(p[i] - q[i]);
  return 0.5 * tv;
}

// --- toy tasks -------------------------------------------------------------

std::vector<std::vector<RewardBreakdown>> reward_table(const ToyTask& task,
                                                       const RewardWeights& w) {
  std::vector<std::vector<RewardBreakdown>> table(task.prompt_ids.size());
  for (std::size_t p = 0; p < task.prompt_ids.size(); ++p) {
    table[p].reserve(task.vocabulary.size());
    for (const auto& text : task.vocabulary) {
      table[p].push_back(judge_reward(text, task.truths[p], task.tasks[p], w));
    }
  }
  return table;
}

double expected_reward(const ToyPolicy& policy,
                       const std::vector<std::vector<RewardBreakdown>>& table) {
  double sum = 0.0;
  for (std::size_t p = 0; p < table.size(); ++p) {
    auto probs = policy.probabilities(p);
    for (std::size_t o = 0; o < probs.size(); ++o) sum += probs[o] * table[p][o].total;
  }
  return sum / static_cast<double>(table.size());
}

double max_expected_reward(const std::vector<std::vector<RewardBreakdown>>& table) {
  double sum = 0.0;
  for (const auto& row : table) {
    double best = row.front().total;
    for (const auto& r : row) best = std::max(best, r.total);
    sum += best;
  }
  return sum / static_cast<double>(table.size());
}

namespace {

const std::array<std::string, 6> kExplanationBank = {
    "clear articulation with no skipped words",
    "slight mumbling in the middle of the sentence",
    "timbre closely matches the reference voice",
    "pitch contour sounds flat and monotone",
    "no audible noise or clipping",
    "a brief metallic artifact near the end"};

std::vector<std::string> pick_explanations(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(kExplanationBank[rng() % kExplanationBank.size()]);
  return out;
}

DimScores random_scores(std::size_t n, std::mt19937_64& rng) {
  DimScores s;
  for (std::size_t i = 0; i < n; ++i) s.values.push_back(static_cast<double>(rng() % 11));
  return s;
}

std::string replace_first(std::string s, std::string_view from, std::string_view to) {
  auto at = s.find(from);
  if (at != std::string::npos) s.replace(at, from.size(), to);
  return s;
}

}  // namespace

ToyTask make_planted_task(std::size_t num_prompts, std::uint64_t seed) {
  if (num_prompts == 0) throw DomainError("make_planted_task: need a prompt");
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    ToyTask task;
    std::vector<std::string> correct;
    std::vector<std::string> flipped;
    for (std::size_t p = 0; p < num_prompts; ++p) {
      TaskKind kind = kAllTasks[p % kAllTasks.size()];
      task.prompt_ids.push_back("prompt-" + std::to_string(p));
      task.tasks.push_back(kind);
      if (is_pairwise(kind)) {
        const auto& schema = schema_for(kind);
        DimScores a;
        DimScores b;
        double ta = 0.0;
        double tb = 0.0;
        do {
          a = random_scores(schema.count(), rng);
          b = random_scores(schema.count(), rng);
          ta = std::accumulate(a.values.begin(), a.values.end(), 0.0);
          tb = std::accumulate(b.values.begin(), b.values.end(), 0.0);
        } while (ta == tb);
        auto label = label_from_totals(ta, tb);
        auto other = label == PreferenceLabel::SpeechA ? PreferenceLabel::SpeechB
                                                       : PreferenceLabel::SpeechA;
        task.truths.push_back(GroundTruth::make_pairwise(kind, a, b, label));
        auto ea = pick_explanations(schema.count(), rng);
        auto eb = pick_explanations(schema.count(), rng);
        correct.push_back(render_judgment(make_pairwise_judgment(
                              kind, a, b, label, ea, eb,
                              "The preferred speech is stronger on most dimensions."))
                              .text);
        flipped.push_back(render_judgment(make_pairwise_judgment(
                              kind, b, a, other, eb, ea,
                              "The preferred speech is stronger on most dimensions."))
                              .text);
      } else {
        std::array<int, MosVector::kAspects> m{};
        std::array<int, MosVector::kAspects> reflected{};
        for (std::size_t k = 0; k < m.size(); ++k) {
          m[k] = 1 + static_cast<int>(rng() % 5);
          reflected[k] = 6 - m[k];
        }
        if (m == reflected) reflected[6] = m[6] == 5 ? 1 : 5;
        auto truth = MosVector::from_values(m);
        task.truths.push_back(GroundTruth::make_mos(truth));
        std::string aspects =
            "Noise description: faint hiss.\nDistortion description: none.\n"
            "Unnatural pause: one short gap.\nFeeling of voice: warm.";
        correct.push_back(render_judgment(make_mos_judgment(
                              truth, aspects, "Overall the sample is pleasant."))
                              .text);
        flipped.push_back(render_judgment(make_mos_judgment(
                              MosVector::from_values(reflected), aspects,
                              "Overall the sample is pleasant."))
                              .text);
      }
    }
    task.vocabulary = correct;
    task.vocabulary.insert(task.vocabulary.end(), flipped.begin(), flipped.end());
    const std::string& base = correct.front();
    task.vocabulary.push_back(replace_first(base, "</think>", ""));
    task.vocabulary.push_back(base.substr(0, base.find("<answer>")));
    task.vocabulary.push_back(base + "\nThanks for listening.");
    task.vocabulary.push_back("<think>\n</think>\n<answer></answer>");

    std::set<std::string> distinct(task.vocabulary.begin(), task.vocabulary.end());
    if (distinct.size() != task.vocabulary.size()) continue;
    auto table = reward_table(task, RewardWeights{});
    bool unique = true;
    for (std::size_t p = 0; p < num_prompts && unique; ++p) {
      double best = table[p][p].total;
      for (std::size_t o = 0; o < task.vocabulary.size(); ++o) {
        if (o != p && table[p][o].total >= best) unique = false;
      }
    }
    if (unique) return task;
  }
  throw DomainError("make_planted_task: could not plant unique optima");
}

ToyTask make_flat_task(std::size_t num_prompts, std::size_t vocab_size) {
  ToyTask task;
  for (std::size_t p = 0; p < num_prompts; ++p) {
    task.prompt_ids.push_back("prompt-" + std::to_string(p));
    task.tasks.push_back(TaskKind::PairwisePreference);
    task.truths.push_back(GroundTruth::make_pairwise(
        TaskKind::PairwisePreference, DimScores{{8, 7, 6, 9}},
        DimScores{{5, 7, 7, 9}}, PreferenceLabel::SpeechA));
  }
  for (std::size_t o = 0; o < vocab_size; ++o) {
    task.vocabulary.push_back("unstructured output #" + std::to_string(o));
  }
  return task;
}

TrainResult train_toy(const ToyTask& task, const Hyperparams& h,
                      std::uint64_t seed, const TrainOptions& options,
                      const std::optional<ToyPolicy>& initial) {
  validate(h);
  if (task.prompt_ids.size() != task.truths.size() ||
      task.prompt_ids.size() != task.tasks.size()) {
    throw DomainError("train_toy: prompts, tasks and truths must align");
  }
  ToyPolicy policy = initial ? *initial : ToyPolicy(task.prompt_ids, task.vocabulary);
  if (policy.num_prompts() != task.prompt_ids.size() ||
      policy.vocab_size() != task.vocabulary.size()) {
    throw DomainError("train_toy: initial policy does not match the task");
  }
  const ToyPolicy reference = policy;
  const auto table = reward_table(task, h.weights);
  std::mt19937_64 rng(seed);

  TrainResult result{policy, reference, {}};
  std::vector<double> trial(policy.parameters().size());
  for (int it = 0; it < options.iterations; ++it) {
    const ToyPolicy old_policy = policy;
    std::vector<Group> groups;
    groups.reserve(task.prompt_ids.size());
    double reward_sum = 0.0;
    for (std::size_t p = 0; p < task.prompt_ids.size(); ++p) {
      Group g;
      g.prompt_id = task.prompt_ids[p];
      g.prompt_index = p;
      auto probs = old_policy.probabilities(p);
      std::vector<double> rewards;
      for (int k = 0; k < h.group_size; ++k) {
        std::size_t o = sample_categorical(probs, rng);
        Rollout r;
        r.output_text = task.vocabulary[o];
        r.output_id = o;
        r.logprob_old = old_policy.log_prob(p, o);
        r.logprob_current = r.logprob_old;
        r.reward = table[p][o];
        rewards.push_back(r.reward.total);
        reward_sum += r.reward.total;
        g.rollouts.push_back(std::move(r));
      }
      auto adv = normalize_advantages(rewards, h.adv_epsilon);
      for (std::size_t k = 0; k < adv.size(); ++k) g.rollouts[k].advantage = adv[k];
      groups.push_back(std::move(g));
    }

    for (int step = 0; step < options.inner_steps; ++step) {
      auto lg = grpo_loss_and_grad(groups, policy, old_policy, reference, h);
      if (!std::isfinite(lg.loss)) throw TrainingError(it, "non-finite GRPO loss");
      double gg = 0.0;
      for (double v : lg.grad) gg += v * v;
      if (!std::isfinite(gg)) throw TrainingError(it, "non-finite gradient");
      if (gg == 0.0) break;
      double lr = h.rl_lr;
      auto params = policy.parameters();
      ToyPolicy candidate = policy;
      for (int b = 0; b <= options.max_backtracks; ++b) {
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = params[i] - lr * lg.grad[i];
        candidate.set_parameters(trial);
        double next = grpo_loss(groups, candidate, old_policy, reference, h);
        if (std::isfinite(next) && next <= lg.loss - 1e-4 * lr * gg) {
          policy = candidate;
          break;
        }
        lr *= 0.5;
      }
    }

    double kl_sum = 0.0;
    for (std::size_t p = 0; p < task.prompt_ids.size(); ++p) {
      kl_sum += kl_divergence(policy.probabilities(p), reference.probabilities(p));
    }
    result.curve.push_back(CurvePoint{
        it, reward_sum / static_cast<double>(task.prompt_ids.size() * h.group_size),
        kl_sum / static_cast<double>(task.prompt_ids.size())});
  }
  result.policy = policy;
  return result;
}

GradCheckSuiteReport run_grad_check_suite(const GradCheckSuiteOptions& o) {
  validate(o.h);
  if (o.draws < 1) throw DomainError("gradient check needs at least one draw");
  std::mt19937_64 rng(o.seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  const double kinks[2] = {1.0 - o.h.clip_epsilon, 1.0 + o.h.clip_epsilon};

  GradCheckSuiteReport report;
  while (report.draws < o.draws) {
    std::size_t prompts = 1 + pick(3);
    std::size_t vocab = 2 + pick(5);
    std::vector<std::string> ids, words;
    for (std::size_t p = 0; p < prompts; ++p) ids.push_back("p" + std::to_string(p));
    for (std::size_t v = 0; v < vocab; ++v) words.push_back("o" + std::to_string(v));
    ToyPolicy policy(ids, words), old_policy(ids, words), ref(ids, words);
    for (double& x : policy.parameters()) x = uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < policy.parameters().size(); ++i) {
      old_policy.parameters()[i] = policy.parameters()[i] + uniform(-0.4, 0.4);
    }
    for (double& x : ref.parameters()) x = uniform(-2.0, 2.0);

    std::vector<Group> groups;
    bool near_kink = false;
    for (std::size_t p = 0; p < prompts; ++p) {
      Group g;
      g.prompt_index = p;
      for (int k = 0; k < o.h.group_size; ++k) {
        Rollout r;
        r.output_id = pick(vocab);
        r.reward.total = uniform(-1.0, 2.0);
        double ratio = std::exp(policy.log_prob(p, r.output_id) -
                                old_policy.log_prob(p, r.output_id));
        for (double kink : kinks) near_kink |= std::fabs(ratio - kink) < 1e-3;
        g.rollouts.push_back(r);
      }
      groups.push_back(std::move(g));
    }
    if (near_kink) continue;

    std::vector<SftExample> sft;
    for (std::size_t n = 0; n < 1 + pick(6); ++n) sft.push_back({pick(prompts), pick(vocab)});

    auto at = [&](std::span<const double> x) {
      ToyPolicy t = policy;
      t.set_parameters(x);
      return t;
    };
    auto sft_report = grad_check(
        [&](std::span<const double> x) { return sft_nll(at(x), sft); },
        [&](std::span<const double> x) { return sft_nll_and_grad(at(x), sft).grad; },
        policy.parameters(), o.step, o.tol);
    auto grpo_report = grad_check(
        [&](std::span<const double> x) {
          return grpo_loss(groups, at(x), old_policy, ref, o.h);
        },
        [&](std::span<const double> x) {
          return grpo_loss_and_grad(groups, at(x), old_policy, ref, o.h).grad;
        },
        policy.parameters(), o.step, o.tol);

    ++report.draws;
    report.max_rel_error_sft = std::max(report.max_rel_error_sft, sft_report.max_rel_error);
    report.max_rel_error_grpo =
        std::max(report.max_rel_error_grpo, grpo_report.max_rel_error);
    if (!sft_report.passed || !grpo_report.passed) ++report.failures;
  }
  return report;
}

}  // namespace srm
