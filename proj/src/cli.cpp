#include "srm/cli.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "srm/datapipe.hpp"
#include "srm/grpo.hpp"
#include "srm/metrics.hpp"
#include "srm/parser.hpp"
#include "srm/rewards.hpp"

namespace srm::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string task;
  std::string in;
  std::string out;
  std::string report;
  std::uint64_t seed = 0;
  std::string ratios;
  double lambda_fmt = 1.0;
  double lambda_acc = 1.0;
  double lambda_rc = 1.0;
  int group_size = 8;
  double kl_beta = 0.04;
  double clip_epsilon = 0.2;
  double adv_epsilon = 1e-8;
  double rl_lr = 1.0;
  double sft_lr = 0.5;
  int sft_steps = 0;
  int iterations = 150;
  int inner_steps = 2;
  int prompts = 8;
  double tol = 1e-4;
  double step = 1e-5;
  int draws = 100;
  int jobs = 1;
  bool lenient = false;
  bool jsonl = false;
};

ReadMode mode(const Options& o) { return o.lenient ? ReadMode::Lenient : ReadMode::Strict; }

TaskKind task_of(const Options& o) {
  try {
    return parse_task_code(o.task);
  } catch (const SchemaError& e) {
    throw UsageError(e.what());
  }
}

RewardWeights weights_of(const Options& o) {
  RewardWeights w{o.lambda_fmt, o.lambda_acc, o.lambda_rc};
  try {
    validate(w);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return w;
}

Hyperparams hyperparams_of(const Options& o) {
  Hyperparams h;
  h.group_size = o.group_size;
  h.clip_epsilon = o.clip_epsilon;
  h.adv_epsilon = o.adv_epsilon;
  h.kl_beta = o.kl_beta;
  h.weights = weights_of(o);
  h.rl_lr = o.rl_lr;
  h.sft_lr = o.sft_lr;
  try {
    validate(h);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return h;
}

void check_paths(const Options& o) {
  if (o.in.empty() || o.out.empty()) return;
  std::error_code ec;
  if (fs::weakly_canonical(o.in, ec) == fs::weakly_canonical(o.out, ec)) {
    throw UsageError("--out must differ from --in");
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw ValidationError("write to " + path + " failed");
}

void emit(const Options& o, const std::string& content, std::ostream& out) {
  if (o.out.empty()) {
    out << content;
  } else {
    write_file(o.out, content);
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t k = 0; k < t; ++k) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    });
  }
  for (auto& th : threads) th.join();
}

/// Maps every non-blank input line through `fn`. A throwing line aborts in
/// strict mode and is skipped (and reported) in lenient mode.
template <class T, class F>
std::vector<T> map_lines(const Options& o, const std::vector<std::string>& lines,
                         std::ostream& err, F&& fn) {
  std::vector<std::optional<T>> slots(lines.size());
  std::vector<std::string> errors(lines.size());
  parallel_for(lines.size(), o.jobs, [&](std::size_t i) {
    if (blank(lines[i])) return;
    try {
      slots[i] = fn(json::parse(lines[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<T> out;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!errors[i].empty()) {
      if (!o.lenient) {
        throw ValidationError("line " + std::to_string(i + 1) + ": " + errors[i]);
      }
      ++skipped;
      err << "skipped line " << i + 1 << ": " << errors[i] << "\n";
    } else if (slots[i]) {
      out.push_back(std::move(*slots[i]));
    }
  }
  if (skipped) err << "skipped " << skipped << " malformed line(s)\n";
  return out;
}

std::string dump_lines(const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

std::string records_text(const std::vector<PairRecord>& records) {
  std::ostringstream os;
  write_records(records, os);
  return os.str();
}

std::vector<PairRecord> load_records(const Options& o, std::ostream& err) {
  auto r = read_records(fs::path(o.in), mode(o));
  for (const auto& d : r.diagnostics) err << d << "\n";
  if (r.skipped) err << "skipped " << r.skipped << " malformed line(s)\n";
  return std::move(r.records);
}

json scores_json(const CandidateJudgment& c) {
  json s = json::array();
  for (double v : c.scores.values) s.push_back(number_json(v));
  json j;
  j["scores"] = s;
  j["total"] = number_json(c.total);
  return j;
}

json parse_json(const ParseResult& r) {
  json j;
  if (const auto* e = std::get_if<FormatError>(&r)) {
    j["ok"] = false;
    j["error"] = {{"kind", to_string(e->kind)}, {"location", e->location},
                  {"detail", e->detail}};
    return j;
  }
  const auto& p = std::get<ParsedJudgment>(r);
  j["ok"] = true;
  j["task"] = task_code(p.task);
  if (p.answer_pref) j["answer"] = label_code(*p.answer_pref);
  if (p.answer_mos) {
    json m;
    const auto v = p.answer_mos->values();
    for (std::size_t k = 0; k < v.size(); ++k) m[std::string(MosVector::kKeys[k])] = v[k];
    j["answer"] = m;
  }
  if (p.candidate_a) j["candidate_a"] = scores_json(*p.candidate_a);
  if (p.candidate_b) j["candidate_b"] = scores_json(*p.candidate_b);
  if (p.candidate_a) j["tie_warning"] = p.tie_warning();
  return j;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- subcommands -----------------------------------------------------------

int cmd_parse(const Options& o, std::ostream& out, std::ostream& err) {
  TaskKind task = task_of(o);
  if (!o.jsonl) {
    std::ifstream f(o.in, std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    auto r = parse_judgment(raw, task);
    emit(o, parse_json(r).dump() + "\n", out);
    if (const auto* e = std::get_if<FormatError>(&r)) {
      err << "format error: " << to_string(e->kind) << " at byte " << e->location << ": "
          << e->detail << "\n";
      return kExitValidation;
    }
    return kExitOk;
  }
  auto rows = map_lines<json>(o, read_lines(o.in), err, [&](const json& j) {
    if (!j.contains("raw") || !j["raw"].is_string()) {
      throw std::invalid_argument("raw must be a string");
    }
    return parse_json(parse_judgment(j["raw"].get<std::string>(), task));
  });
  emit(o, dump_lines(rows), out);
  return kExitOk;
}

int cmd_pairs(const Options& o, std::ostream& out, std::ostream& err) {
  std::optional<TaskKind> task;
  if (!o.task.empty()) task = task_of(o);
  auto groups = map_lines<CandidateGroupInput>(
      o, read_lines(o.in), err, [](const json& j) { return candidate_group_from_json(j); });
  std::vector<PairRecord> records;
  for (const auto& g : groups) {
    auto pairs = form_pairs(g.set, o.seed, make_labeler(g));
    if (task) {
      const auto& schema = schema_for(*task);
      for (const auto& p : pairs) {
        validate(*p.dim_scores_a, schema);
        validate(*p.dim_scores_b, schema);
      }
    }
    records.insert(records.end(), pairs.begin(), pairs.end());
  }
  emit(o, records_text(records), out);
  err << "formed " << records.size() << " pairs from " << groups.size() << " groups\n";
  return kExitOk;
}

int finish_filter(const Options& o, const FilterResult& r, std::ostream& out,
                  std::ostream& err) {
  emit(o, records_text(r.kept), out);
  if (!o.report.empty()) write_file(o.report, r.report.to_json().dump(2) + "\n");
  err << "kept " << r.report.kept << " of " << r.report.input << "\n";
  return kExitOk;
}

int cmd_filter_cycles(const Options& o, std::ostream& out, std::ostream& err) {
  return finish_filter(o, filter_cycles(load_records(o, err)), out, err);
}

int cmd_vote_filter(const Options& o, std::ostream& out, std::ostream& err) {
  return finish_filter(o, vote_filter_all(load_records(o, err)), out, err);
}

SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--ratios: '" + item + "' is not a number");
    }
  }
  if (v.size() != 3) throw UsageError("--ratios needs three comma-separated values");
  SplitRatios r{v[0], v[1], v[2]};
  try {
    validate(r);
  } catch (const DomainError& e) {
    throw UsageError(std::string("--ratios: ") + e.what());
  }
  return r;
}

int cmd_split(const Options& o, std::ostream& out, std::ostream& err) {
  SplitRatios ratios = parse_ratios(o.ratios);
  auto records = load_records(o, err);
  auto assignment = split_dataset(records, ratios, o.seed);
  apply_split(records, assignment);
  emit(o, records_text(records), out);
  err << "groups sft/rl/bench: " << assignment.group_counts[0] << "/"
      << assignment.group_counts[1] << "/" << assignment.group_counts[2] << "\n";
  return kExitOk;
}

int cmd_reward(const Options& o, std::ostream& out, std::ostream& err) {
  TaskKind task = task_of(o);
  RewardWeights w = weights_of(o);
  auto rows = map_lines<json>(o, read_lines(o.in), err, [&](const json& j) {
    EvalItem item = eval_item_from_json(j, task);
    return to_json(reward_from_parse(item.prediction, item.truth, task, w));
  });
  emit(o, dump_lines(rows), out);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  TaskKind task = task_of(o);
  auto items = map_lines<EvalItem>(o, read_lines(o.in), err, [&](const json& j) {
    return eval_item_from_json(j, task);
  });
  if (items.empty()) throw ValidationError("no records to evaluate");
  auto report = eval_report(items, task);
  if (!o.out.empty()) write_file(o.out, report.to_json().dump(2) + "\n");
  if (!o.report.empty()) write_file(o.report, report.to_table());
  out << report.to_table();
  return kExitOk;
}

int cmd_train_toy(const Options& o, std::ostream& out, std::ostream& err) {
  Hyperparams h = hyperparams_of(o);
  if (o.prompts < 1) throw UsageError("--prompts must be >= 1");
  if (o.iterations < 1) throw UsageError("--iterations must be >= 1");
  if (o.sft_steps < 0) throw UsageError("--sft-steps must be >= 0");
  ToyTask task = make_planted_task(static_cast<std::size_t>(o.prompts), o.seed);
  auto table = reward_table(task, h.weights);

  std::optional<ToyPolicy> initial;
  if (o.sft_steps > 0) {
    ToyPolicy warm(task.prompt_ids, task.vocabulary);
    std::vector<SftExample> data;
    for (std::size_t p = 0; p < task.prompt_ids.size(); ++p) data.push_back({p, p});
    for (int s = 0; s < o.sft_steps; ++s) sft_step(warm, data, h.sft_lr);
    initial = warm;
  }

  TrainOptions opts;
  opts.iterations = o.iterations;
  opts.inner_steps = o.inner_steps;
  std::optional<TrainResult> trained;
  try {
    trained = train_toy(task, h, o.seed, opts, initial);
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitValidation;
  }
  const TrainResult& result = *trained;

  std::string csv = "iteration,mean_total_reward,mean_kl\n";
  for (const auto& p : result.curve) {
    csv += std::to_string(p.iteration) + "," + fmt17(p.mean_total_reward) + "," +
           fmt17(p.mean_kl) + "\n";
  }
  emit(o, csv, out);
  err << "expected reward: initial " << expected_reward(result.reference, table)
      << ", final " << expected_reward(result.policy, table) << ", maximum "
      << max_expected_reward(table) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream&) {
  GradCheckSuiteOptions g;
  g.draws = o.draws;
  g.step = o.step;
  g.tol = o.tol;
  g.seed = o.seed;
  g.h = hyperparams_of(o);
  if (o.draws < 1) throw UsageError("--draws must be >= 1");
  if (!(o.step > 0.0) || !(o.tol > 0.0)) throw UsageError("--step and --tol must be positive");
  auto r = run_grad_check_suite(g);
  std::ostringstream os;
  os << "draws " << r.draws << "\n"
     << "failures " << r.failures << "\n"
     << "max_rel_error_sft " << fmt17(r.max_rel_error_sft) << "\n"
     << "max_rel_error_grpo " << fmt17(r.max_rel_error_grpo) << "\n"
     << "tolerance " << fmt17(o.tol) << "\n"
     << "status " << (r.passed() ? "pass" : "fail") << "\n";
  emit(o, os.str(), out);
  return r.passed() ? kExitOk : kExitValidation;
}

// --- option wiring ---------------------------------------------------------

void add_in(CLI::App* sub, Options& o) {
  sub->add_option("--in", o.in, "input path")->required()->check(CLI::ExistingFile);
}

void add_out(CLI::App* sub, Options& o) {
  sub->add_option("--out", o.out, "output path (standard output when omitted)");
}

void add_task(CLI::App* sub, Options& o, bool required) {
  auto* opt = sub->add_option("--task", o.task, "t1, t2, t3 or t4");
  if (required) opt->required();
}

void add_weights(CLI::App* sub, Options& o) {
  sub->add_option("--lambda-fmt", o.lambda_fmt, "format reward weight");
  sub->add_option("--lambda-acc", o.lambda_acc, "accuracy reward weight");
  sub->add_option("--lambda-rc", o.lambda_rc, "reasoning-consistency reward weight");
}

void add_grpo(CLI::App* sub, Options& o) {
  add_weights(sub, o);
  sub->add_option("--group-size", o.group_size, "rollouts per prompt");
  sub->add_option("--kl-beta", o.kl_beta, "KL penalty coefficient");
  sub->add_option("--clip-epsilon", o.clip_epsilon, "ratio clip range");
  sub->add_option("--adv-epsilon", o.adv_epsilon, "advantage normalization epsilon");
}

void add_jobs(CLI::App* sub, Options& o) {
  sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Speech reward-model data, reward and training toolkit", "srm"};
  app.require_subcommand(1, 1);

  auto* parse = app.add_subcommand("parse", "validate judgment text against the template");
  add_task(parse, o, true);
  add_in(parse, o);
  add_out(parse, o);
  add_jobs(parse, o);
  parse->add_flag("--jsonl", o.jsonl, "input holds one {\"raw\": ...} object per line");
  parse->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* pairs = app.add_subcommand("pairs", "form preference pairs from candidate groups");
  add_task(pairs, o, false);
  add_in(pairs, o);
  add_out(pairs, o);
  pairs->add_option("--seed", o.seed, "order shuffling seed")->required();
  pairs->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* cycles = app.add_subcommand("filter-cycles", "drop pairs on preference cycles");
  add_in(cycles, o);
  add_out(cycles, o);
  cycles->add_option("--report", o.report, "write the filter report as JSON");
  cycles->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* votes = app.add_subcommand("vote-filter", "apply the three-annotator vote rules");
  add_in(votes, o);
  add_out(votes, o);
  votes->add_option("--report", o.report, "write the filter report as JSON");
  votes->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* split = app.add_subcommand("split", "assign text groups to sft/rl/bench");
  add_in(split, o);
  add_out(split, o);
  split->add_option("--seed", o.seed, "shuffle seed")->required();
  split->add_option("--ratios", o.ratios, "sft,rl,bench fractions")->required();
  split->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* reward = app.add_subcommand("reward", "score judgments against ground truth");
  add_task(reward, o, true);
  add_in(reward, o);
  add_out(reward, o);
  add_weights(reward, o);
  add_jobs(reward, o);
  reward->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* eval = app.add_subcommand("eval", "accuracy, PCC and per-dimension report");
  add_task(eval, o, true);
  add_in(eval, o);
  eval->add_option("--out", o.out, "write the report as JSON");
  eval->add_option("--report", o.report, "also write the text table to this path");
  add_jobs(eval, o);
  eval->add_flag("--lenient", o.lenient, "skip malformed lines");

  auto* train = app.add_subcommand("train-toy", "GRPO on the planted toy judgment task");
  add_out(train, o);
  add_grpo(train, o);
  train->add_option("--seed", o.seed, "task and sampling seed")->required();
  train->add_option("--rl-lr", o.rl_lr, "initial step size of each RL update");
  train->add_option("--sft-lr", o.sft_lr, "SFT warm-start step size");
  train->add_option("--sft-steps", o.sft_steps, "SFT warm-start steps before RL");
  train->add_option("--iterations", o.iterations, "sampling iterations");
  train->add_option("--inner-steps", o.inner_steps, "updates per sampled batch");
  train->add_option("--prompts", o.prompts, "prompts in the toy task");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of SFT and GRPO gradients");
  add_out(grad, o);
  add_grpo(grad, o);
  grad->add_option("--seed", o.seed, "draw seed");
  grad->add_option("--tol", o.tol, "maximum relative error");
  grad->add_option("--step", o.step, "central difference step");
  grad->add_option("--draws", o.draws, "random policy draws");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    check_paths(o);
    if (parse->parsed()) return cmd_parse(o, out, err);
    if (pairs->parsed()) return cmd_pairs(o, out, err);
    if (cycles->parsed()) return cmd_filter_cycles(o, out, err);
    if (votes->parsed()) return cmd_vote_filter(o, out, err);
    if (split->parsed()) return cmd_split(o, out, err);
    if (reward->parsed()) return cmd_reward(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out, err);
    if (train->parsed()) return cmd_train_toy(o, out, err);
    if (grad->parsed()) return cmd_gradcheck(o, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace srm::cli
