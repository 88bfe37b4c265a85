#include "srm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "srm/datapipe.hpp"

namespace srm {

using json = nlohmann::ordered_json;

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(const std::optional<double>& v) {
  return v ? fixed(*v * 100.0, 2) : "-";
}

std::string plain(const std::optional<double>& v, int digits) {
  return v ? fixed(*v, digits) : "-";
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

DimScores dims_field(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw SchemaError(std::string("truth.") + field + " must be an array");
  }
  DimScores s;
  for (const auto& v : j[field]) {
    if (!v.is_number()) throw SchemaError(std::string("truth.") + field + " holds a non-number");
    s.values.push_back(v.get<double>());
  }
  return s;
}

std::optional<double> pcc_or_absent(const std::vector<double>& x,
                                    const std::vector<double>& y) {
  if (x.size() < 2) return std::nullopt;
  try {
    return pearson(x, y);
  } catch (const UndefinedCorrelation&) {
    return std::nullopt;
  }
}

}  // namespace

double accuracy(std::span<const PreferenceLabel> preds,
                std::span<const PreferenceLabel> truths) {
  if (preds.size() != truths.size()) throw DomainError("accuracy: length mismatch");
  if (preds.empty()) throw DomainError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson: length mismatch");
  if (x.size() < 2) throw DomainError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DomainError("pearson: non-finite value");
    }
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation("pearson: constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

int bin_mos(double score, MosRange range) {
  if (!std::isfinite(score)) throw DomainError("bin_mos: non-finite score");
  double r = std::floor(score + 0.5);
  r = std::clamp(r, std::ceil(range.min), std::floor(range.max));
  return static_cast<int>(r);
}

DimAccuracy dim_accuracy(
    std::span<const std::pair<ParsedJudgment, GroundTruth>> records) {
  DimAccuracy out;
  if (records.empty()) return out;
  TaskKind task = records.front().second.task;
  if (!is_pairwise(task)) throw DomainError("dim_accuracy needs a pairwise task");
  const std::size_t d = schema_for(task).count();
  std::vector<std::size_t> hits(d, 0);
  out.counts.assign(d, 0);
  for (const auto& [pred, truth] : records) {
    if (truth.task != task || pred.task != task) {
      throw DomainError("dim_accuracy: mixed tasks");
    }
    if (!pred.candidate_a || !pred.candidate_b || !truth.pairwise) {
      throw SchemaError("dim_accuracy: record without dimension scores");
    }
    const auto& a = pred.candidate_a->scores.values;
    const auto& b = pred.candidate_b->scores.values;
    const auto& as = truth.pairwise->a_star.values;
    const auto& bs = truth.pairwise->b_star.values;
    if (a.size() != d || b.size() != d || as.size() != d || bs.size() != d) {
      throw SchemaError("dim_accuracy: dimension count mismatch");
    }
    for (std::size_t i = 0; i < d; ++i) {
      ++out.counts[i];
      hits[i] += sign(a[i] - b[i]) == sign(as[i] - bs[i]);
    }
  }
  out.per_dim.resize(d);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < d; ++i) {
    if (out.counts[i] == 0) continue;
    double f = static_cast<double>(hits[i]) / static_cast<double>(out.counts[i]);
    out.per_dim[i] = f;
    sum += f;
    ++present;
  }
  if (present > 0) out.avg = sum / static_cast<double>(present);
  return out;
}

double eg_mean(std::span<const int> scores) {
  if (scores.empty()) throw DomainError("eg_mean: empty input");
  long total = 0;
  for (int s : scores) {
    if (s < 0 || s > 2) throw DomainError("eg_mean: score outside {0,1,2}");
    total += s;
  }
  return static_cast<double>(total) / static_cast<double>(scores.size());
}

EvalReport eval_report(std::span<const EvalItem> items, TaskKind task) {
  if (items.empty()) throw DomainError("eval_report: no records");
  EvalReport rep;
  rep.task = task;
  rep.n = items.size();

  std::size_t hits = 0;
  std::vector<std::pair<ParsedJudgment, GroundTruth>> dim_records;
  std::array<std::vector<double>, MosVector::kAspects> pred_aspect, truth_aspect;
  std::vector<int> egs;

  for (const auto& item : items) {
    if (item.truth.task != task) throw DomainError("eval_report: mixed tasks");
    validate(item.truth);
    if (item.eg) egs.push_back(*item.eg);
    const auto* parsed = std::get_if<ParsedJudgment>(&item.prediction);
    if (!parsed) {
      ++rep.failed;
      continue;
    }
    if (parsed->task != task) throw DomainError("eval_report: mixed tasks");
    ++rep.parsed;
    if (is_pairwise(task)) {
      hits += parsed->answer_pref == item.truth.pairwise->label;
      if (parsed->candidate_a && parsed->candidate_b) {
        dim_records.emplace_back(*parsed, item.truth);
      }
    } else {
      const auto p = parsed->answer_mos->values();
      const auto t = item.truth.mos->values();
      hits += bin_mos(p.back()) == bin_mos(t.back());
      for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
        pred_aspect[k].push_back(p[k]);
        truth_aspect[k].push_back(t[k]);
      }
    }
  }

  rep.accuracy = static_cast<double>(hits) / static_cast<double>(rep.n);
  if (is_pairwise(task)) {
    if (!dim_records.empty()) rep.dim_accuracy = dim_accuracy(dim_records);
  } else {
    std::array<std::optional<double>, MosVector::kAspects> per;
    for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
      per[k] = pcc_or_absent(pred_aspect[k], truth_aspect[k]);
    }
    rep.pcc_overall = per.back();
    rep.pcc_per_aspect = per;
  }
  if (!egs.empty()) rep.eg_mean = eg_mean(egs);
  return rep;
}

json EvalReport::to_json() const {
  json j;
  j["task"] = task_code(task);
  j["n"] = n;
  j["parsed"] = parsed;
  j["failed"] = failed;
  j["accuracy"] = optional_json(accuracy);
  if (!is_pairwise(task)) {
    j["pcc_overall"] = optional_json(pcc_overall);
    json aspects = json::object();
    if (pcc_per_aspect) {
      for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
        aspects[std::string(MosVector::kKeys[k])] = optional_json((*pcc_per_aspect)[k]);
      }
    }
    j["pcc_per_aspect"] = aspects;
  }
  if (dim_accuracy) {
    const auto& names = schema_for(task).dimensions;
    json dims = json::object();
    for (std::size_t i = 0; i < dim_accuracy->per_dim.size(); ++i) {
      dims[names[i]] = optional_json(dim_accuracy->per_dim[i]);
    }
    dims["AVG"] = optional_json(dim_accuracy->avg);
    j["dim_accuracy"] = dims;
  }
  if (eg_mean) j["eg_mean"] = *eg_mean;
  return j;
}

std::string EvalReport::to_table() const {
  std::vector<std::pair<std::string, std::string>> cols;
  cols.emplace_back("task", std::string(task_code(task)));
  cols.emplace_back("n", std::to_string(n));
  cols.emplace_back("failed", std::to_string(failed));
  cols.emplace_back("acc", percent(accuracy));
  if (!is_pairwise(task)) {
    cols.emplace_back("pcc", plain(pcc_overall, 3));
  }
  if (eg_mean) cols.emplace_back("EG_mean", fixed(*eg_mean, 2));

  std::vector<std::pair<std::string, std::string>> detail;
  if (pcc_per_aspect) {
    for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
      detail.emplace_back(std::string(MosVector::kKeys[k]), plain((*pcc_per_aspect)[k], 3));
    }
  }
  if (dim_accuracy) {
    const auto& names = schema_for(task).dimensions;
    for (std::size_t i = 0; i < dim_accuracy->per_dim.size(); ++i) {
      detail.emplace_back(names[i], percent(dim_accuracy->per_dim[i]));
    }
    detail.emplace_back("AVG", percent(dim_accuracy->avg));
  }

  auto row = [](const std::vector<std::pair<std::string, std::string>>& c) {
    std::string head, vals;
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::size_t w = std::max(c[i].first.size(), c[i].second.size());
      std::string sep = i + 1 < c.size() ? "  " : "";
      head += c[i].first + std::string(w - c[i].first.size(), ' ') + sep;
      vals += std::string(w - c[i].second.size(), ' ') + c[i].second + sep;
    }
    return head + "\n" + vals + "\n";
  };

  std::string out = row(cols);
  if (!detail.empty()) out += "\n" + row(detail);
  return out;
}

json to_json(const GroundTruth& truth) {
  json j;
  if (truth.pairwise) {
    j["label"] = label_code(truth.pairwise->label);
    json a = json::array(), b = json::array();
    for (double v : truth.pairwise->a_star.values) a.push_back(number_json(v));
    for (double v : truth.pairwise->b_star.values) b.push_back(number_json(v));
    j["dims_a"] = a;
    j["dims_b"] = b;
  } else if (truth.mos) {
    const auto v = truth.mos->values();
    for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
      j[std::string(MosVector::kKeys[k])] = v[k];
    }
  }
  return j;
}

GroundTruth ground_truth_from_json(const json& j, TaskKind task) {
  if (!j.is_object()) throw SchemaError("truth must be an object");
  GroundTruth t;
  if (is_pairwise(task)) {
    if (!j.contains("label") || !j["label"].is_string()) {
      throw SchemaError("truth.label must be \"A\" or \"B\"");
    }
    t = GroundTruth::make_pairwise(task, dims_field(j, "dims_a"), dims_field(j, "dims_b"),
                                   parse_label_code(j["label"].get<std::string>()));
  } else {
    std::array<int, MosVector::kAspects> v{};
    for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
      std::string key(MosVector::kKeys[k]);
      if (!j.contains(key) || !j[key].is_number_integer()) {
        throw SchemaError("truth." + key + " must be an integer");
      }
      v[k] = j[key].get<int>();
    }
    t = GroundTruth::make_mos(MosVector::from_values(v));
  }
  validate(t);
  return t;
}

json to_json(const RewardBreakdown& r) {
  json j;
  j["r_fmt"] = number_json(r.r_fmt);
  j["r_acc"] = number_json(r.r_acc);
  j["r_rc"] = number_json(r.r_rc);
  j["total"] = number_json(r.total);
  j["parse_ok"] = r.parse_ok;
  return j;
}

EvalItem eval_item_from_json(const json& j, TaskKind task) {
  if (!j.is_object()) throw SchemaError("record must be an object");
  if (j.contains("task")) {
    if (!j["task"].is_string() || parse_task_code(j["task"].get<std::string>()) != task) {
      throw SchemaError("record task does not match --task");
    }
  }
  if (!j.contains("raw") || !j["raw"].is_string()) throw SchemaError("raw must be a string");
  if (!j.contains("truth")) throw SchemaError("missing truth");
  EvalItem item{parse_judgment(j["raw"].get<std::string>(), task),
                ground_truth_from_json(j["truth"], task), std::nullopt};
  if (j.contains("eg")) {
    if (!j["eg"].is_number_integer()) throw SchemaError("eg must be an integer");
    item.eg = j["eg"].get<int>();
  }
  return item;
}

}  // namespace srm
