#include "srm/parser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace srm {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kSummaryHeader = "[Comparison summary]";
constexpr std::string_view kAspectHeader = "[Aspect descriptions]";
constexpr std::string_view kDescriptionHeader = "[Natural language description]";
constexpr std::string_view kAnswerA = "Speech A is better";
constexpr std::string_view kAnswerB = "Speech B is better";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::size_t skip_space(std::string_view s, std::size_t pos) {
  while (pos < s.size() && is_space(s[pos])) ++pos;
  return pos;
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

bool contains_tag(std::string_view s) {
  for (auto tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    if (s.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

// Lowercase and collapse whitespace runs so "speaker  similarity" matches.
std::string fold_name(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(
        (c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c));
  }
  return out;
}

FormatError error(FormatErrorKind kind, std::size_t at, std::string detail) {
  return FormatError{kind, at, std::move(detail)};
}

// --- envelope --------------------------------------------------------------

struct Span {
  std::size_t begin;
  std::size_t end;
};

struct AnswerSpan {
  Span body;
  std::optional<FormatError> trailing;  // defect after </answer>, if any
};

std::variant<Span, FormatError> scan_think(std::string_view raw) {
  std::size_t p = skip_space(raw, 0);
  if (raw.substr(p).substr(0, kThinkOpen.size()) != kThinkOpen) {
    if (raw.find(kThinkOpen) == std::string_view::npos) {
      return error(FormatErrorKind::MissingThink, p, "no <think> block");
    }
    return error(FormatErrorKind::ExtraContent, p, "text before <think>");
  }
  std::size_t body = p + kThinkOpen.size();
  std::size_t close = raw.find(kThinkClose, body);
  std::size_t dup = raw.find(kThinkOpen, body);
  if (dup != std::string_view::npos &&
      (close == std::string_view::npos || dup < close)) {
    return error(FormatErrorKind::DuplicateBlock, dup, "nested <think> tag");
  }
  if (close == std::string_view::npos) {
    return error(FormatErrorKind::MissingThink, raw.size(),
                 "unterminated <think> block");
  }
  for (auto tag : {kAnswerOpen, kAnswerClose}) {
    std::size_t at = raw.substr(0, close).find(tag, body);
    if (at != std::string_view::npos) {
      return error(FormatErrorKind::ExtraContent, at,
                   "answer tag inside the reasoning block");
    }
  }
  return Span{body, close};
}

std::variant<AnswerSpan, FormatError> scan_answer(std::string_view raw,
                                                  std::size_t from) {
  std::size_t p = skip_space(raw, from);
  auto rest = raw.substr(p);
  if (rest.starts_with(kThinkOpen) || rest.starts_with(kThinkClose)) {
    return error(FormatErrorKind::DuplicateBlock, p, "second <think> block");
  }
  if (!rest.starts_with(kAnswerOpen)) {
    if (rest.empty() || rest.find(kAnswerOpen) == std::string_view::npos) {
      return error(FormatErrorKind::MissingAnswer, p, "no <answer> block");
    }
    return error(FormatErrorKind::ExtraContent, p,
                 "text between </think> and <answer>");
  }
  std::size_t body = p + kAnswerOpen.size();
  std::size_t close = raw.find(kAnswerClose, body);
  std::size_t dup = raw.find(kAnswerOpen, body);
  if (dup != std::string_view::npos &&
      (close == std::string_view::npos || dup < close)) {
    return error(FormatErrorKind::DuplicateBlock, dup, "nested <answer> tag");
  }
  if (close == std::string_view::npos) {
    return error(FormatErrorKind::MissingAnswer, raw.size(),
                 "unterminated <answer> block");
  }
  AnswerSpan span{{body, close}, std::nullopt};
  std::size_t q = skip_space(raw, close + kAnswerClose.size());
  if (q < raw.size()) {
    auto tail = raw.substr(q);
    if (tail.starts_with(kAnswerOpen) || tail.starts_with(kThinkOpen)) {
      span.trailing = error(FormatErrorKind::DuplicateBlock, q,
                            "second block after </answer>");
    } else {
      span.trailing =
          error(FormatErrorKind::ExtraContent, q, "text after </answer>");
    }
  }
  return span;
}

// --- answer bodies ---------------------------------------------------------

std::variant<PreferenceLabel, FormatError> parse_preference_answer(
    std::string_view raw, Span body) {
  auto text = raw.substr(body.begin, body.end - body.begin);
  if (text == kAnswerA) return PreferenceLabel::SpeechA;
  if (text == kAnswerB) return PreferenceLabel::SpeechB;
  return error(FormatErrorKind::BadAnswerString, body.begin,
               "answer must be exactly \"Speech A is better\" or \"Speech B is "
               "better\"");
}

bool is_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::variant<MosVector, FormatError> parse_mos_answer(std::string_view raw,
                                                      Span span) {
  auto body = raw.substr(span.begin, span.end - span.begin);
  std::size_t pos = 0;
  std::array<int, MosVector::kAspects> values{};
  for (std::size_t k = 0; k < MosVector::kAspects; ++k) {
    const auto expected = MosVector::kKeys[k];
    if (k > 0) {
      while (pos < body.size() && body[pos] == ' ') ++pos;
    }
    std::size_t key_begin = pos;
    while (pos < body.size() && is_key_char(body[pos])) ++pos;
    auto key = body.substr(key_begin, pos - key_begin);
    if (key.empty() && pos < body.size()) {
      return error(FormatErrorKind::BadAnswerString, span.begin + pos,
                   "unexpected character in aspect list");
    }
    if (key != expected) {
      return error(FormatErrorKind::MissingAspectKey, span.begin + key_begin,
                   "expected key '" + std::string(expected) + "'");
    }
    if (pos >= body.size() || body[pos] != '=') {
      return error(FormatErrorKind::BadAnswerString, span.begin + pos,
                   "expected '=' after '" + std::string(expected) + "'");
    }
    ++pos;
    std::size_t value_begin = pos;
    while (pos < body.size() && body[pos] != ';') ++pos;
    auto token = trim(body.substr(value_begin, pos - value_begin));
    std::size_t token_at = span.begin + value_begin;
    bool integral = !token.empty();
    for (std::size_t i = 0; i < token.size(); ++i) {
      bool sign = i == 0 && (token[i] == '-' || token[i] == '+') && token.size() > 1;
      if (!sign && !is_digit(token[i])) integral = false;
    }
    if (!integral) {
      return error(FormatErrorKind::NonIntegerAspect, token_at,
                   "aspect '" + std::string(expected) + "' must be an integer");
    }
    int value = 0;
    auto digits = token[0] == '+' ? token.substr(1) : token;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || value < MosVector::kMin || value > MosVector::kMax) {
      return error(FormatErrorKind::ScoreOutOfRange, token_at,
                   "aspect '" + std::string(expected) + "' must be in [1,5]");
    }
    values[k] = value;
    if (pos >= body.size()) {
      if (k + 1 == MosVector::kAspects) {
        return error(FormatErrorKind::BadDimensionLine, span.begin + pos,
                     "missing ';' after overall");
      }
      return error(FormatErrorKind::MissingAspectKey, span.begin + pos,
                   "expected key '" + std::string(MosVector::kKeys[k + 1]) + "'");
    }
    ++pos;  // ';'
  }
  if (pos != body.size()) {
    return error(FormatErrorKind::BadAnswerString, span.begin + pos,
                 "unexpected text after the seven aspects");
  }
  return MosVector::from_values(values);
}

// --- reasoning bodies ------------------------------------------------------

struct Line {
  std::string_view text;  // trimmed
  std::size_t offset;     // offset of `text` in the raw input
};

// Splits [begin, end) into trimmed lines, dropping blank ones.
std::vector<Line> split_lines(std::string_view raw, Span span) {
  std::vector<Line> lines;
  std::size_t p = span.begin;
  while (p < span.end) {
    std::size_t nl = raw.find('\n', p);
    if (nl == std::string_view::npos || nl > span.end) nl = span.end;
    auto line = raw.substr(p, nl - p);
    auto t = trim(line);
    if (!t.empty()) {
      lines.push_back(Line{t, p + static_cast<std::size_t>(t.data() - line.data())});
    }
    p = nl + 1;
  }
  return lines;
}

struct Number {
  double value;
  std::size_t length;
};

// [+-]?digits[.digits] at the front of `s`.
std::optional<Number> read_number(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) ++i;
  std::size_t digits_begin = i;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i == digits_begin) return std::nullopt;
  if (i < s.size() && s[i] == '.') {
    std::size_t frac = ++i;
    while (i < s.size() && is_digit(s[i])) ++i;
    if (i == frac) return std::nullopt;
  }
  auto token = s.substr(0, i);
  if (token[0] == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || !std::isfinite(value)) return std::nullopt;
  return Number{value, i};
}

bool nearly_equal(double a, double b) {
  return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

struct PairwiseLayout {
  std::string_view header_a;
  std::string_view header_b;
  std::string_view total_a;
  std::string_view total_b;
  bool numbered;  // "1) " prefixes; otherwise "- "
};

PairwiseLayout layout_for(TaskKind task) {
  if (task == TaskKind::DialoguePreference) {
    return {"[Speech A evaluation]", "[Speech B evaluation]",
            "- Total score for Speech A", "- Total score for Speech B", false};
  }
  return {"[Speech A]", "[Speech B]", "Total_A", "Total_B", true};
}

class PairwiseBodyParser {
 public:
  PairwiseBodyParser(std::string_view raw, Span span, TaskKind task)
      : lines_(split_lines(raw, span)),
        schema_(schema_for(task)),
        layout_(layout_for(task)),
        end_offset_(span.end) {}

  std::optional<FormatError> run(ParsedJudgment& out) {
    if (auto e = expect_header(layout_.header_a)) return e;
    CandidateJudgment a;
    if (auto e = candidate(layout_.total_a, a)) return e;
    if (auto e = expect_header(layout_.header_b)) return e;
    CandidateJudgment b;
    if (auto e = candidate(layout_.total_b, b)) return e;
    if (auto e = expect_header(kSummaryHeader)) return e;
    std::string summary;
    if (next_ < lines_.size()) {
      const auto& first = lines_[next_];
      const auto& last = lines_.back();
      auto start = first.text.data();
      auto stop = last.text.data() + last.text.size();
      summary.assign(start, static_cast<std::size_t>(stop - start));
    }
    out.candidate_a = std::move(a);
    out.candidate_b = std::move(b);
    out.comparison_summary = std::move(summary);
    return std::nullopt;
  }

 private:
  std::size_t here() const {
    return next_ < lines_.size() ? lines_[next_].offset : end_offset_;
  }

  std::optional<FormatError> expect_header(std::string_view header) {
    if (next_ >= lines_.size() || lines_[next_].text != header) {
      return error(FormatErrorKind::BadDimensionLine, here(),
                   "expected section header " + std::string(header));
    }
    ++next_;
    return std::nullopt;
  }

  std::optional<FormatError> candidate(std::string_view total_label,
                                       CandidateJudgment& out) {
    for (std::size_t i = 0; i < schema_.count(); ++i) {
      if (auto e = dimension_line(i, out)) return e;
    }
    return total_line(total_label, out);
  }

  std::optional<FormatError> dimension_line(std::size_t index,
                                            CandidateJudgment& out) {
    const std::string& name = schema_.dimensions[index];
    auto bad = [&](std::size_t at, std::string why) {
      return error(FormatErrorKind::BadDimensionLine, at,
                   "dimension '" + name + "': " + why);
    };
    if (next_ >= lines_.size()) return bad(here(), "line missing");
    const Line& line = lines_[next_++];
    std::string_view s = line.text;
    std::size_t base = line.offset;
    std::size_t p = 0;

    std::string prefix =
        layout_.numbered ? std::to_string(index + 1) + ")" : std::string("-");
    if (!s.starts_with(prefix) || s.size() == prefix.size() ||
        !is_space(s[prefix.size()])) {
      return bad(base, "expected prefix '" + prefix + " '");
    }
    p = prefix.size();
    std::size_t colon = s.find(':', p);
    if (colon == std::string_view::npos) return bad(base + p, "missing ':'");
    if (fold_name(s.substr(p, colon - p)) != fold_name(name)) {
      return bad(base + p, "unexpected dimension name");
    }
    p = colon + 1;
    while (p < s.size() && s[p] == ' ') ++p;
    constexpr std::string_view kScore = "score=";
    if (!s.substr(p).starts_with(kScore)) return bad(base + p, "expected 'score='");
    p += kScore.size();
    auto number = read_number(s.substr(p));
    if (!number) return bad(base + p, "score is not a number");
    if (!schema_.in_range(number->value)) {
      return error(FormatErrorKind::ScoreOutOfRange, base + p,
                   "dimension '" + name + "' score outside [" +
                       format_score(schema_.score_min) + "," +
                       format_score(schema_.score_max) + "]");
    }
    p += number->length;
    std::string denominator = "/" + format_score(schema_.score_max);
    if (!s.substr(p).starts_with(denominator)) {
      return bad(base + p, "expected '" + denominator + "'");
    }
    p += denominator.size();
    if (p >= s.size() || s[p] != ';') return bad(base + p, "expected ';'");
    ++p;
    while (p < s.size() && s[p] == ' ') ++p;
    constexpr std::string_view kExplanation = "explanation:";
    if (!s.substr(p).starts_with(kExplanation)) {
      return bad(base + p, "expected 'explanation:'");
    }
    p += kExplanation.size();
    out.scores.values.push_back(number->value);
    out.explanations.emplace_back(trim(s.substr(p)));
    return std::nullopt;
  }

  std::optional<FormatError> total_line(std::string_view label,
                                        CandidateJudgment& out) {
    auto bad = [&](std::size_t at, std::string why) {
      return error(FormatErrorKind::BadDimensionLine, at,
                   std::string(label) + ": " + why);
    };
    if (next_ >= lines_.size()) return bad(here(), "total line missing");
    const Line& line = lines_[next_++];
    std::string_view s = line.text;
    std::size_t base = line.offset;
    if (!s.starts_with(label)) return bad(base, "expected total line");
    std::size_t p = label.size();
    auto skip = [&] {
      while (p < s.size() && s[p] == ' ') ++p;
    };
    skip();
    if (p >= s.size() || s[p] != '=') return bad(base + p, "expected '='");
    ++p;
    skip();

    std::vector<std::pair<double, std::size_t>> terms;
    auto first = read_number(s.substr(p));
    if (!first) return bad(base + p, "expected a number");
    terms.emplace_back(first->value, base + p);
    p += first->length;
    skip();
    double stated = first->value;
    std::size_t stated_at = terms.front().second;
    bool has_expression = p < s.size() && s[p] == '+';
    if (has_expression) {
      while (p < s.size() && s[p] == '+') {
        ++p;
        skip();
        auto term = read_number(s.substr(p));
        if (!term) return bad(base + p, "expected a number");
        terms.emplace_back(term->value, base + p);
        p += term->length;
        skip();
      }
      if (p >= s.size() || s[p] != '=') return bad(base + p, "expected '='");
      ++p;
      skip();
      auto result = read_number(s.substr(p));
      if (!result) return bad(base + p, "expected the total");
      stated = result->value;
      stated_at = base + p;
      p += result->length;
      skip();
    }
    if (p != s.size()) return bad(base + p, "unexpected text after the total");

    const auto& scores = out.scores.values;
    if (has_expression) {
      if (terms.size() != scores.size()) {
        return error(FormatErrorKind::TotalMismatch, terms.front().second,
                     std::string(label) + ": expected " +
                         std::to_string(scores.size()) + " summands");
      }
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (!nearly_equal(terms[i].first, scores[i])) {
          return error(FormatErrorKind::TotalMismatch, terms[i].second,
                       std::string(label) + ": summand " + std::to_string(i + 1) +
                           " differs from the dimension score");
        }
      }
    }
    double sum = 0.0;
    for (double v : scores) sum += v;
    if (!nearly_equal(sum, stated)) {
      return error(FormatErrorKind::TotalMismatch, stated_at,
                   std::string(label) + ": stated " + format_score(stated) +
                       " but dimension scores sum to " + format_score(sum));
    }
    out.total = stated;
    return std::nullopt;
  }

  std::vector<Line> lines_;
  const DimensionSchema& schema_;
  PairwiseLayout layout_;
  std::size_t end_offset_;
  std::size_t next_ = 0;
};

std::optional<std::string> aspect_descriptions_of(std::string_view think) {
  std::size_t p = 0;
  std::optional<std::size_t> start;
  while (p <= think.size()) {
    std::size_t nl = think.find('\n', p);
    if (nl == std::string_view::npos) nl = think.size();
    auto line = trim(think.substr(p, nl - p));
    if (!start) {
      if (line == kAspectHeader) start = nl;
    } else if (line == kDescriptionHeader) {
      return std::string(trim(think.substr(*start, p - *start)));
    }
    p = nl + 1;
  }
  if (start) return std::string(trim(think.substr(*start)));
  return std::nullopt;
}

}  // namespace

std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::MissingThink: return "MissingThink";
    case FormatErrorKind::MissingAnswer: return "MissingAnswer";
    case FormatErrorKind::ExtraContent: return "ExtraContent";
    case FormatErrorKind::BadDimensionLine: return "BadDimensionLine";
    case FormatErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
    case FormatErrorKind::TotalMismatch: return "TotalMismatch";
    case FormatErrorKind::BadAnswerString: return "BadAnswerString";
    case FormatErrorKind::MissingAspectKey: return "MissingAspectKey";
    case FormatErrorKind::NonIntegerAspect: return "NonIntegerAspect";
    case FormatErrorKind::DuplicateBlock: return "DuplicateBlock";
  }
  return "Unknown";
}

std::string_view answer_literal(PreferenceLabel label) {
  return label == PreferenceLabel::SpeechA ? kAnswerA : kAnswerB;
}

std::string format_score(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

ParseResult parse_judgment(std::string_view raw, TaskKind task) {
  auto think = scan_think(raw);
  if (auto* e = std::get_if<FormatError>(&think)) return *e;
  Span think_span = std::get<Span>(think);
  auto think_text = trim(raw.substr(think_span.begin, think_span.end - think_span.begin));

  ParsedJudgment out;
  out.task = task;
  out.think_text = std::string(think_text);
  if (think_text.empty()) {
    return error(FormatErrorKind::MissingThink, think_span.begin,
                 "empty reasoning block");
  }
  if (is_pairwise(task)) {
    PairwiseBodyParser body(raw, think_span, task);
    if (auto e = body.run(out)) return *e;
  } else {
    out.aspect_descriptions = aspect_descriptions_of(think_text);
  }

  auto answer = scan_answer(raw, think_span.end + kThinkClose.size());
  if (auto* e = std::get_if<FormatError>(&answer)) return *e;
  const auto& span = std::get<AnswerSpan>(answer);
  if (is_pairwise(task)) {
    auto label = parse_preference_answer(raw, span.body);
    if (auto* e = std::get_if<FormatError>(&label)) return *e;
    out.answer_pref = std::get<PreferenceLabel>(label);
  } else {
    auto mos = parse_mos_answer(raw, span.body);
    if (auto* e = std::get_if<FormatError>(&mos)) return *e;
    out.answer_mos = std::get<MosVector>(mos);
  }
  if (span.trailing) return *span.trailing;
  return out;
}

AnswerResult extract_answer(std::string_view raw, TaskKind task) {
  auto think = scan_think(raw);
  if (auto* e = std::get_if<FormatError>(&think)) return *e;
  Span think_span = std::get<Span>(think);
  auto answer = scan_answer(raw, think_span.end + kThinkClose.size());
  if (auto* e = std::get_if<FormatError>(&answer)) return *e;
  const auto& span = std::get<AnswerSpan>(answer);
  AnswerResult result = FormatError{};
  if (is_pairwise(task)) {
    std::visit([&](auto&& v) { result = v; }, parse_preference_answer(raw, span.body));
  } else {
    std::visit([&](auto&& v) { result = v; }, parse_mos_answer(raw, span.body));
  }
  if (!std::holds_alternative<FormatError>(result) && span.trailing) {
    return *span.trailing;
  }
  return result;
}

// --- rendering -------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw SchemaError("render_judgment: " + what);
}

void require_clean_text(std::string_view s, bool single_line,
                        const std::string& what) {
  require(trim(s) == s, what + " has leading/trailing whitespace");
  require(!contains_tag(s), what + " contains a block tag");
  if (single_line) require(s.find('\n') == std::string_view::npos, what + " spans lines");
}

void check_candidate(const CandidateJudgment& c, const DimensionSchema& schema,
                     const std::string& who) {
  validate(c.scores, schema);
  require(c.explanations.size() == schema.count(),
          who + " needs one explanation per dimension");
  for (const auto& e : c.explanations) require_clean_text(e, true, who + " explanation");
  double sum = 0.0;
  for (double v : c.scores.values) sum += v;
  require(nearly_equal(sum, c.total), who + " total differs from the score sum");
}

void render_candidate(std::string& out, const CandidateJudgment& c,
                      const DimensionSchema& schema, const PairwiseLayout& layout,
                      std::string_view header, std::string_view total_label) {
  out += header;
  out += '\n';
  for (std::size_t i = 0; i < schema.count(); ++i) {
    out += layout.numbered ? std::to_string(i + 1) + ") " : std::string("- ");
    out += schema.dimensions[i];
    out += ": score=" + format_score(c.scores.values[i]) + "/" +
           format_score(schema.score_max) + "; explanation:";
    if (!c.explanations[i].empty()) out += " " + c.explanations[i];
    out += '\n';
  }
  out += total_label;
  out += " = ";
  for (std::size_t i = 0; i < c.scores.size(); ++i) {
    if (i) out += '+';
    out += format_score(c.scores.values[i]);
  }
  out += " = " + format_score(c.total) + "\n";
}

std::string render_mos_answer(const MosVector& m) {
  std::string out;
  auto values = m.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ' ';
    out += std::string(MosVector::kKeys[k]) + "=" + std::to_string(values[k]) + ";";
  }
  return out;
}

}  // namespace

std::string render_pairwise_think(const ParsedJudgment& j) {
  require(is_pairwise(j.task), "not a pairwise task");
  require(j.candidate_a && j.candidate_b, "pairwise judgment needs both candidates");
  require(j.comparison_summary.has_value(), "pairwise judgment needs a summary");
  const auto& schema = schema_for(j.task);
  auto layout = layout_for(j.task);
  check_candidate(*j.candidate_a, schema, "candidate A");
  check_candidate(*j.candidate_b, schema, "candidate B");
  require_clean_text(*j.comparison_summary, false, "comparison summary");

  std::string out;
  render_candidate(out, *j.candidate_a, schema, layout, layout.header_a, layout.total_a);
  render_candidate(out, *j.candidate_b, schema, layout, layout.header_b, layout.total_b);
  out += kSummaryHeader;
  if (!j.comparison_summary->empty()) out += "\n" + *j.comparison_summary;
  return out;
}

RenderedJudgment render_judgment(const ParsedJudgment& j) {
  RenderedJudgment r;
  if (is_pairwise(j.task)) {
    require(j.answer_pref.has_value(), "pairwise judgment needs a preference answer");
    require(!j.answer_mos && !j.aspect_descriptions,
            "pairwise judgment carries T2-only fields");
    r.text = "<think>\n" + render_pairwise_think(j) + "\n</think>\n<answer>" +
             std::string(answer_literal(*j.answer_pref)) + "</answer>";
    r.tie_warning = j.tie_warning();
  } else {
    require(j.answer_mos.has_value(), "T2 judgment needs a MOS answer");
    require(!j.answer_pref && !j.candidate_a && !j.candidate_b && !j.comparison_summary,
            "T2 judgment carries pairwise-only fields");
    validate(*j.answer_mos);
    require(!j.think_text.empty(), "T2 judgment needs reasoning text");
    require_clean_text(j.think_text, false, "reasoning");
    require(aspect_descriptions_of(j.think_text) == j.aspect_descriptions,
            "aspect descriptions disagree with the reasoning text");
    r.text = "<think>\n" + j.think_text + "\n</think>\n<answer>" +
             render_mos_answer(*j.answer_mos) + "</answer>";
  }
  return r;
}

ParsedJudgment make_pairwise_judgment(TaskKind task, DimScores a, DimScores b,
                                      PreferenceLabel answer,
                                      std::vector<std::string> explanations_a,
                                      std::vector<std::string> explanations_b,
                                      std::string summary) {
  auto total = [](const DimScores& s) {
    double t = 0.0;
    for (double v : s.values) t += v;
    return t;
  };
  ParsedJudgment j;
  j.task = task;
  double ta = total(a);
  double tb = total(b);
  j.candidate_a = CandidateJudgment{std::move(a), std::move(explanations_a), ta};
  j.candidate_b = CandidateJudgment{std::move(b), std::move(explanations_b), tb};
  j.comparison_summary = std::move(summary);
  j.answer_pref = answer;
  j.think_text = render_pairwise_think(j);
  return j;
}

ParsedJudgment make_mos_judgment(MosVector answer, std::string aspect_descriptions,
                                 std::string quality_paragraph) {
  ParsedJudgment j;
  j.task = TaskKind::QualityAssessment;
  j.answer_mos = answer;
  j.think_text = std::string(kAspectHeader) + "\n" + aspect_descriptions + "\n\n" +
                 std::string(kDescriptionHeader) + "\n" + quality_paragraph;
  j.think_text = std::string(trim(j.think_text));
  j.aspect_descriptions = aspect_descriptions_of(j.think_text);
  return j;
}

}  // namespace srm
