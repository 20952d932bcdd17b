// SPDX-License-Identifier: Apache-2.0

#include "erprm/chain_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <system_error>

#include "erprm/errors.hpp"
#include "json_io.hpp"

namespace erprm {

using json_io::Json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : trim_view(s)) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Line {
  std::size_t offset;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({start, line});
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

struct StepHeader {
  std::size_t number;
  std::size_t content_pos;  // within the line
};

// "<label> <digits>:" after optional leading whitespace.
std::optional<StepHeader> match_header(std::string_view line, std::string_view label) {
  std::size_t pos = 0;
  while (pos < line.size() && is_space(line[pos])) ++pos;
  if (line.substr(pos, label.size()) != label) return std::nullopt;
  pos += label.size();
  const std::size_t gap = pos;
  while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  if (pos == gap && !label.empty()) return std::nullopt;
  const std::size_t digits = pos;
  std::size_t number = 0;
  while (pos < line.size() && is_digit(line[pos])) {
    if (pos - digits >= 9) return std::nullopt;
    number = number * 10 + static_cast<std::size_t>(line[pos] - '0');
    ++pos;
  }
  if (pos == digits || pos >= line.size() || line[pos] != ':') return std::nullopt;
  return StepHeader{number, pos + 1};
}

[[noreturn]] void parse_failure(std::size_t offset, const std::string& why) {
  throw DataError("chain parse error at offset " + std::to_string(offset) + ": " + why);
}

std::string join_trimmed(const std::vector<std::string_view>& parts) {
  std::string joined;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) joined.push_back('\n');
    joined.append(parts[i]);
  }
  return std::string(trim_view(joined));
}

// Index of the closing brace matching the '{' at `open`, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int level = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') ++level;
    if (s[i] == '}' && --level == 0) return i;
  }
  return std::string_view::npos;
}

constexpr std::string_view kBoxed = "\\boxed{";
constexpr std::string_view kMarker = "the answer is";

std::optional<std::string> last_boxed(std::string_view s) {
  const std::size_t at = s.rfind(kBoxed);
  if (at == std::string_view::npos) return std::nullopt;
  const std::size_t open = at + kBoxed.size() - 1;
  const std::size_t close = matching_brace(s, open);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(s.substr(open + 1, close - open - 1));
}

std::optional<std::string> last_numeric_token(std::string_view s) {
  // Scan backwards for the last run of digits, then widen over sign, decimal
  // point, fraction slash and thousands separators.
  std::size_t end = s.size();
  while (end > 0 && !is_digit(s[end - 1])) --end;
  if (end == 0) return std::nullopt;
  std::size_t begin = end;
  while (begin > 0) {
    const char c = s[begin - 1];
    if (is_digit(c)) {
      --begin;
    } else if ((c == '.' || c == '/' || c == ',') && begin >= 2 && is_digit(s[begin - 2])) {
      --begin;
    } else {
      break;
    }
  }
  if (begin > 0 && s[begin - 1] == '-') --begin;
  std::string token;
  for (char c : s.substr(begin, end - begin)) {
    if (c != ',') token.push_back(c);
  }
  return token;
}

std::optional<double> parse_plain_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  if (s[0] == '-' || s[0] == '+') pos = 1;
  bool digits = false;
  bool dot = false;
  for (std::size_t i = pos; i < s.size(); ++i) {
    if (is_digit(s[i])) {
      digits = true;
    } else if (s[i] == '.' && !dot) {
      dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (!digits) return std::nullopt;
  return std::strtod(std::string(s).c_str(), nullptr);
}

std::optional<double> parse_numeric(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    if (c != ',' && !is_space(c)) s.push_back(c);
  }
  for (std::string_view frac : {"\\dfrac{", "\\frac{"}) {
    const bool negative = s.rfind('-', 0) == 0;
    const std::string_view body = std::string_view(s).substr(negative ? 1 : 0);
    if (body.substr(0, frac.size()) != frac) continue;
    const std::size_t open1 = frac.size() - 1;
    const std::size_t close1 = matching_brace(body, open1);
    if (close1 == std::string_view::npos || close1 + 1 >= body.size() || body[close1 + 1] != '{') {
      return std::nullopt;
    }
    const std::size_t close2 = matching_brace(body, close1 + 1);
    if (close2 != body.size() - 1) return std::nullopt;
    auto num = parse_plain_number(body.substr(open1 + 1, close1 - open1 - 1));
    auto den = parse_plain_number(body.substr(close1 + 2, close2 - close1 - 2));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return (negative ? -1.0 : 1.0) * *num / *den;
  }
  const std::size_t slash = s.find('/');
  if (slash != std::string::npos) {
    auto num = parse_plain_number(std::string_view(s).substr(0, slash));
    auto den = parse_plain_number(std::string_view(s).substr(slash + 1));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
  }
  return parse_plain_number(s);
}

}  // namespace

PartialChain prefix_of(const Chain& chain, std::size_t depth) {
  if (depth > chain.steps.size()) {
    throw PreconditionError("prefix depth " + std::to_string(depth) + " exceeds chain length " +
                            std::to_string(chain.steps.size()));
  }
  return {chain.problem_id,
          std::vector<std::string>(chain.steps.begin(), chain.steps.begin() + static_cast<std::ptrdiff_t>(depth))};
}

Chain make_chain(std::string problem_id, std::vector<std::string> steps) {
  if (steps.empty()) throw PreconditionError("a chain needs at least one step");
  Chain chain{std::move(problem_id), std::move(steps), {}};
  chain.final_answer = extract_final_answer(chain.steps.back());
  return chain;
}

Chain parse_chain_text(std::string_view text, std::string problem_id, const StepFormat& format) {
  if (trim_view(text).empty()) parse_failure(0, "empty text");

  const auto lines = split_lines(text);
  std::vector<std::string> steps;
  std::vector<std::string_view> current;
  std::size_t current_offset = 0;
  bool labeled = false;

  auto flush = [&](std::size_t offset) {
    std::string step = join_trimmed(current);
    if (step.empty()) parse_failure(offset, "step " + std::to_string(steps.size() + 1) + " is empty");
    steps.push_back(std::move(step));
    current.clear();
  };

  for (const Line& line : lines) {
    if (auto header = match_header(line.text, format.label)) {
      if (header->number != steps.size() + (labeled ? 2 : 1)) {
        parse_failure(line.offset, "expected step " + std::to_string(steps.size() + (labeled ? 2 : 1)) +
                                       ", found step " + std::to_string(header->number));
      }
      if (labeled) flush(current_offset);
      // Text before the first labeled line is a preamble and is dropped.
      current.clear();
      labeled = true;
      current_offset = line.offset;
      current.push_back(line.text.substr(header->content_pos));
    } else {
      current.push_back(line.text);
    }
  }
  if (labeled) {
    flush(current_offset);
    return make_chain(std::move(problem_id), std::move(steps));
  }

  if (!format.blank_line_fallback) {
    const std::size_t first = static_cast<std::size_t>(text.find_first_not_of(" \t\r\n"));
    parse_failure(first, "no line starting with \"" + format.label + " 1:\"");
  }
  current.clear();
  for (const Line& line : lines) {
    if (trim_view(line.text).empty()) {
      if (!current.empty()) flush(current_offset);
      continue;
    }
    if (current.empty()) current_offset = line.offset;
    current.push_back(line.text);
  }
  if (!current.empty()) flush(current_offset);
  return make_chain(std::move(problem_id), std::move(steps));
}

std::string render_chain_text(std::span<const std::string> steps, const StepFormat& format) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out.push_back('\n');
    out += format.label;
    out += ' ';
    out += std::to_string(i + 1);
    out += ": ";
    out += steps[i];
  }
  return out;
}

std::string normalize_answer(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    if (c != '$') s.push_back(c);
  }
  // Peel wrappers until stable: "\boxed{5}." needs the period gone first.
  for (;;) {
    std::string before = s;
    s = std::string(trim_view(s));
    while (!s.empty() && s.back() == '.') s.pop_back();
    s = std::string(trim_view(s));
    if (s.rfind(kBoxed, 0) == 0) {
      const std::size_t close = matching_brace(s, kBoxed.size() - 1);
      if (close == s.size() - 1) s = s.substr(kBoxed.size(), close - kBoxed.size());
    }
    if (s == before) break;
  }
  return collapse_whitespace(s);
}

bool has_answer_marker(std::string_view text) {
  return to_lower(text).find(kMarker) != std::string::npos ||
         text.find(kBoxed) != std::string_view::npos;
}

std::string extract_final_answer(std::string_view last_step) {
  const std::string lower = to_lower(last_step);
  const std::size_t at = lower.rfind(kMarker);
  if (at != std::string::npos) {
    std::string answer = normalize_answer(last_step.substr(at + kMarker.size()));
    if (!answer.empty()) return answer;
  }
  if (auto boxed = last_boxed(last_step)) {
    std::string answer = normalize_answer(*boxed);
    if (!answer.empty()) return answer;
  }
  if (auto token = last_numeric_token(last_step)) return normalize_answer(*token);
  return std::string(kNoAnswer);
}

bool answers_match(std::string_view candidate, std::string_view gold) {
  if (candidate == kNoAnswer || gold == kNoAnswer) return false;
  if (candidate.empty() || gold.empty()) return false;
  if (candidate == gold) return true;
  const auto a = parse_numeric(candidate);
  const auto b = parse_numeric(gold);
  if (!a || !b) return false;
  const double scale = std::max(std::fabs(*a), std::fabs(*b));
  return std::fabs(*a - *b) <= 1e-6 * scale;
}

std::optional<double> AnnotatedStep::label(LabelMethod method) const {
  for (const auto& [m, v] : labels) {
    if (m == method) return v;
  }
  return std::nullopt;
}

void AnnotatedStep::set_label(LabelMethod method, double value) {
  auto it = std::lower_bound(labels.begin(), labels.end(), method,
                             [](const auto& entry, LabelMethod m) { return entry.first < m; });
  if (it != labels.end() && it->first == method) {
    it->second = value;
  } else {
    labels.insert(it, {method, value});
  }
}

std::string to_jsonl_line(const LabeledRecord& record) {
  Json annotations = Json::array();
  for (const AnnotatedStep& step : record.annotations) {
    Json labels = Json::object();
    for (const auto& [method, value] : step.labels) labels[std::string(to_string(method))] = value;
    annotations.push_back(Json{{"step", step.index},
                               {"k", step.correct},
                               {"n", step.total},
                               {"parse_failures", step.parse_failures},
                               {"labels", std::move(labels)}});
  }
  const Provenance& p = record.provenance;
  Json doc = Json::object();
  doc["id"] = record.problem.id;
  doc["statement"] = record.problem.statement;
  doc["gold_answer"] = record.problem.gold_answer;
  doc["steps"] = record.chain.steps;
  doc["annotations"] = std::move(annotations);
  doc["orm_label"] = record.orm_label;
  doc["provenance"] = Json{{"completer", p.completer},
                           {"eta", p.eta},
                           {"n", p.completions_per_step},
                           {"seed", p.seed},
                           {"solution", p.solution_index}};
  doc["schema_version"] = kLabeledSchemaVersion;
  return json_io::dump_line(doc);
}

namespace {

template <typename T>
T get_as(const Json& obj, const char* key, const std::string& where) {
  const Json& value = json_io::require(obj, key, where);
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

LabeledRecord from_jsonl_line(std::string_view line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number);
  Json doc;
  try {
    doc = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(where + ": malformed JSON (" + e.what() + ")");
  }
  if (!doc.is_object()) throw DataError(where + ": expected a JSON object");
  const auto version = get_as<std::string>(doc, "schema_version", where);
  if (version != kLabeledSchemaVersion) {
    throw DataError(where + ": schema version '" + version + "', expected '" +
                    std::string(kLabeledSchemaVersion) + "'");
  }

  LabeledRecord record;
  record.problem.id = get_as<std::string>(doc, "id", where);
  record.problem.statement = get_as<std::string>(doc, "statement", where);
  record.problem.gold_answer = get_as<std::string>(doc, "gold_answer", where);
  auto steps = get_as<std::vector<std::string>>(doc, "steps", where);
  if (steps.empty()) throw DataError(where + ": 'steps' is empty");
  record.chain = make_chain(record.problem.id, std::move(steps));

  const Json& annotations = json_io::require(doc, "annotations", where);
  if (!annotations.is_array() || annotations.size() != record.chain.steps.size()) {
    throw DataError(where + ": need one annotation per step");
  }
  for (const Json& a : annotations) {
    AnnotatedStep step;
    step.index = get_as<std::size_t>(a, "step", where);
    step.correct = get_as<std::size_t>(a, "k", where);
    step.total = get_as<std::size_t>(a, "n", where);
    step.parse_failures = get_as<std::size_t>(a, "parse_failures", where);
    if (step.index != record.annotations.size() + 1) {
      throw DataError(where + ": annotation steps out of order");
    }
    if (step.total == 0 || step.correct > step.total) {
      throw DataError(where + ": step " + std::to_string(step.index) + " needs 0 <= k <= n, n >= 1");
    }
    const Json& labels = json_io::require(a, "labels", where);
    if (!labels.is_object()) throw DataError(where + ": 'labels' must be an object");
    for (const auto& [name, value] : labels.items()) {
      LabelMethod method;
      try {
        method = parse_label_method(name);
      } catch (const UsageError&) {
        throw DataError(where + ": unknown label method '" + name + "'");
      }
      if (!value.is_number()) throw DataError(where + ": label '" + name + "' is not a number");
      step.set_label(method, value.get<double>());
    }
    record.annotations.push_back(std::move(step));
  }

  record.orm_label = get_as<int>(doc, "orm_label", where);
  if (record.orm_label != 0 && record.orm_label != 1) {
    throw DataError(where + ": orm_label must be 0 or 1");
  }
  const Json& prov = json_io::require(doc, "provenance", where);
  record.provenance.completer = get_as<std::string>(prov, "completer", where);
  record.provenance.eta = get_as<double>(prov, "eta", where);
  record.provenance.completions_per_step = get_as<std::size_t>(prov, "n", where);
  record.provenance.seed = get_as<std::uint64_t>(prov, "seed", where);
  record.provenance.solution_index = get_as<std::size_t>(prov, "solution", where);
  return record;
}

void write_labeled_jsonl(std::span<const LabeledRecord> records, std::ostream& out) {
  for (const auto& record : records) out << to_jsonl_line(record) << '\n';
}

std::vector<LabeledRecord> read_labeled_jsonl(std::istream& in) {
  std::vector<LabeledRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim_view(line).empty()) continue;
    records.push_back(from_jsonl_line(line, number));
  }
  return records;
}

std::string write_labeled_jsonl(std::span<const LabeledRecord> records) {
  std::ostringstream out;
  write_labeled_jsonl(records, out);
  return out.str();
}

std::vector<LabeledRecord> read_labeled_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_labeled_jsonl(in);
}

std::vector<Problem> read_problems_jsonl(std::istream& in) {
  std::vector<Problem> problems;
  std::string line;
  std::size_t number = 0;
  std::map<std::string, std::size_t, std::less<>> seen;
  while (std::getline(in, line)) {
    ++number;
    if (trim_view(line).empty()) continue;
    const std::string where = "problems line " + std::to_string(number);
    Json doc;
    try {
      doc = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!doc.is_object()) throw DataError(where + ": expected a JSON object");
    Problem p{get_as<std::string>(doc, "id", where), get_as<std::string>(doc, "statement", where),
              normalize_answer(get_as<std::string>(doc, "gold_answer", where))};
    if (p.gold_answer.empty()) throw DataError(where + ": gold_answer is empty");
    if (!seen.emplace(p.id, number).second) throw DataError(where + ": duplicate id '" + p.id + "'");
    problems.push_back(std::move(p));
  }
  return problems;
}

std::string problem_to_jsonl_line(const Problem& problem) {
  Json doc = Json::object();
  doc["id"] = problem.id;
  doc["statement"] = problem.statement;
  doc["gold_answer"] = problem.gold_answer;
  return json_io::dump_line(doc);
}

std::string render_math_shepherd(const LabeledRecord& record, const MathShepherdOptions& options) {
  const auto& steps = record.chain.steps;
  if (record.annotations.size() != steps.size()) {
    throw DataError("record '" + record.problem.id + "' is not fully annotated");
  }
  std::string input = record.problem.statement;
  std::string tags;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    input += i == 0 ? " " : "\n";
    input += "Step " + std::to_string(i + 1) + ": " + steps[i];
    const bool last = i + 1 == steps.size();
    if (options.outcome && !last) continue;
    input += " " + options.step_token;
    bool positive;
    if (options.outcome) {
      positive = record.orm_label == 1;
    } else {
      const auto value = record.annotations[i].label(options.method);
      if (!value) {
        throw DataError("record '" + record.problem.id + "' step " + std::to_string(i + 1) +
                        " has no '" + std::string(to_string(options.method)) + "' label");
      }
      positive = *value > 0.0 && *value >= options.threshold;
    }
    if (!tags.empty()) tags.push_back(' ');
    tags.push_back(positive ? '+' : '-');
  }
  return input + "\n" + tags + "\n";
}

void write_file_atomically(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  std::filesystem::path temp = target;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + temp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw DataError("failed writing '" + temp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(temp, target, ec);
  if (ec) throw DataError("cannot rename '" + temp.string() + "' to '" + path + "': " + ec.message());
}

}  // namespace erprm
