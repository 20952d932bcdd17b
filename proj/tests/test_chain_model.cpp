// SPDX-License-Identifier: Apache-2.0

#include <sstream>
#include <string>

#include "doctest.h"
#include "erprm/chain_model.hpp"
#include "erprm/errors.hpp"

using namespace erprm;

namespace {
LabeledRecord sample_record() {
  LabeledRecord r;
  r.problem = {"q1", "What is 2+3?", "5"};
  r.chain = make_chain("q1", {"2+3 means adding", "The answer is 5"});
  for (std::size_t l = 1; l <= 2; ++l) {
    AnnotatedStep a;
    a.index = l;
    a.correct = l == 1 ? 3 : 4;
    a.total = 4;
    a.set_label(LabelMethod::soft, static_cast<double>(a.correct) / 4.0);
    a.set_label(LabelMethod::er_softmax, 0.8125);
    a.set_label(LabelMethod::hard, 1.0);
    r.annotations.push_back(a);
  }
  r.orm_label = 1;
  r.provenance = {"synthetic", 2.0, 4, 7, 0};
  return r;
}
}  // namespace

TEST_CASE("step headers are parsed and rendered") {
  const Chain c = parse_chain_text("Let me think.\nStep 1: add 2 and 3\n  carefully\nStep 2: The answer is 5.", "q");
  REQUIRE(c.steps.size() == 2);
  CHECK(c.steps[0] == "add 2 and 3\n  carefully");
  CHECK(c.final_answer == "5");
  CHECK(render_chain_text(c.steps) == "Step 1: add 2 and 3\n  carefully\nStep 2: The answer is 5.");
  CHECK(parse_chain_text(render_chain_text(c.steps), "q") == c);
}

TEST_CASE("blank-line fallback and parse errors") {
  const Chain c = parse_chain_text("first\n\nsecond \\boxed{12}", "q");
  CHECK(c.steps.size() == 2);
  CHECK(c.final_answer == "12");
  CHECK_THROWS_WITH_AS(parse_chain_text("", "q"), doctest::Contains("offset 0"), DataError);
  CHECK_THROWS_AS(parse_chain_text("Step 1: a\nStep 3: b", "q"), DataError);
  CHECK_THROWS_AS(parse_chain_text("Step 1: a\nStep 2:   ", "q"), DataError);
  StepFormat strict;
  strict.blank_line_fallback = false;
  CHECK_THROWS_AS(parse_chain_text("no headers here", "q", strict), DataError);
}

TEST_CASE("final answers are extracted and compared") {
  CHECK(extract_final_answer("so the answer is $\\boxed{42}$.") == "42");
  CHECK(extract_final_answer("The Answer Is 3/4") == "3/4");
  CHECK(extract_final_answer("we get \\boxed{x+1} here") == "x+1");
  CHECK(extract_final_answer("total is 1,250 apples") == "1250");
  CHECK(extract_final_answer("no number") == kNoAnswer);
  CHECK(answers_match("0.75", "3/4"));
  CHECK(answers_match("\\frac{3}{4}", "0.75"));
  CHECK(answers_match("12", "12.0"));
  CHECK_FALSE(answers_match("13", "12"));
  CHECK_FALSE(answers_match(kNoAnswer, kNoAnswer));
  CHECK_FALSE(answers_match("", ""));
  CHECK(normalize_answer(" \\boxed{ 7 }. ") == "7");
}

TEST_CASE("prefixes and chain construction") {
  const Chain c = make_chain("q", {"a", "b", "The answer is 1"});
  CHECK(prefix_of(c, 0).depth() == 0);
  CHECK(prefix_of(c, 2).steps == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(prefix_of(c, 4), PreconditionError);
  CHECK_THROWS_AS(make_chain("q", {}), PreconditionError);
}

TEST_CASE("labeled records round trip byte for byte") {
  const LabeledRecord r = sample_record();
  const std::string line = to_jsonl_line(r);
  CHECK(line.find("\"schema_version\":\"erprm-1\"}") != std::string::npos);
  const LabeledRecord back = from_jsonl_line(line, 1);
  CHECK(to_jsonl_line(back) == line);
  CHECK(back.annotations[0].label(LabelMethod::soft).value() == 0.75);
  CHECK(back.provenance.seed == 7);

  const std::vector<LabeledRecord> many{r, r};
  const std::string text = write_labeled_jsonl(many);
  CHECK(write_labeled_jsonl(read_labeled_jsonl(std::string_view(text))) == text);
}

TEST_CASE("malformed records name the line") {
  std::string line = to_jsonl_line(sample_record());
  CHECK_THROWS_WITH_AS(from_jsonl_line("{oops", 4), doctest::Contains("line 4"), DataError);
  std::string bad = line;
  bad.replace(bad.find("erprm-1"), 7, "erprm-0");
  CHECK_THROWS_WITH_AS(from_jsonl_line(bad, 2), doctest::Contains("schema version"), DataError);
  bad = line;
  bad.replace(bad.find("\"k\":3"), 5, "\"k\":9");
  CHECK_THROWS_AS(from_jsonl_line(bad, 1), DataError);
  bad = line;
  bad.replace(bad.find("\"orm_label\":1"), 13, "\"orm_label\":2");
  CHECK_THROWS_AS(from_jsonl_line(bad, 1), DataError);
  const std::string two = line + "\n{\"id\":1}\n";
  CHECK_THROWS_WITH_AS(read_labeled_jsonl(std::string_view(two)), doctest::Contains("line 2"), DataError);
}

TEST_CASE("Math-Shepherd export tags each step") {
  const LabeledRecord r = sample_record();
  const std::string out = render_math_shepherd(r);
  CHECK(out == "What is 2+3? Step 1: 2+3 means adding \xD0\xBA\xD0\xB8\nStep 2: The answer is 5 \xD0\xBA\xD0\xB8\n+ +\n");
  MathShepherdOptions strict;
  strict.method = LabelMethod::soft;
  strict.threshold = 0.8;
  CHECK(render_math_shepherd(r, strict).substr(render_math_shepherd(r, strict).rfind('\n', out.size() - 2) + 1) ==
        "- +\n");
  MathShepherdOptions outcome;
  outcome.outcome = true;
  CHECK(render_math_shepherd(r, outcome) ==
        "What is 2+3? Step 1: 2+3 means adding\nStep 2: The answer is 5 \xD0\xBA\xD0\xB8\n+\n");
  MathShepherdOptions missing;
  missing.method = LabelMethod::er_softmin;
  CHECK_THROWS_AS(render_math_shepherd(r, missing), DataError);
}

TEST_CASE("problem files reject duplicates and empty gold answers") {
  std::istringstream ok("{\"id\":\"a\",\"statement\":\"s\",\"gold_answer\":\"$4$\"}\n\n");
  const auto problems = read_problems_jsonl(ok);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].gold_answer == "4");
  std::istringstream dup("{\"id\":\"a\",\"statement\":\"s\",\"gold_answer\":\"4\"}\n"
                         "{\"id\":\"a\",\"statement\":\"t\",\"gold_answer\":\"5\"}\n");
  CHECK_THROWS_WITH_AS(read_problems_jsonl(dup), doctest::Contains("duplicate"), DataError);
  std::istringstream empty("{\"id\":\"a\",\"statement\":\"s\",\"gold_answer\":\"\"}\n");
  CHECK_THROWS_AS(read_problems_jsonl(empty), DataError);
}
