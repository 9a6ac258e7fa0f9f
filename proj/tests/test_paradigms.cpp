#include <doctest.h>

#include <set>
#include <sstream>

#include "mlmprobe/error.hpp"
#include "mlmprobe/paradigms.hpp"
#include "mlmprobe/text.hpp"

using namespace mlmprobe;

namespace {

const PromptTemplate kBornIn{"P19", "[X] was born in [Y] .", PromptSource::manual};
const PromptTemplate kObjectFirst{"P30", "[Y] is located in [X] .", PromptSource::manual};

const Fact kJobs{"Q19837", "Steve Jobs", "P19", "Q62", "San Francisco"};
const Fact kObama{"Q76", "Obama", "P19", "Q782", "Hawaii"};

FactSet pool(std::size_t n) {
  FactSet set{"P19", {}};
  for (std::size_t i = 0; i < n; ++i) {
    set.facts.push_back({"S" + std::to_string(i), "Person " + std::to_string(i), "P19",
                         "O" + std::to_string(i), "Town" + std::to_string(i)});
  }
  return set;
}

std::size_t masks(const Query& q) { return count_occurrences(q.text, kMaskSentinel); }

}  // namespace

TEST_CASE("render_prompt") {
  CHECK(render_prompt(kBornIn, "Steve Jobs", kMask) == "Steve Jobs was born in [MASK] .");
  CHECK(render_prompt(kBornIn, "Obama", std::string("Hawaii")) == "Obama was born in Hawaii .");
  CHECK(render_prompt(kObjectFirst, "Europe", kMask) == "[MASK] is located in Europe .");
  CHECK_THROWS_AS(render_prompt(kBornIn, "", kMask), DataError);
  CHECK_THROWS_AS(render_prompt(kBornIn, "a [MASK] b", kMask), DataError);
}

TEST_CASE("prompt queries") {
  auto q = build_prompt_query(kJobs, kBornIn);
  CHECK(q.text == "Steve Jobs was born in [MASK] .");
  CHECK(q.target_mask_index == 0);
  CHECK(q.paradigm == Paradigm::prompt);
  CHECK(q.fact_key == QueryKey{"Q19837", "P19"});
  CHECK(q.gold_label == "San Francisco");
  CHECK(q.instance == kJobs.instance_key());
  CHECK(masks(q) == 1);
  CHECK(q.query_id == make_query_id(q.text, 0, Paradigm::prompt));
}

TEST_CASE("prompt-only queries target the object mask") {
  auto q = build_prompt_only_query(kBornIn);
  CHECK(q.text == "[MASK] was born in [MASK] .");
  CHECK(q.target_mask_index == 1);
  CHECK(masks(q) == 2);
  CHECK(build_prompt_only_query(kBornIn).query_id == q.query_id);
  auto r = build_prompt_only_query(kObjectFirst);
  CHECK(r.text == "[MASK] is located in [MASK] .");
  CHECK(r.target_mask_index == 0);
  CHECK(r.paradigm == Paradigm::prompt_only);
}

TEST_CASE("query ids depend on text, target and paradigm") {
  auto a = make_query_id("x [MASK]", 0, Paradigm::prompt);
  CHECK(a == make_query_id("x [MASK]", 0, Paradigm::prompt));
  CHECK(a != make_query_id("x [MASK]", 0, Paradigm::context));
  CHECK(a != make_query_id("x [MASK] [MASK]", 0, Paradigm::prompt));
  CHECK(make_query_id("[MASK] [MASK]", 0, Paradigm::prompt_only) !=
        make_query_id("[MASK] [MASK]", 1, Paradigm::prompt_only));
}

TEST_CASE("case queries") {
  CaseSample one{{kObama}, 0};
  auto q = build_case_query(kJobs, one, kBornIn);
  CHECK(q.text == "Obama was born in Hawaii . [SEP] Steve Jobs was born in [MASK] .");
  CHECK(q.target_mask_index == 0);
  CHECK(q.paradigm == Paradigm::case_based);

  CaseSample two{{kObama, {"Q1", "Marie Curie", "P19", "Q270", "Warsaw"}}, 0};
  CHECK(build_case_query(kJobs, two, kBornIn).text ==
        "Obama was born in Hawaii . [SEP] Marie Curie was born in Warsaw . [SEP] "
        "Steve Jobs was born in [MASK] .");

  auto none = build_case_query(kJobs, CaseSample{}, kBornIn);
  CHECK(none.text == build_prompt_query(kJobs, kBornIn).text);
  CHECK(none.target_mask_index == 0);

  CaseSample object_first{{{"Q5", "Asia", "P30", "Q6", "Tokyo"}}, 0};
  Fact tokyo_like{"Q7", "Europe", "P30", "Q8", "Paris"};
  auto of = build_case_query(tokyo_like, object_first, kObjectFirst);
  CHECK(of.text == "Tokyo is located in Asia . [SEP] [MASK] is located in Europe .");
  CHECK(of.target_mask_index == 0);
}

TEST_CASE("case sampling avoids answer leakage") {
  FactSet set{"P19", {kObama,
                      {"Q2", "Kamala Harris", "P19", "Q62", "Oakland"},
                      {"Q3", "Barack Obama Sr.", "P19", "Q782", "Hawaii"},
                      {"Q4", "Duke Kahanamoku", "P19", "Q5", "Honolulu"},
                      {"Q5", "Hawaii Five", "P19", "Q9", "Los Angeles"}}};
  Fact target{"Q6", "Bruno Mars", "P19", "Q782", "Hawaii"};
  auto eligible = eligible_cases(set, target);
  REQUIRE(eligible.size() == 2);
  for (const auto& f : eligible) {
    CHECK(f.object_label != "Hawaii");
    CHECK(find_whole_word(f.subject_label, "Hawaii").empty());
  }
  CHECK_THROWS_AS(sample_cases(set, target, 3, 1), InsufficientCases);
  try {
    sample_cases(set, target, 3, 1);
  } catch (const InsufficientCases& e) {
    CHECK(e.eligible() == 2);
  }
  // The target's own subject never serves as a case.
  FactSet with_self{"P19", {target, {"Q7", "Someone", "P19", "Q8", "Paris"}}};
  CHECK(eligible_cases(with_self, {"Q6", "Bruno Mars", "P19", "Q9", "Rome"}).size() == 1);
}

TEST_CASE("case sampling is seeded and exhaustive when tight") {
  auto set = pool(12);
  Fact target{"T", "Target", "P19", "OX", "Nowhere"};
  auto a = sample_cases(set, target, 10, case_seed(3, target));
  auto b = sample_cases(set, target, 10, case_seed(3, target));
  CHECK(a.cases == b.cases);
  CHECK(a.cases.size() == 10);
  auto c = sample_cases(set, target, 10, case_seed(4, target));
  CHECK(a.cases != c.cases);

  auto all = sample_cases(pool(4), target, 4, 9);
  CHECK(all.cases.size() == 4);
  std::set<std::string> subjects;
  for (const auto& f : all.cases) subjects.insert(f.subject_id);
  CHECK(subjects.size() == 4);
  CHECK(sample_cases(pool(4), target, 0, 9).cases.empty());
}

TEST_CASE("generated case queries never leak the gold") {
  auto set = pool(30);
  for (auto& f : set.facts) {
    if (f.subject_id.back() % 3 == 0) f.object_label = "Town0";
  }
  for (const auto& target : set.facts) {
    auto sample = sample_cases(set, target, 5, case_seed(1, target));
    auto q = build_case_query(target, sample, kBornIn);
    auto last_sep = q.text.rfind(std::string(kSeparator));
    CHECK(find_whole_word(q.text.substr(0, last_sep), target.object_label).empty());
    CHECK(masks(q) == 1);
  }
}

TEST_CASE("context queries") {
  ContextRecord ctx{{"Q19837", "P19"}, "Jobs was from California."};
  auto q = build_context_query(kJobs, ctx, kBornIn);
  CHECK(q.text == "Jobs was from California. [SEP] Steve Jobs was born in [MASK] .");
  CHECK(q.target_mask_index == 0);
  CHECK(q.paradigm == Paradigm::context);
  CHECK_THROWS_AS(build_context_query(kJobs, {{"Q19837", "P19"}, ""}, kBornIn), DataError);
  CHECK_THROWS_AS(build_context_query(kJobs, {{"Q19837", "P19"}, "a [MASK] b"}, kBornIn), DataError);
  std::string long_text(5000, 'x');
  CHECK(build_context_query(kJobs, {{"Q19837", "P19"}, long_text}, kBornIn).text.find(long_text) == 0);
}

TEST_CASE("answer presence") {
  CHECK(contains_answer("Jobs was from California.", "California"));
  CHECK_FALSE(contains_answer("Californian wines are famous", "California"));
  CHECK(contains_answer("born in CALIFORNIA", "California"));
  CHECK_FALSE(contains_answer("anything", ""));
}

TEST_CASE("answer masking") {
  auto m = mask_answer_in_context("Jobs was from California.", "California");
  CHECK(m.text == "Jobs was from [MASK].");
  CHECK(m.masked_positions == 1);
  auto two = mask_answer_in_context("California, oh california!", "California");
  CHECK(two.text == "[MASK], oh [MASK]!");
  CHECK(two.masked_positions == 2);
  CHECK_FALSE(contains_answer(two.text, "California"));
  auto first = mask_answer_in_context("California, oh california!", "California", MaskScope::first);
  CHECK(first.text == "[MASK], oh california!");
  CHECK(first.masked_positions == 1);
  CHECK_THROWS_AS(mask_answer_in_context("nothing here", "California"), DataError);
}

TEST_CASE("masked-context and reconstruction queries") {
  auto m = mask_answer_in_context("San Francisco, yes: San Francisco.", "San Francisco");
  auto q = build_masked_context_query(kJobs, m, kBornIn);
  CHECK(q.text == "[MASK], yes: [MASK]. [SEP] Steve Jobs was born in [MASK] .");
  CHECK(q.target_mask_index == 2);
  CHECK(masks(q) == m.masked_positions + 1);
  CHECK(q.paradigm == Paradigm::context_masked);

  auto r = build_reconstruction_query(kJobs, m);
  CHECK(r.text == m.text);
  CHECK(r.target_mask_index == 0);
  CHECK(r.paradigm == Paradigm::reconstruction);
  CHECK(masks(r) == m.masked_positions);
  CHECK_THROWS_AS(build_reconstruction_query(kJobs, {"no mask", 0}), DataError);
}

TEST_CASE("queries round-trip through their TSV form") {
  std::vector<Query> qs{build_prompt_query(kJobs, kBornIn), build_prompt_only_query(kBornIn),
                        build_context_query(kJobs, {{"Q19837", "P19"}, "tab\there\nnewline"}, kBornIn)};
  std::ostringstream out;
  for (const auto& q : qs) write_query(out, q);
  std::istringstream in(out.str());
  auto back = read_queries(in);
  REQUIRE(back.size() == qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CHECK(back[i].query_id == qs[i].query_id);
    CHECK(back[i].text == qs[i].text);
    CHECK(back[i].paradigm == qs[i].paradigm);
    CHECK(back[i].target_mask_index == qs[i].target_mask_index);
    CHECK(back[i].gold_label == qs[i].gold_label);
  }
  CHECK(parse_paradigm("case") == Paradigm::case_based);
  CHECK(to_string(Paradigm::context_masked) == "context_masked");
  CHECK_THROWS(parse_paradigm("bogus"));
}
