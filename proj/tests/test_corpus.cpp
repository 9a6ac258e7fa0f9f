#include <doctest.h>

#include <sstream>

#include "mlmprobe/convert.hpp"
#include "mlmprobe/corpus.hpp"
#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"
#include "support.hpp"

using namespace mlmprobe;

namespace {

LoadedFacts parse(const std::string& text) {
  std::istringstream in(text);
  return parse_facts(in, "facts.tsv");
}

std::string serialize(const LoadedFacts& loaded) {
  std::ostringstream out;
  for (const auto& set : loaded.relations) write_facts(out, set);
  return out.str();
}

class SetOracle : public VocabOracle {
 public:
  explicit SetOracle(std::set<std::string> vocab) : vocab_(std::move(vocab)) {}
  bool is_single_token(const std::string& label) override {
    ++calls;
    return vocab_.count(label) > 0;
  }
  int calls = 0;

 private:
  std::set<std::string> vocab_;
};

}  // namespace

TEST_CASE("facts are grouped by relation and sorted") {
  auto loaded = parse(
      "Q2\tBob\tR1\tQ9\tX\n"
      "Q3\tCarl\tR2\tQ9\tX\n"
      "Q1\tAnn\tR1\tQ8\tY\n");
  REQUIRE(loaded.relations.size() == 2);
  CHECK(loaded.relations[0].relation_id == "R1");
  CHECK(loaded.relations[0].size() == 2);
  CHECK(loaded.relations[0].facts[0].subject_id == "Q1");
  CHECK(loaded.relations[1].size() == 1);
  CHECK(loaded.duplicates_dropped == 0);
}

TEST_CASE("duplicate triples are dropped and counted") {
  auto loaded = parse("Q1\tAnn\tR1\tQ8\tY\nQ1\tAnn\tR1\tQ8\tY\n");
  REQUIRE(loaded.relations.size() == 1);
  CHECK(loaded.relations[0].size() == 1);
  CHECK(loaded.duplicates_dropped == 1);
}

TEST_CASE("conflicting labels for one triple are an error") {
  CHECK_THROWS_AS(parse("Q1\tAnn\tR1\tQ8\tY\nQ1\tAnne\tR1\tQ8\tY\n"), DataError);
}

TEST_CASE("malformed fact lines report their line number") {
  try {
    parse("Q1\tAnn\tR1\tQ8\tY\nQ2\tBob\tR1\tQ8\n");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("facts.tsv:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("Q1\t\tR1\tQ8\tY\n"), DataError);
  CHECK_THROWS_AS(parse("Q1\tAnn\tR1\tQ8\t[MASK]\n"), DataError);
}

TEST_CASE("blank lines and CRLF endings are tolerated") {
  auto loaded = parse("Q1\tAnn\tR1\tQ8\tY\r\n\nQ2\tBob\tR1\tQ8\tY\r\n");
  REQUIRE(loaded.relations.size() == 1);
  CHECK(loaded.relations[0].facts[1].object_label == "Y");
}

TEST_CASE("loading is idempotent on re-serialization") {
  auto once = parse("Q2\tBob\tR1\tQ9\tX\nQ1\tAnn\tR1\tQ8\tY\nQ1\tAnn\tR0\tQ8\tY\n");
  auto text = serialize(once);
  auto twice = parse(text);
  CHECK(serialize(twice) == text);
}

TEST_CASE("prompt catalogs") {
  std::istringstream ok("P19\t[X] was born in [Y] .\nP27\t[X] returned to [Y] .\n");
  auto prompts = parse_prompts(ok, PromptSource::mined);
  REQUIRE(prompts.size() == 2);
  CHECK(prompts.at("P27").source == PromptSource::mined);
  CHECK(prompts.at("P19").pattern == "[X] was born in [Y] .");

  std::istringstream missing("P19\t[X] was born in .\n");
  try {
    parse_prompts(missing, PromptSource::manual);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("P19") != std::string::npos);
  }
  std::istringstream twice_x("P19\t[X] [X] [Y]\n");
  CHECK_THROWS_AS(parse_prompts(twice_x, PromptSource::manual), DataError);
  std::istringstream dup("P19\t[X] in [Y]\nP19\t[X] at [Y]\n");
  CHECK_THROWS_AS(parse_prompts(dup, PromptSource::manual), DataError);
}

TEST_CASE("placeholders appear exactly once after validation") {
  std::istringstream in("P19\t[X] was born in [Y] .\nP36\tThe capital of [X] is [Y] .\n");
  for (const auto& [rel, tpl] : parse_prompts(in, PromptSource::manual)) {
    std::string s = tpl.pattern;
    s.replace(s.find("[X]"), 3, "<<S>>");
    s.replace(s.find("[Y]"), 3, "<<O>>");
    CHECK(count_occurrences(s, "<<S>>") == 1);
    CHECK(count_occurrences(s, "<<O>>") == 1);
  }
}

TEST_CASE("prompt source names") {
  CHECK(to_string(PromptSource::automatic) == "auto");
  CHECK(parse_prompt_source("auto") == PromptSource::automatic);
  CHECK(parse_prompt_source("mined") == PromptSource::mined);
  CHECK_THROWS_AS(parse_prompt_source("handmade"), ConfigError);
}

TEST_CASE("contexts") {
  std::istringstream one("Q19837\tP19\tSteve Jobs was born in San Francisco.\n");
  auto ctx = parse_contexts(one);
  REQUIRE(ctx.size() == 1);
  CHECK(ctx.begin()->first == QueryKey{"Q19837", "P19"});

  std::istringstream empty("");
  CHECK(parse_contexts(empty).empty());
  std::istringstream no_text("Q1\tP19\t\n");
  CHECK_THROWS_AS(parse_contexts(no_text), DataError);
  std::istringstream dup("Q1\tP19\ta\nQ1\tP19\tb\n");
  CHECK_THROWS_AS(parse_contexts(dup), DataError);
  std::istringstream tabbed("Q1\tP19\ta\tb\n");
  CHECK_THROWS_AS(parse_contexts(tabbed), DataError);
}

TEST_CASE("single-token filter") {
  auto loaded = parse(
      "Q1\tA\tR\tQ8\tParis\n"
      "Q2\tB\tR\tQ9\tKuala Lumpur\n"
      "Q3\tC\tR\tQ8\tParis\n");
  const auto& set = loaded.relations[0];
  SetOracle oracle({"Paris"});
  auto kept = filter_single_token(set, oracle);
  CHECK(kept.size() == 2);
  CHECK(oracle.calls == 2);  // one question per distinct label
  auto again = filter_single_token(kept, oracle);
  CHECK(again.facts == kept.facts);

  FactSet empty{"R", {}};
  CHECK(filter_single_token(empty, oracle).empty());
  SetOracle all({"Paris", "Kuala Lumpur"});
  CHECK(filter_single_token(set, all).facts == set.facts);
}

TEST_CASE("LAMA records convert to facts") {
  std::istringstream in(
      R"({"sub_uri": "Q19837", "sub_label": "Steve Jobs", "predicate_id": "P19", "obj_uri": "Q62", "obj_label": "San Francisco"})"
      "\n"
      R"({"sub_uri": "Q1", "sub_label": "X", "predicate_id": "P19"})"
      "\n");
  auto c = convert_lama_facts(in);
  REQUIRE(c.facts.size() == 1);
  CHECK(c.skipped == 1);
  CHECK(c.facts[0].object_label == "San Francisco");

  std::istringstream rel(R"({"relation": "P19", "template": "[X] was born in [Y] ."})" "\n");
  std::ostringstream out;
  CHECK(convert_lama_relations(rel, out) == 1);
  CHECK(out.str() == "P19\t[X] was born in [Y] .\n");
}

TEST_CASE("Wikidata dump conversion") {
  testing::TempDir dir("wikidata");
  auto item = [](const std::string& id, const std::string& label, const std::string& claims) {
    return R"({"id":")" + id + R"(","labels":{"en":{"language":"en","value":")" + label +
           R"("}},"claims":{)" + claims + "}}";
  };
  auto claim = [](const std::string& prop, const std::string& target, const char* rank = "normal") {
    return "\"" + prop + R"(":[{"rank":")" + rank +
           R"(","mainsnak":{"snaktype":"value","datavalue":{"type":"wikibase-entityid","value":{"id":")" +
           target + "\"}}}}]";
  };
  std::string dump = "[\n" + item("Q1", "Steve Jobs", claim("P19", "Q2") + "," + claim("P31", "Q5")) +
                     ",\n" + item("Q2", "San Francisco", claim("P31", "Q515")) + ",\n" +
                     item("Q3", "Nobody", claim("P19", "Q99") + "," + claim("P27", "Q2", "deprecated")) +
                     ",\n" + item("Q5", "human", "") + ",\n" + item("Q515", "city", "") + "\n]\n";
  testing::write_file(dir / "dump.json", dump);
  std::ostringstream taxonomy, labels;
  auto c = convert_wikidata_dump(dir / "dump.json", {"P19", "P27"}, {&taxonomy, &labels});
  CHECK(c.entities_seen == 5);
  REQUIRE(c.facts.size() == 1);
  CHECK(c.facts[0] == Fact{"Q1", "Steve Jobs", "P19", "Q2", "San Francisco"});
  CHECK(c.unlabeled_dropped == 1);  // Q99 has no entity in the dump
  CHECK(c.taxonomy_edges == 2);
  CHECK(taxonomy.str() == "Q1\tQ5\tinstance_of\nQ2\tQ515\tinstance_of\n");
  CHECK(labels.str().find("Q515\tcity\n") != std::string::npos);
}
