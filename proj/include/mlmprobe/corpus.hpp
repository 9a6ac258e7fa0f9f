#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mlmprobe {

struct Fact {
  std::string subject_id;
  std::string subject_label;
  std::string relation_id;
  std::string object_id;
  std::string object_label;

  // subject_id \x1f relation_id \x1f object_id; identifies one instance across
  // every paradigm built from it.
  std::string instance_key() const;

  friend bool operator==(const Fact&, const Fact&) = default;
};

// All facts of one relation, sorted by (subject_id, object_id).
struct FactSet {
  std::string relation_id;
  std::vector<Fact> facts;

  std::size_t size() const { return facts.size(); }
  bool empty() const { return facts.empty(); }
};

struct LoadedFacts {
  std::vector<FactSet> relations;  // ordered by relation_id
  std::size_t duplicates_dropped = 0;
};

enum class PromptSource { manual, mined, automatic };

std::string_view to_string(PromptSource source);
PromptSource parse_prompt_source(std::string_view text);

struct PromptTemplate {
  std::string relation_id;
  std::string pattern;
  PromptSource source = PromptSource::manual;
};

// (subject_id, relation_id)
using QueryKey = std::pair<std::string, std::string>;

struct ContextRecord {
  QueryKey query_key;
  std::string text;
};

// Facts format: subject_id \t subject_label \t relation_id \t object_id \t object_label
LoadedFacts parse_facts(std::istream& in, std::string_view source_name = "<stream>");
LoadedFacts load_facts(const std::filesystem::path& path);
void write_facts(std::ostream& out, const FactSet& set);

// Groups, sorts and de-duplicates an arbitrary list of facts. Duplicate
// triples with identical labels are dropped; differing labels are an error.
LoadedFacts group_facts(std::vector<Fact> facts);

// Throws DataError unless the pattern has exactly one [X] and one [Y].
void validate_template(const PromptTemplate& prompt);

std::map<std::string, PromptTemplate> parse_prompts(std::istream& in, PromptSource source,
                                                    std::string_view source_name = "<stream>");
std::map<std::string, PromptTemplate> load_prompts(const std::filesystem::path& path,
                                                   PromptSource source);

std::map<QueryKey, ContextRecord> parse_contexts(std::istream& in,
                                                 std::string_view source_name = "<stream>");
std::map<QueryKey, ContextRecord> load_contexts(const std::filesystem::path& path);

// Answers "does this label map to exactly one vocabulary token?". Implemented
// by the scorer bridge; the corpus module never guesses.
class VocabOracle {
 public:
  virtual ~VocabOracle() = default;
  virtual bool is_single_token(const std::string& label) = 0;
};

// Keeps the facts whose object label is a single token, preserving order.
// Each distinct label is asked once.
FactSet filter_single_token(const FactSet& set, VocabOracle& oracle);

}  // namespace mlmprobe
