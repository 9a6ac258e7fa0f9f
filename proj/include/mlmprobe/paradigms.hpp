#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlmprobe/corpus.hpp"
#include "mlmprobe/error.hpp"

namespace mlmprobe {

enum class Paradigm { prompt, prompt_only, case_based, context, context_masked, reconstruction };

std::string_view to_string(Paradigm paradigm);
Paradigm parse_paradigm(std::string_view text);

struct Query {
  std::string query_id;  // hash of (text, target_mask_index, paradigm)
  std::string text;
  std::size_t target_mask_index = 0;
  Paradigm paradigm = Paradigm::prompt;
  QueryKey fact_key;      // (subject_id, relation_id)
  std::string gold_label;
  std::string instance;   // Fact::instance_key(), shared by every paradigm of one fact
};

std::string make_query_id(std::string_view text, std::size_t target_mask_index,
                          Paradigm paradigm);

struct MaskSlot {};
inline constexpr MaskSlot kMask{};
using ObjectSlot = std::variant<MaskSlot, std::string>;

// [X] -> subject, [Y] -> mask sentinel or literal; whitespace collapsed.
std::string render_prompt(const PromptTemplate& prompt, std::string_view subject_label,
                          const ObjectSlot& object);

Query build_prompt_query(const Fact& fact, const PromptTemplate& prompt);

// ([MASK], prompt, [MASK]); the target is the mask that replaced [Y].
Query build_prompt_only_query(const PromptTemplate& prompt);

inline constexpr std::size_t kDefaultCaseCount = 10;

struct CaseSample {
  std::vector<Fact> cases;  // sampled order
  std::uint64_t seed = 0;
};

// Seed for one target fact, independent of iteration order.
std::uint64_t case_seed(std::uint64_t global_seed, const Fact& target);

// Facts of the set usable as cases for `target`: different subject, and
// neither label contains the target's gold answer as a whole word.
std::vector<Fact> eligible_cases(const FactSet& set, const Fact& target);

// Throws InsufficientCases when fewer than n facts are eligible.
CaseSample sample_cases(const FactSet& set, const Fact& target, std::size_t n,
                        std::uint64_t seed);

class InsufficientCases : public DataError {
 public:
  InsufficientCases(const std::string& what, std::size_t eligible)
      : DataError(what), eligible_(eligible) {}
  std::size_t eligible() const { return eligible_; }

 private:
  std::size_t eligible_;
};

Query build_case_query(const Fact& fact, const CaseSample& cases, const PromptTemplate& prompt);

Query build_context_query(const Fact& fact, const ContextRecord& context,
                          const PromptTemplate& prompt);

bool contains_answer(std::string_view context, std::string_view gold_label);

enum class MaskScope { all, first };

struct MaskedContext {
  std::string text;
  std::size_t masked_positions = 0;
};

MaskedContext mask_answer_in_context(std::string_view context, std::string_view gold_label,
                                     MaskScope scope = MaskScope::all);

// Masked context + separator + prompt; the target is the prompt's mask.
Query build_masked_context_query(const Fact& fact, const MaskedContext& masked,
                                 const PromptTemplate& prompt);

// The masked context alone; the target is its first mask.
Query build_reconstruction_query(const Fact& fact, const MaskedContext& masked);

// query_id \t paradigm \t target_mask_index \t gold_label \t text
void write_query(std::ostream& out, const Query& query);
std::vector<Query> read_queries(std::istream& in);

}  // namespace mlmprobe
