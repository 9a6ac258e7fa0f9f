#include "mlmprobe/paradigms.hpp"

#include <istream>
#include <ostream>

#include "mlmprobe/error.hpp"
#include "mlmprobe/random.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

std::string_view to_string(Paradigm paradigm) {
  switch (paradigm) {
    case Paradigm::prompt: return "prompt";
    case Paradigm::prompt_only: return "prompt_only";
    case Paradigm::case_based: return "case";
    case Paradigm::context: return "context";
    case Paradigm::context_masked: return "context_masked";
    case Paradigm::reconstruction: return "reconstruction";
  }
  return "prompt";
}

Paradigm parse_paradigm(std::string_view text) {
  for (auto p : {Paradigm::prompt, Paradigm::prompt_only, Paradigm::case_based, Paradigm::context,
                 Paradigm::context_masked, Paradigm::reconstruction}) {
    if (to_string(p) == text) return p;
  }
  throw DataError("unknown paradigm '" + std::string(text) + "'");
}

std::string make_query_id(std::string_view text, std::size_t target_mask_index,
                          Paradigm paradigm) {
  return Fnv1a{}
      .field(text)
      .add(static_cast<std::uint64_t>(target_mask_index))
      .field(to_string(paradigm))
      .hex();
}

namespace {

struct Rendered {
  std::string text;
  std::size_t object_mask_index = 0;  // masks before the [Y] slot
};

using SubjectSlot = std::variant<MaskSlot, std::string_view>;

Rendered render(const PromptTemplate& prompt, const SubjectSlot& subject,
                const ObjectSlot& object) {
  validate_template(prompt);
  const auto& pattern = prompt.pattern;
  const auto x = pattern.find("[X]");
  const auto y = pattern.find("[Y]");

  auto subject_text = [&]() -> std::string_view {
    if (std::holds_alternative<MaskSlot>(subject)) return kMaskSentinel;
    return std::get<std::string_view>(subject);
  };
  auto object_text = [&]() -> std::string_view {
    if (std::holds_alternative<MaskSlot>(object)) return kMaskSentinel;
    return std::get<std::string>(object);
  };

  // Spaces around each substitution keep words from fusing; normalization
  // collapses the doubles.
  std::string raw;
  std::string before_object;
  const auto first = std::min(x, y);
  const auto second = std::max(x, y);
  raw.append(pattern, 0, first);
  raw.append(" ").append(first == x ? subject_text() : object_text()).append(" ");
  if (first == y) before_object = raw.substr(0, raw.size() - object_text().size() - 1);
  raw.append(pattern, first + 3, second - first - 3);
  if (second == y) before_object = raw;
  raw.append(" ").append(second == x ? subject_text() : object_text()).append(" ");
  raw.append(pattern, second + 3, std::string::npos);

  return Rendered{normalize_spaces(raw), count_occurrences(before_object, kMaskSentinel)};
}

void check_label(std::string_view label, const char* what) {
  if (normalize_spaces(label).empty()) throw DataError(std::string("empty ") + what);
  if (label.find(kMaskSentinel) != std::string_view::npos) {
    throw DataError(std::string(what) + " contains the mask sentinel");
  }
}

std::string join_segment(std::string_view head, std::string_view tail) {
  std::string text(head);
  text.append(" ").append(kSeparator).append(" ").append(tail);
  return text;
}

Query make_query(const Fact& fact, std::string text, std::size_t target, Paradigm paradigm) {
  Query q;
  q.query_id = make_query_id(text, target, paradigm);
  q.text = std::move(text);
  q.target_mask_index = target;
  q.paradigm = paradigm;
  q.fact_key = {fact.subject_id, fact.relation_id};
  q.gold_label = fact.object_label;
  q.instance = fact.instance_key();
  return q;
}

}  // namespace

std::string render_prompt(const PromptTemplate& prompt, std::string_view subject_label,
                          const ObjectSlot& object) {
  check_label(subject_label, "subject label");
  if (auto literal = std::get_if<std::string>(&object)) check_label(*literal, "object literal");
  return render(prompt, subject_label, object).text;
}

Query build_prompt_query(const Fact& fact, const PromptTemplate& prompt) {
  check_label(fact.subject_label, "subject label");
  auto rendered = render(prompt, std::string_view(fact.subject_label), kMask);
  return make_query(fact, std::move(rendered.text), rendered.object_mask_index, Paradigm::prompt);
}

Query build_prompt_only_query(const PromptTemplate& prompt) {
  auto rendered = render(prompt, kMask, kMask);
  Query q;
  q.query_id = make_query_id(rendered.text, rendered.object_mask_index, Paradigm::prompt_only);
  q.text = std::move(rendered.text);
  q.target_mask_index = rendered.object_mask_index;
  q.paradigm = Paradigm::prompt_only;
  q.fact_key = {"", prompt.relation_id};
  return q;
}

std::uint64_t case_seed(std::uint64_t global_seed, const Fact& target) {
  return derive_seed(global_seed, target.instance_key());
}

std::vector<Fact> eligible_cases(const FactSet& set, const Fact& target) {
  std::vector<Fact> out;
  for (const auto& f : set.facts) {
    if (f.subject_id == target.subject_id) continue;
    if (!find_whole_word(f.object_label, target.object_label).empty()) continue;
    if (!find_whole_word(f.subject_label, target.object_label).empty()) continue;
    out.push_back(f);
  }
  return out;
}

CaseSample sample_cases(const FactSet& set, const Fact& target, std::size_t n,
                        std::uint64_t seed) {
  auto pool = eligible_cases(set, target);
  if (pool.size() < n) {
    throw InsufficientCases("relation " + set.relation_id + ": only " +
                                std::to_string(pool.size()) + " eligible cases for " +
                                target.subject_id + ", need " + std::to_string(n),
                            pool.size());
  }
  Rng rng(seed);
  CaseSample sample{{}, seed};
  sample.cases.reserve(n);
  for (auto i : rng.sample_indices(pool.size(), n)) sample.cases.push_back(pool[i]);
  return sample;
}

Query build_case_query(const Fact& fact, const CaseSample& cases, const PromptTemplate& prompt) {
  check_label(fact.subject_label, "subject label");
  std::string prefix;
  for (const auto& c : cases.cases) {
    auto segment = render_prompt(prompt, c.subject_label, c.object_label);
    prefix = prefix.empty() ? segment : join_segment(prefix, segment);
  }
  auto target = render(prompt, std::string_view(fact.subject_label), kMask);
  if (prefix.empty()) {
    return make_query(fact, std::move(target.text), target.object_mask_index,
                      Paradigm::case_based);
  }
  return make_query(fact, join_segment(prefix, target.text), target.object_mask_index,
                    Paradigm::case_based);
}

Query build_context_query(const Fact& fact, const ContextRecord& context,
                          const PromptTemplate& prompt) {
  if (normalize_spaces(context.text).empty()) throw DataError("empty context");
  if (context.text.find(kMaskSentinel) != std::string::npos) {
    throw DataError("context for " + fact.subject_id + " contains the mask sentinel");
  }
  check_label(fact.subject_label, "subject label");
  auto target = render(prompt, std::string_view(fact.subject_label), kMask);
  return make_query(fact, join_segment(context.text, target.text), target.object_mask_index,
                    Paradigm::context);
}

bool contains_answer(std::string_view context, std::string_view gold_label) {
  return !find_whole_word(context, gold_label).empty();
}

MaskedContext mask_answer_in_context(std::string_view context, std::string_view gold_label,
                                     MaskScope scope) {
  auto hits = find_whole_word(context, gold_label);
  if (hits.empty()) {
    throw DataError("mask_answer_in_context: answer '" + std::string(gold_label) +
                    "' does not occur in the context");
  }
  if (scope == MaskScope::first) hits.resize(1);
  MaskedContext out;
  std::size_t cursor = 0;
  for (auto pos : hits) {
    out.text.append(context.substr(cursor, pos - cursor)).append(kMaskSentinel);
    cursor = pos + gold_label.size();
  }
  out.text.append(context.substr(cursor));
  out.masked_positions = hits.size();
  return out;
}

Query build_masked_context_query(const Fact& fact, const MaskedContext& masked,
                                 const PromptTemplate& prompt) {
  if (normalize_spaces(masked.text).empty()) throw DataError("empty context");
  check_label(fact.subject_label, "subject label");
  const auto existing = count_occurrences(masked.text, kMaskSentinel);
  auto target = render(prompt, std::string_view(fact.subject_label), kMask);
  return make_query(fact, join_segment(masked.text, target.text),
                    existing + target.object_mask_index, Paradigm::context_masked);
}

Query build_reconstruction_query(const Fact& fact, const MaskedContext& masked) {
  if (count_occurrences(masked.text, kMaskSentinel) == 0) {
    throw DataError("reconstruction query needs at least one mask in the context");
  }
  return make_query(fact, masked.text, 0, Paradigm::reconstruction);
}

void write_query(std::ostream& out, const Query& query) {
  out << query.query_id << '\t' << to_string(query.paradigm) << '\t' << query.target_mask_index
      << '\t' << escape_field(query.gold_label) << '\t' << escape_field(query.text) << '\n';
}

std::vector<Query> read_queries(std::istream& in) {
  std::vector<Query> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = chomp(line);
    if (view.empty()) continue;
    auto fields = split_tabs(view);
    if (fields.size() != 5) {
      throw DataError("queries line " + std::to_string(line_no) + ": expected 5 fields");
    }
    Query q;
    q.query_id = std::string(fields[0]);
    q.paradigm = parse_paradigm(fields[1]);
    try {
      q.target_mask_index = std::stoul(std::string(fields[2]));
    } catch (const std::exception&) {
      throw DataError("queries line " + std::to_string(line_no) + ": bad mask index");
    }
    q.gold_label = unescape_field(fields[3]);
    q.text = unescape_field(fields[4]);
    queries.push_back(std::move(q));
  }
  return queries;
}

}  // namespace mlmprobe
