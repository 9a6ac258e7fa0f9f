#include "mlmprobe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <tuple>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

namespace {

std::string where(std::string_view source, std::size_t line_no) {
  return std::string(source) + ":" + std::to_string(line_no);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

std::string Fact::instance_key() const {
  std::string key;
  key.reserve(subject_id.size() + relation_id.size() + object_id.size() + 2);
  key.append(subject_id).push_back('\x1f');
  key.append(relation_id).push_back('\x1f');
  key.append(object_id);
  return key;
}

std::string_view to_string(PromptSource source) {
  switch (source) {
    case PromptSource::manual: return "manual";
    case PromptSource::mined: return "mined";
    case PromptSource::automatic: return "auto";
  }
  return "manual";
}

PromptSource parse_prompt_source(std::string_view text) {
  if (text == "manual") return PromptSource::manual;
  if (text == "mined") return PromptSource::mined;
  if (text == "auto") return PromptSource::automatic;
  throw ConfigError("unknown prompt source '" + std::string(text) +
                    "' (expected manual, mined or auto)");
}

LoadedFacts group_facts(std::vector<Fact> facts) {
  std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) {
    return std::tie(a.relation_id, a.subject_id, a.object_id) <
           std::tie(b.relation_id, b.subject_id, b.object_id);
  });
  LoadedFacts out;
  for (auto& f : facts) {
    if (!out.relations.empty() && !out.relations.back().facts.empty()) {
      const Fact& prev = out.relations.back().facts.back();
      if (prev.relation_id == f.relation_id && prev.subject_id == f.subject_id &&
          prev.object_id == f.object_id) {
        if (prev.subject_label != f.subject_label || prev.object_label != f.object_label) {
          throw DataError("conflicting labels for triple (" + f.subject_id + ", " +
                          f.relation_id + ", " + f.object_id + ")");
        }
        ++out.duplicates_dropped;
        continue;
      }
    }
    if (out.relations.empty() || out.relations.back().relation_id != f.relation_id) {
      out.relations.push_back(FactSet{f.relation_id, {}});
    }
    out.relations.back().facts.push_back(std::move(f));
  }
  return out;
}

LoadedFacts parse_facts(std::istream& in, std::string_view source_name) {
  std::vector<Fact> facts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = chomp(line);
    if (view.empty()) continue;
    auto fields = split_tabs(view);
    if (fields.size() != 5) {
      throw DataError(where(source_name, line_no) + ": expected 5 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].empty()) {
        throw DataError(where(source_name, line_no) + ": field " + std::to_string(i + 1) +
                        " is empty");
      }
    }
    if (fields[4].find(kMaskSentinel) != std::string_view::npos) {
      throw DataError(where(source_name, line_no) + ": object label contains the mask sentinel");
    }
    facts.push_back(Fact{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]),
                         std::string(fields[3]), std::string(fields[4])});
  }
  auto loaded = group_facts(std::move(facts));
  if (loaded.duplicates_dropped > 0) {
    spdlog::info("{}: dropped {} duplicate triples", source_name, loaded.duplicates_dropped);
  }
  return loaded;
}

LoadedFacts load_facts(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_facts(in, path.string());
}

void write_facts(std::ostream& out, const FactSet& set) {
  for (const auto& f : set.facts) {
    out << f.subject_id << '\t' << f.subject_label << '\t' << f.relation_id << '\t'
        << f.object_id << '\t' << f.object_label << '\n';
  }
}

void validate_template(const PromptTemplate& prompt) {
  const auto xs = count_occurrences(prompt.pattern, "[X]");
  const auto ys = count_occurrences(prompt.pattern, "[Y]");
  if (xs != 1 || ys != 1) {
    throw DataError("prompt for relation " + prompt.relation_id + " must contain exactly one [X]" +
                    " and one [Y] (found " + std::to_string(xs) + " and " + std::to_string(ys) +
                    ")");
  }
}

std::map<std::string, PromptTemplate> parse_prompts(std::istream& in, PromptSource source,
                                                    std::string_view source_name) {
  std::map<std::string, PromptTemplate> prompts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = chomp(line);
    if (view.empty()) continue;
    auto fields = split_tabs(view);
    if (fields.size() != 2 || fields[0].empty()) {
      throw DataError(where(source_name, line_no) + ": expected relation_id \\t pattern");
    }
    PromptTemplate prompt{std::string(fields[0]), std::string(fields[1]), source};
    validate_template(prompt);
    if (!prompts.emplace(prompt.relation_id, prompt).second) {
      throw DataError(where(source_name, line_no) + ": duplicate prompt for relation " +
                      prompt.relation_id);
    }
  }
  return prompts;
}

std::map<std::string, PromptTemplate> load_prompts(const std::filesystem::path& path,
                                                   PromptSource source) {
  auto in = open_input(path);
  return parse_prompts(in, source, path.string());
}

std::map<QueryKey, ContextRecord> parse_contexts(std::istream& in, std::string_view source_name) {
  std::map<QueryKey, ContextRecord> contexts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = chomp(line);
    if (view.empty()) continue;
    auto fields = split_tabs(view);
    if (fields.size() != 3) {
      throw DataError(where(source_name, line_no) +
                      ": expected subject_id \\t relation_id \\t context_text");
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw DataError(where(source_name, line_no) + ": empty query key");
    }
    if (normalize_spaces(fields[2]).empty()) {
      throw DataError(where(source_name, line_no) + ": empty context text");
    }
    QueryKey key{std::string(fields[0]), std::string(fields[1])};
    ContextRecord record{key, std::string(fields[2])};
    if (!contexts.emplace(key, std::move(record)).second) {
      throw DataError(where(source_name, line_no) + ": duplicate context for (" + key.first +
                      ", " + key.second + ")");
    }
  }
  return contexts;
}

std::map<QueryKey, ContextRecord> load_contexts(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_contexts(in, path.string());
}

FactSet filter_single_token(const FactSet& set, VocabOracle& oracle) {
  std::unordered_map<std::string, bool> verdicts;
  FactSet out{set.relation_id, {}};
  for (const auto& f : set.facts) {
    auto it = verdicts.find(f.object_label);
    if (it == verdicts.end()) {
      it = verdicts.emplace(f.object_label, oracle.is_single_token(f.object_label)).first;
    }
    if (it->second) out.facts.push_back(f);
  }
  return out;
}

}  // namespace mlmprobe
