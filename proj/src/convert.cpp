#include "mlmprobe/convert.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

using nlohmann::json;

namespace {

std::string string_field(const json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

// Labels end up in tab-separated files.
std::string clean_label(std::string label) {
  for (auto& c : label) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return normalize_spaces(label);
}

// Wikidata dumps wrap entities in a JSON array, one entity per line with a
// trailing comma.
std::string_view entity_payload(std::string_view line) {
  line = chomp(line);
  while (!line.empty() && (line.back() == ',' || line.back() == ' ')) line.remove_suffix(1);
  if (line == "[" || line == "]" || line.empty()) return {};
  return line;
}

template <typename Fn>
void for_each_entity(const std::filesystem::path& dump, Fn&& fn) {
  std::ifstream in(dump, std::ios::binary);
  if (!in) throw DataError("cannot open " + dump.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto payload = entity_payload(line);
    if (payload.empty()) continue;
    json entity;
    try {
      entity = json::parse(payload);
    } catch (const json::parse_error& e) {
      throw DataError(dump.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    fn(entity);
  }
}

// Item-valued, non-deprecated statement targets of one property.
template <typename Fn>
void for_each_item_claim(const json& claims, Fn&& fn) {
  for (auto it = claims.begin(); it != claims.end(); ++it) {
    for (const auto& statement : it.value()) {
      if (statement.value("rank", "normal") == "deprecated") continue;
      auto snak = statement.find("mainsnak");
      if (snak == statement.end() || snak->value("snaktype", "") != "value") continue;
      auto value = snak->find("datavalue");
      if (value == snak->end() || value->value("type", "") != "wikibase-entityid") continue;
      const auto& target = (*value)["value"];
      std::string id = string_field(target, "id");
      if (id.empty() && target.contains("numeric-id")) {
        id = "Q" + std::to_string(target["numeric-id"].get<long long>());
      }
      if (!id.empty()) fn(it.key(), id);
    }
  }
}

}  // namespace

LamaConversion convert_lama_facts(std::istream& in) {
  LamaConversion out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (chomp(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("LAMA record at line " + std::to_string(line_no) + ": " + e.what());
    }
    Fact f{string_field(record, "sub_uri"), clean_label(string_field(record, "sub_label")),
           string_field(record, "predicate_id"), string_field(record, "obj_uri"),
           clean_label(string_field(record, "obj_label"))};
    if (f.subject_id.empty() || f.subject_label.empty() || f.relation_id.empty() ||
        f.object_id.empty() || f.object_label.empty()) {
      ++out.skipped;
      continue;
    }
    out.facts.push_back(std::move(f));
  }
  return out;
}

std::size_t convert_lama_relations(std::istream& in, std::ostream& out) {
  std::size_t written = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (chomp(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("LAMA relation at line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string relation = string_field(record, "relation");
    const std::string pattern = clean_label(string_field(record, "template"));
    if (relation.empty() || pattern.empty()) continue;
    validate_template(PromptTemplate{relation, pattern, PromptSource::manual});
    out << relation << '\t' << pattern << '\n';
    ++written;
  }
  return written;
}

WikidataConversion convert_wikidata_dump(const std::filesystem::path& dump,
                                         const std::set<std::string>& relations,
                                         const WikidataOutputs& outputs,
                                         const std::string& language) {
  WikidataConversion result;
  struct Triple {
    std::string subject, relation, object;
  };
  std::vector<Triple> triples;
  std::unordered_set<std::string> needed;

  // Pass 1: statements and taxonomy edges.
  for_each_entity(dump, [&](const json& entity) {
    ++result.entities_seen;
    const std::string id = string_field(entity, "id");
    auto claims = entity.find("claims");
    if (id.empty() || claims == entity.end() || !claims->is_object()) return;
    for_each_item_claim(*claims, [&](const std::string& property, const std::string& target) {
      if (target == id) return;
      if (property == "P31" || property == "P279") {
        if (outputs.taxonomy) {
          *outputs.taxonomy << id << '\t' << target << '\t'
                            << (property == "P31" ? "instance_of" : "subclass_of") << '\n';
        }
        ++result.taxonomy_edges;
        if (outputs.labels) {
          needed.insert(id);
          needed.insert(target);
        }
      }
      if (relations.count(property)) {
        triples.push_back({id, property, target});
        needed.insert(id);
        needed.insert(target);
      }
    });
  });

  // Pass 2: labels for every id referenced above.
  std::unordered_map<std::string, std::string> labels;
  for_each_entity(dump, [&](const json& entity) {
    const std::string id = string_field(entity, "id");
    if (!needed.count(id)) return;
    auto all = entity.find("labels");
    if (all == entity.end()) return;
    auto lang = all->find(language);
    if (lang == all->end()) return;
    std::string label = clean_label(string_field(*lang, "value"));
    if (!label.empty()) labels.emplace(id, std::move(label));
  });

  if (outputs.labels) {
    std::map<std::string, std::string> sorted(labels.begin(), labels.end());
    for (const auto& [id, label] : sorted) *outputs.labels << id << '\t' << label << '\n';
    result.labels_written = sorted.size();
  }

  for (auto& t : triples) {
    auto s = labels.find(t.subject);
    auto o = labels.find(t.object);
    if (s == labels.end() || o == labels.end()) {
      ++result.unlabeled_dropped;
      continue;
    }
    result.facts.push_back(Fact{t.subject, s->second, t.relation, t.object, o->second});
  }
  spdlog::info("wikidata: {} entities, {} facts, {} taxonomy edges, {} unlabeled dropped",
               result.entities_seen, result.facts.size(), result.taxonomy_edges,
               result.unlabeled_dropped);
  return result;
}

}  // namespace mlmprobe
