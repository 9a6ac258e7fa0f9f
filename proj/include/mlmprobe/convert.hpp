#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "mlmprobe/corpus.hpp"

namespace mlmprobe {

// LAMA T-REx record per line:
//   {"sub_uri": "Q..", "sub_label": "..", "predicate_id": "P..", "obj_uri": "Q..",
//    "obj_label": "..", ...}
// Records missing a field are skipped and counted.
struct LamaConversion {
  std::vector<Fact> facts;
  std::size_t skipped = 0;
};
LamaConversion convert_lama_facts(std::istream& in);

// LAMA relations.jsonl: {"relation": "P19", "template": "[X] was born in [Y] .", ...}
// Writes the prompts file format.
std::size_t convert_lama_relations(std::istream& in, std::ostream& out);

// Streaming conversion of a Wikidata JSON dump (one entity per line, the
// enclosing "[" / "]" lines and trailing commas tolerated). Runs two passes
// over the file so only the labels that are actually needed stay in memory.
struct WikidataConversion {
  std::vector<Fact> facts;  // statements whose property is in `relations`
  std::size_t taxonomy_edges = 0;
  std::size_t labels_written = 0;
  std::size_t entities_seen = 0;
  std::size_t unlabeled_dropped = 0;
};

struct WikidataOutputs {
  std::ostream* taxonomy = nullptr;  // child \t parent \t instance_of|subclass_of
  std::ostream* labels = nullptr;    // entity_id \t label
};

WikidataConversion convert_wikidata_dump(const std::filesystem::path& dump,
                                         const std::set<std::string>& relations,
                                         const WikidataOutputs& outputs,
                                         const std::string& language = "en");

}  // namespace mlmprobe
