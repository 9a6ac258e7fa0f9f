#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mlmprobe/error.hpp"

namespace mlmprobe {

enum class EdgeKind { instance_of, subclass_of };

struct TaxonomyEdge {
  std::string child;
  std::string parent;
  EdgeKind kind = EdgeKind::instance_of;
};

// Immutable instance-of / subclass-of graph with entity labels. Ids are
// interned; every id touched by an edge has a label (its own id when the
// labels file has none).
class TaxonomyStore {
 public:
  TaxonomyStore() = default;
  TaxonomyStore(std::vector<TaxonomyEdge> edges, std::map<std::string, std::string> labels);

  static TaxonomyStore parse(std::istream& edges, std::istream* labels);
  static TaxonomyStore load(const std::filesystem::path& edges,
                            const std::optional<std::filesystem::path>& labels);

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  // True when the id is the parent of at least one edge.
  bool is_type(const std::string& id) const;
  bool has_instance_of(const std::string& id) const;
  std::size_t degree(const std::string& id) const;
  std::string label(const std::string& id) const;
  std::vector<std::string> parents(const std::string& id) const;

  // Every id reachable through outgoing edges, excluding `id` itself, within
  // max_depth edges (unbounded when absent). Sorted.
  std::vector<std::string> ancestors(const std::string& id,
                                     std::optional<std::size_t> max_depth = std::nullopt) const;
  bool reaches(const std::string& from, const std::string& to) const;

  // Exact label match. Ambiguous labels resolve to the id with the most
  // edges, then the smallest id.
  std::optional<std::string> resolve_label(const std::string& label) const;

  std::size_t edge_count() const { return edge_count_; }
  std::size_t self_edges_dropped() const { return self_edges_dropped_; }

  // Interned view used by the graph algorithms.
  std::optional<std::uint32_t> find(const std::string& id) const;
  const std::string& name(std::uint32_t node) const { return names_[node]; }
  const std::vector<std::uint32_t>& parent_nodes(std::uint32_t node) const {
    return parents_[node];
  }
  std::size_t node_count() const { return names_.size(); }

 private:
  std::uint32_t intern(const std::string& id);

  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::vector<std::uint32_t>> parents_;  // sorted, unique
  std::vector<std::uint32_t> child_count_;
  std::vector<bool> instance_of_;
  std::unordered_map<std::string, std::string> labels_;
  std::unordered_map<std::string, std::vector<std::string>> by_label_;
  std::size_t edge_count_ = 0;
  std::size_t self_edges_dropped_ = 0;
};

struct TypeNode {
  std::string id;                    // smallest member id
  std::string label;
  std::vector<std::string> members;  // more than one after cycle condensation
  std::vector<std::uint32_t> covered;  // sorted seed indices

  std::size_t coverage() const { return covered.size(); }
};

struct EntityTypeGraph {
  std::vector<TypeNode> nodes;  // sorted by id
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // child -> parent, sorted, unique
  std::vector<std::string> seeds;                           // sorted, unique
  std::size_t uncovered = 0;
  std::vector<std::string> warnings;

  std::size_t seed_size() const { return seeds.size(); }
  std::optional<std::size_t> find(const std::string& id) const;
};

// All ancestor types of the seed entities. A seed that is itself a type
// counts toward its own coverage.
EntityTypeGraph build_etg(const std::set<std::string>& entity_set, const TaxonomyStore& store,
                          std::optional<std::size_t> max_depth = std::nullopt);

// Collapses every strongly connected component into one node.
EntityTypeGraph condense_cycles(const EntityTypeGraph& graph);

// Topological order with children before parents; among available nodes the
// smaller coverage goes first, then the smaller id. Throws AnalysisError on a
// cycle.
std::vector<TypeNode> fine_to_coarse_order(const EntityTypeGraph& dag);

struct TypeAssignment {
  std::string relation_id;
  std::string type_id;
  std::string type_label;
  std::vector<std::string> equivalent_ids;  // condensed cycle members, type_id included
  double coverage_fraction = 0.0;
};

class TypeInductionError : public AnalysisError {
 public:
  TypeInductionError(const std::string& what, std::string best_id, double best_fraction)
      : AnalysisError(what), best_id_(std::move(best_id)), best_fraction_(best_fraction) {}
  const std::string& best_id() const { return best_id_; }
  double best_fraction() const { return best_fraction_; }

 private:
  std::string best_id_;
  double best_fraction_;
};

inline constexpr double kDefaultTypeThreshold = 0.8;

// First type in fine-to-coarse order whose coverage / seed_size is strictly
// greater than the threshold.
TypeAssignment induce_type(const std::vector<TypeNode>& order, std::size_t seed_size,
                           double threshold = kDefaultTypeThreshold);

// Convenience: build, condense, order and induce for one relation.
TypeAssignment induce_relation_type(const std::string& relation_id,
                                    const std::set<std::string>& objects,
                                    const TaxonomyStore& store,
                                    double threshold = kDefaultTypeThreshold,
                                    std::optional<std::size_t> max_depth = std::nullopt);

struct TypeMembers {
  std::set<std::string> members;
  std::size_t unresolved = 0;
};

// The candidate labels whose entity is the type or has it as an ancestor.
TypeMembers type_members(const std::string& type_id, const std::set<std::string>& candidates,
                         const TaxonomyStore& store);

// Memoized membership test for one type, used when scoring many predictions.
class TypeMembership {
 public:
  TypeMembership(const TaxonomyStore& store, std::string type_id);
  bool contains_label(const std::string& label);
  const std::string& type_id() const { return type_id_; }

 private:
  const TaxonomyStore* store_;
  std::string type_id_;
  std::unordered_map<std::string, bool> memo_;
};

// relation_id \t type_id \t type_label \t coverage_fraction
void write_type_assignment(std::ostream& out, const TypeAssignment& assignment);

}  // namespace mlmprobe
