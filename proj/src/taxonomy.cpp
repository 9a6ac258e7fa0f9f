#include "mlmprobe/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <iterator>
#include <ostream>
#include <queue>
#include <tuple>

#include <spdlog/spdlog.h>

#include "mlmprobe/text.hpp"

namespace mlmprobe {

// ---------------------------------------------------------------------------
// TaxonomyStore

TaxonomyStore::TaxonomyStore(std::vector<TaxonomyEdge> edges,
                             std::map<std::string, std::string> labels) {
  for (auto& edge : edges) {
    if (edge.child == edge.parent) {
      ++self_edges_dropped_;
      continue;
    }
    const auto child = intern(edge.child);
    const auto parent = intern(edge.parent);
    auto& ps = parents_[child];
    if (std::find(ps.begin(), ps.end(), parent) == ps.end()) {
      ps.push_back(parent);
      ++child_count_[parent];
      ++edge_count_;
    }
    if (edge.kind == EdgeKind::instance_of) instance_of_[child] = true;
  }
  for (auto& ps : parents_) std::sort(ps.begin(), ps.end(), [this](auto a, auto b) {
    return names_[a] < names_[b];
  });
  for (auto& [id, label] : labels) {
    by_label_[label].push_back(id);
    labels_.emplace(id, std::move(label));
  }
  for (auto& [label, ids] : by_label_) std::sort(ids.begin(), ids.end());
  if (self_edges_dropped_ > 0) spdlog::warn("taxonomy: dropped {} self-edges", self_edges_dropped_);
}

std::uint32_t TaxonomyStore::intern(const std::string& id) {
  auto [it, inserted] = index_.emplace(id, static_cast<std::uint32_t>(names_.size()));
  if (inserted) {
    names_.push_back(id);
    parents_.emplace_back();
    child_count_.push_back(0);
    instance_of_.push_back(false);
  }
  return it->second;
}

TaxonomyStore TaxonomyStore::parse(std::istream& edges_in, std::istream* labels_in) {
  std::vector<TaxonomyEdge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(edges_in, line)) {
    ++line_no;
    auto view = chomp(line);
    if (view.empty()) continue;
    auto fields = split_tabs(view);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError("taxonomy edges line " + std::to_string(line_no) +
                      ": expected child_id \\t parent_id \\t kind");
    }
    EdgeKind kind;
    if (fields[2] == "instance_of") {
      kind = EdgeKind::instance_of;
    } else if (fields[2] == "subclass_of") {
      kind = EdgeKind::subclass_of;
    } else {
      throw DataError("taxonomy edges line " + std::to_string(line_no) + ": unknown edge kind '" +
                      std::string(fields[2]) + "'");
    }
    edges.push_back({std::string(fields[0]), std::string(fields[1]), kind});
  }

  std::map<std::string, std::string> labels;
  if (labels_in) {
    line_no = 0;
    while (std::getline(*labels_in, line)) {
      ++line_no;
      auto view = chomp(line);
      if (view.empty()) continue;
      auto fields = split_tabs(view);
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
        throw DataError("labels line " + std::to_string(line_no) + ": expected entity_id \\t label");
      }
      auto [it, inserted] = labels.emplace(std::string(fields[0]), std::string(fields[1]));
      if (!inserted && it->second != fields[1]) {
        throw DataError("labels line " + std::to_string(line_no) + ": conflicting label for " +
                        it->first);
      }
    }
  }
  return TaxonomyStore(std::move(edges), std::move(labels));
}

TaxonomyStore TaxonomyStore::load(const std::filesystem::path& edges,
                                  const std::optional<std::filesystem::path>& labels) {
  std::ifstream edges_in(edges);
  if (!edges_in) throw DataError("cannot open " + edges.string());
  if (!labels) return parse(edges_in, nullptr);
  std::ifstream labels_in(*labels);
  if (!labels_in) throw DataError("cannot open " + labels->string());
  return parse(edges_in, &labels_in);
}

std::optional<std::uint32_t> TaxonomyStore::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool TaxonomyStore::is_type(const std::string& id) const {
  auto node = find(id);
  return node && child_count_[*node] > 0;
}

bool TaxonomyStore::has_instance_of(const std::string& id) const {
  auto node = find(id);
  return node && instance_of_[*node];
}

std::size_t TaxonomyStore::degree(const std::string& id) const {
  auto node = find(id);
  return node ? parents_[*node].size() + child_count_[*node] : 0;
}

std::string TaxonomyStore::label(const std::string& id) const {
  auto it = labels_.find(id);
  return it == labels_.end() ? id : it->second;
}

std::vector<std::string> TaxonomyStore::parents(const std::string& id) const {
  std::vector<std::string> out;
  if (auto node = find(id)) {
    for (auto p : parents_[*node]) out.push_back(names_[p]);
  }
  return out;
}

std::vector<std::string> TaxonomyStore::ancestors(const std::string& id,
                                                  std::optional<std::size_t> max_depth) const {
  std::vector<std::string> out;
  auto start = find(id);
  if (!start) return out;
  std::vector<bool> seen(names_.size(), false);
  seen[*start] = true;
  std::vector<std::uint32_t> frontier{*start};
  for (std::size_t depth = 0; !frontier.empty() && (!max_depth || depth < *max_depth); ++depth) {
    std::vector<std::uint32_t> next;
    for (auto node : frontier) {
      for (auto p : parents_[node]) {
        if (seen[p]) continue;
        seen[p] = true;
        next.push_back(p);
        out.push_back(names_[p]);
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool TaxonomyStore::reaches(const std::string& from, const std::string& to) const {
  auto start = find(from);
  auto goal = find(to);
  if (!start || !goal) return false;
  if (*start == *goal) return true;
  std::vector<bool> seen(names_.size(), false);
  std::vector<std::uint32_t> stack{*start};
  seen[*start] = true;
  while (!stack.empty()) {
    auto node = stack.back();
    stack.pop_back();
    for (auto p : parents_[node]) {
      if (p == *goal) return true;
      if (!seen[p]) {
        seen[p] = true;
        stack.push_back(p);
      }
    }
  }
  return false;
}

std::optional<std::string> TaxonomyStore::resolve_label(const std::string& label) const {
  auto it = by_label_.find(label);
  if (it == by_label_.end()) return std::nullopt;
  const auto& ids = it->second;
  if (ids.size() == 1) return ids.front();
  const std::string* best = &ids.front();
  for (const auto& id : ids) {
    if (degree(id) > degree(*best)) best = &id;
  }
  spdlog::debug("taxonomy: label '{}' is ambiguous ({} ids), resolved to {}", label, ids.size(),
                *best);
  return *best;
}

// ---------------------------------------------------------------------------
// Entity type graph

std::optional<std::size_t> EntityTypeGraph::find(const std::string& id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const TypeNode& n, const std::string& key) { return n.id < key; });
  if (it == nodes.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

namespace {

void sort_and_index_edges(EntityTypeGraph& graph) {
  std::sort(graph.edges.begin(), graph.edges.end());
  graph.edges.erase(std::unique(graph.edges.begin(), graph.edges.end()), graph.edges.end());
}

std::vector<std::uint32_t> merge_sorted(const std::vector<std::uint32_t>& a,
                                        const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

EntityTypeGraph build_etg(const std::set<std::string>& entity_set, const TaxonomyStore& store,
                          std::optional<std::size_t> max_depth) {
  if (entity_set.empty()) throw AnalysisError("build_etg: empty entity set");
  EntityTypeGraph graph;
  graph.seeds.assign(entity_set.begin(), entity_set.end());

  // Store node -> covered seed indices; seeds are visited in ascending order so
  // each list comes out sorted.
  std::map<std::uint32_t, std::vector<std::uint32_t>> covered;
  std::vector<std::uint32_t> stamp(store.node_count(), 0);
  std::uint32_t generation = 0;

  for (std::uint32_t s = 0; s < graph.seeds.size(); ++s) {
    const auto& seed = graph.seeds[s];
    auto start = store.find(seed);
    bool any = false;
    if (start) {
      ++generation;
      stamp[*start] = generation;
      if (store.is_type(seed)) {
        covered[*start].push_back(s);
        any = true;
      }
      std::vector<std::uint32_t> frontier{*start};
      for (std::size_t depth = 0; !frontier.empty() && (!max_depth || depth < *max_depth);
           ++depth) {
        std::vector<std::uint32_t> next;
        for (auto node : frontier) {
          for (auto p : store.parent_nodes(node)) {
            if (stamp[p] == generation) continue;
            stamp[p] = generation;
            covered[p].push_back(s);
            next.push_back(p);
            any = true;
          }
        }
        frontier = std::move(next);
      }
    }
    if (!any) {
      ++graph.uncovered;
      graph.warnings.push_back("entity " + seed + " has no ancestor types (no instance_of edge)");
    }
  }

  for (auto& [node, seeds] : covered) {
    const auto& id = store.name(node);
    graph.nodes.push_back(TypeNode{id, store.label(id), {id}, std::move(seeds)});
  }
  std::sort(graph.nodes.begin(), graph.nodes.end(),
            [](const TypeNode& a, const TypeNode& b) { return a.id < b.id; });

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    auto node = store.find(graph.nodes[i].id);
    for (auto p : store.parent_nodes(*node)) {
      if (auto j = graph.find(store.name(p))) graph.edges.emplace_back(i, *j);
    }
  }
  sort_and_index_edges(graph);
  return graph;
}

EntityTypeGraph condense_cycles(const EntityTypeGraph& graph) {
  const std::size_t n = graph.nodes.size();
  std::vector<std::vector<std::size_t>> out_edges(n);
  for (const auto& [child, parent] : graph.edges) out_edges[child].push_back(parent);

  // Iterative Tarjan.
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnvisited), low(n, 0), component(n, kUnvisited);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::size_t next_index = 0, components = 0;
  struct Frame {
    std::size_t node;
    std::size_t edge;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& frame = call.back();
      const auto v = frame.node;
      if (frame.edge < out_edges[v].size()) {
        const auto w = out_edges[v][frame.edge++];
        if (index[w] == kUnvisited) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        while (true) {
          const auto w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          component[w] = components;
          if (w == v) break;
        }
        ++components;
      }
      call.pop_back();
      if (!call.empty()) {
        const auto parent = call.back().node;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }

  std::vector<std::vector<std::size_t>> groups(components);
  for (std::size_t v = 0; v < n; ++v) groups[component[v]].push_back(v);

  EntityTypeGraph out;
  out.seeds = graph.seeds;
  out.uncovered = graph.uncovered;
  out.warnings = graph.warnings;
  std::vector<TypeNode> merged;
  merged.reserve(components);
  for (const auto& group : groups) {
    // group members are ascending node indices, hence ascending ids.
    TypeNode node = graph.nodes[group.front()];
    node.members.clear();
    for (auto v : group) {
      const auto& member = graph.nodes[v];
      node.members.insert(node.members.end(), member.members.begin(), member.members.end());
      if (v != group.front()) node.covered = merge_sorted(node.covered, member.covered);
    }
    std::sort(node.members.begin(), node.members.end());
    if (group.size() > 1) {
      std::string list;
      for (const auto& m : node.members) list += (list.empty() ? "" : ", ") + m;
      out.warnings.push_back("collapsed cycle {" + list + "} into " + node.id);
    }
    merged.push_back(std::move(node));
  }

  std::vector<std::size_t> order(components);
  for (std::size_t c = 0; c < components; ++c) order[c] = c;
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return merged[a].id < merged[b].id; });
  std::vector<std::size_t> position(components);
  for (std::size_t i = 0; i < components; ++i) {
    position[order[i]] = i;
    out.nodes.push_back(std::move(merged[order[i]]));
  }
  for (const auto& [child, parent] : graph.edges) {
    const auto a = position[component[child]];
    const auto b = position[component[parent]];
    if (a != b) out.edges.emplace_back(a, b);
  }
  sort_and_index_edges(out);
  return out;
}

std::vector<TypeNode> fine_to_coarse_order(const EntityTypeGraph& dag) {
  const std::size_t n = dag.nodes.size();
  std::vector<std::size_t> pending_children(n, 0);
  std::vector<std::vector<std::size_t>> parents(n);
  for (const auto& [child, parent] : dag.edges) {
    parents[child].push_back(parent);
    ++pending_children[parent];
  }
  auto finer = [&](std::size_t a, std::size_t b) {
    // priority_queue pops the largest, so "a after b" means a is coarser.
    return std::forward_as_tuple(dag.nodes[a].coverage(), dag.nodes[a].id) >
           std::forward_as_tuple(dag.nodes[b].coverage(), dag.nodes[b].id);
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(finer)> ready(finer);
  for (std::size_t v = 0; v < n; ++v) {
    if (pending_children[v] == 0) ready.push(v);
  }
  std::vector<TypeNode> order;
  order.reserve(n);
  while (!ready.empty()) {
    const auto v = ready.top();
    ready.pop();
    order.push_back(dag.nodes[v]);
    for (auto p : parents[v]) {
      if (--pending_children[p] == 0) ready.push(p);
    }
  }
  if (order.size() != n) {
    throw AnalysisError("fine_to_coarse_order: type graph has a cycle (" +
                        std::to_string(n - order.size()) + " nodes unordered); condense first");
  }
  return order;
}

TypeAssignment induce_type(const std::vector<TypeNode>& order, std::size_t seed_size,
                           double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("type threshold must lie in (0, 1]");
  }
  if (order.empty() || seed_size == 0) {
    throw TypeInductionError("induce_type: no candidate types", "", 0.0);
  }
  const TypeNode* best = nullptr;
  double best_fraction = -1.0;
  for (const auto& node : order) {
    const double fraction = static_cast<double>(node.coverage()) / static_cast<double>(seed_size);
    if (fraction > threshold) {
      return TypeAssignment{"", node.id, node.label, node.members, fraction};
    }
    if (fraction > best_fraction) {
      best_fraction = fraction;
      best = &node;
    }
  }
  throw TypeInductionError("induce_type: no type covers more than " + format_fixed(threshold, 2) +
                               " of the entity set (best " + best->id + " at " +
                               format_fixed(best_fraction, 4) + ")",
                           best->id, best_fraction);
}

TypeAssignment induce_relation_type(const std::string& relation_id,
                                    const std::set<std::string>& objects,
                                    const TaxonomyStore& store, double threshold,
                                    std::optional<std::size_t> max_depth) {
  auto dag = condense_cycles(build_etg(objects, store, max_depth));
  for (const auto& w : dag.warnings) spdlog::debug("{}: {}", relation_id, w);
  auto assignment = induce_type(fine_to_coarse_order(dag), dag.seed_size(), threshold);
  assignment.relation_id = relation_id;
  return assignment;
}

TypeMembers type_members(const std::string& type_id, const std::set<std::string>& candidates,
                         const TaxonomyStore& store) {
  TypeMembership membership(store, type_id);
  TypeMembers out;
  for (const auto& label : candidates) {
    if (!store.resolve_label(label)) {
      ++out.unresolved;
      continue;
    }
    if (membership.contains_label(label)) out.members.insert(label);
  }
  return out;
}

TypeMembership::TypeMembership(const TaxonomyStore& store, std::string type_id)
    : store_(&store), type_id_(std::move(type_id)) {
  if (!store.is_type(type_id_)) throw AnalysisError("unknown type id " + type_id_);
}

bool TypeMembership::contains_label(const std::string& label) {
  auto it = memo_.find(label);
  if (it != memo_.end()) return it->second;
  bool member = false;
  if (auto id = store_->resolve_label(label)) member = store_->reaches(*id, type_id_);
  memo_.emplace(label, member);
  return member;
}

void write_type_assignment(std::ostream& out, const TypeAssignment& assignment) {
  out << assignment.relation_id << '\t' << assignment.type_id << '\t' << assignment.type_label
      << '\t' << format_fixed(assignment.coverage_fraction, 6) << '\n';
}

}  // namespace mlmprobe
