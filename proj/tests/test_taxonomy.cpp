#include <doctest.h>

#include <sstream>

#include "mlmprobe/error.hpp"
#include "mlmprobe/taxonomy.hpp"
#include "oracles.hpp"
#include "taxonomy_fixtures.hpp"

using namespace mlmprobe;

namespace {

TaxonomyStore store_of(std::vector<TaxonomyEdge> edges) {
  return TaxonomyStore(std::move(edges), {});
}

std::size_t coverage_of(const EntityTypeGraph& g, const std::string& id) {
  auto i = g.find(id);
  REQUIRE(i.has_value());
  return g.nodes[*i].coverage();
}

std::vector<std::string> ids(const std::vector<TypeNode>& order) {
  std::vector<std::string> out;
  for (const auto& n : order) out.push_back(n.id);
  return out;
}

// Every edge has its child before its parent and the order is a permutation.
bool respects_edges(const EntityTypeGraph& g, const std::vector<TypeNode>& order) {
  if (order.size() != g.nodes.size()) return false;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i].id] = i;
  if (pos.size() != order.size()) return false;
  for (const auto& [c, p] : g.edges) {
    if (pos.at(g.nodes[c].id) >= pos.at(g.nodes[p].id)) return false;
  }
  return true;
}

constexpr auto I = EdgeKind::instance_of;
constexpr auto S = EdgeKind::subclass_of;

}  // namespace

TEST_CASE("settlement example induces city") {
  auto store = fixtures::settlement_store();
  auto g = build_etg(fixtures::settlement_seeds(), store);
  CHECK(g.seed_size() == 6);
  CHECK(g.uncovered == 0);
  CHECK(coverage_of(g, "Q1549591") == 4);
  CHECK(coverage_of(g, "Q515") == 5);
  CHECK(coverage_of(g, "Q532") == 1);
  CHECK(coverage_of(g, "Q486972") == 6);
  CHECK(coverage_of(g, "Q515") >= coverage_of(g, "Q1549591"));

  auto order = fine_to_coarse_order(condense_cycles(g));
  CHECK(ids(order) == std::vector<std::string>{"Q532", "Q1549591", "Q515", "Q486972"});
  auto a = induce_type(order, g.seed_size());
  CHECK(a.type_id == "Q515");
  CHECK(a.type_label == "city");
  CHECK(a.coverage_fraction == doctest::Approx(5.0 / 6));

  auto b = induce_relation_type("P19", fixtures::settlement_seeds(), store);
  CHECK(b.relation_id == "P19");
  CHECK(b.type_id == "Q515");
  std::ostringstream out;
  write_type_assignment(out, b);
  CHECK(out.str() == "P19\tQ515\tcity\t0.833333\n");
}

TEST_CASE("chain and diamond coverage") {
  auto chain = store_of({{"e", "t1", I}, {"t1", "t2", S}});
  auto g = build_etg({"e"}, chain);
  CHECK(coverage_of(g, "t1") == 1);
  CHECK(coverage_of(g, "t2") == 1);
  CHECK(ids(fine_to_coarse_order(g)) == std::vector<std::string>{"t1", "t2"});

  auto diamond = store_of({{"e", "a", I}, {"e", "b", I}, {"a", "c", S}, {"b", "c", S}});
  auto d = build_etg({"e"}, diamond);
  CHECK(coverage_of(d, "c") == 1);
  CHECK(d.nodes.size() == 3);
}

TEST_CASE("depth cap limits ancestor expansion") {
  auto chain = store_of({{"e", "t1", I}, {"t1", "t2", S}, {"t2", "t3", S}});
  auto g = build_etg({"e"}, chain, 2);
  CHECK(g.find("t2").has_value());
  CHECK_FALSE(g.find("t3").has_value());
  CHECK(chain.ancestors("e", 1) == std::vector<std::string>{"t1"});
  CHECK(chain.ancestors("e") == std::vector<std::string>{"t1", "t2", "t3"});
}

TEST_CASE("seeds without taxonomy entries are uncovered but counted") {
  auto store = store_of({{"e1", "T", I}, {"e2", "T", I}, {"e3", "T", I}, {"e4", "T", I}});
  auto g = build_etg({"e1", "e2", "e3", "e4", "lost"}, store);
  CHECK(g.seed_size() == 5);
  CHECK(g.uncovered == 1);
  CHECK_FALSE(g.warnings.empty());
  // 4 of 5 is exactly 0.8: not strictly greater.
  CHECK_THROWS_AS(induce_type(fine_to_coarse_order(g), g.seed_size()), TypeInductionError);
  try {
    induce_type(fine_to_coarse_order(g), g.seed_size());
  } catch (const TypeInductionError& e) {
    CHECK(e.best_id() == "T");
    CHECK(e.best_fraction() == doctest::Approx(0.8));
  }
  CHECK(induce_type(fine_to_coarse_order(g), g.seed_size(), 0.75).type_id == "T");
}

TEST_CASE("a seed that is itself a type covers itself") {
  auto store = store_of({{"x", "city", I}, {"city", "place", S}});
  auto g = build_etg({"x", "city"}, store);
  CHECK(coverage_of(g, "city") == 2);
  CHECK(coverage_of(g, "place") == 2);
}

TEST_CASE("cycles are condensed") {
  auto two = store_of({{"e1", "a", I}, {"a", "b", S}, {"b", "a", S}});
  auto g = condense_cycles(build_etg({"e1"}, two));
  REQUIRE(g.nodes.size() == 1);
  CHECK(g.nodes[0].id == "a");
  CHECK(g.nodes[0].members == std::vector<std::string>{"a", "b"});
  CHECK(g.nodes[0].coverage() == 1);
  CHECK_FALSE(g.warnings.empty());

  // a covers e1, b covers e2, c covers both; a -> b -> c -> a.
  auto three = store_of({{"e1", "a", I}, {"e2", "b", I}, {"e1", "c", I}, {"e2", "c", I},
                         {"a", "b", S}, {"b", "c", S}, {"c", "a", S}});
  auto raw = build_etg({"e1", "e2"}, three);
  CHECK_THROWS_AS(fine_to_coarse_order(raw), AnalysisError);
  auto h = condense_cycles(raw);
  REQUIRE(h.nodes.size() == 1);
  CHECK(h.nodes[0].coverage() == 2);

  auto acyclic = build_etg(fixtures::settlement_seeds(), fixtures::settlement_store());
  auto same = condense_cycles(acyclic);
  CHECK(ids(fine_to_coarse_order(same)) == ids(fine_to_coarse_order(acyclic)));
  CHECK(same.edges == acyclic.edges);
  REQUIRE(same.nodes.size() == acyclic.nodes.size());
  for (std::size_t i = 0; i < same.nodes.size(); ++i) {
    CHECK(same.nodes[i].id == acyclic.nodes[i].id);
    CHECK(same.nodes[i].covered == acyclic.nodes[i].covered);
  }
  CHECK(same.warnings.empty());
}

TEST_CASE("ordering tie-breaks and edge cases") {
  auto store = store_of({{"e1", "B", I}, {"e2", "B", I}, {"e3", "B", I}, {"e1", "A", I},
                         {"e2", "A", I}, {"e3", "A", I}, {"e4", "A", I}, {"e5", "A", I}});
  auto g = build_etg({"e1", "e2", "e3", "e4", "e5"}, store);
  CHECK(ids(fine_to_coarse_order(g)) == std::vector<std::string>{"B", "A"});

  auto same_cov = store_of({{"e", "Z", I}, {"e", "Y", I}});
  CHECK(ids(fine_to_coarse_order(build_etg({"e"}, same_cov))) ==
        std::vector<std::string>{"Y", "Z"});

  CHECK(fine_to_coarse_order(EntityTypeGraph{}).empty());
  CHECK_THROWS_AS(induce_type({}, 1), TypeInductionError);
  CHECK_THROWS_AS(induce_type(fine_to_coarse_order(g), 5, 0.0), ConfigError);
  CHECK_THROWS_AS(induce_type(fine_to_coarse_order(g), 5, 1.5), ConfigError);
}

TEST_CASE("threshold 1.0 needs a type covering every seed") {
  auto store = fixtures::settlement_store();
  auto g = build_etg(fixtures::settlement_seeds(), store);
  auto order = fine_to_coarse_order(g);
  CHECK_THROWS_AS(induce_type(order, g.seed_size(), 1.0), TypeInductionError);
  auto single = store_of({{"e1", "T", I}, {"e2", "T", I}});
  auto s = build_etg({"e1", "e2"}, single);
  auto a = induce_type(fine_to_coarse_order(s), s.seed_size(), 0.99);
  CHECK(a.type_id == "T");
  CHECK(a.coverage_fraction == 1.0);
}

TEST_CASE("type members by label") {
  auto store = fixtures::settlement_store();
  auto m = type_members("Q515", {"Paris", "Einstein", "Chicago", "Hallstatt"}, store);
  CHECK(m.members == std::set<std::string>{"Chicago", "Paris"});
  CHECK(m.unresolved == 1);
  CHECK(type_members("Q515", {}, store).members.empty());
  CHECK(type_members("Q515", {"Paris", "Chicago"}, store).members ==
        std::set<std::string>{"Chicago", "Paris"});
  CHECK_THROWS_AS(type_members("Q0", {"Paris"}, store), AnalysisError);

  TypeMembership city(store, "Q515");
  CHECK(city.contains_label("Houston"));
  CHECK(city.contains_label("city"));
  CHECK_FALSE(city.contains_label("village"));
  CHECK_FALSE(city.contains_label("unknown"));
  CHECK_THROWS_AS(TypeMembership(store, "Q90"), AnalysisError);
}

TEST_CASE("store loading and label resolution") {
  std::istringstream edges("a\tT\tinstance_of\nb\tT\tinstance_of\nT\tT\tsubclass_of\nT\tU\tsubclass_of\n");
  std::istringstream labels("a\tSpringfield\nb\tSpringfield\nT\ttown\n");
  auto store = TaxonomyStore::parse(edges, &labels);
  CHECK(store.self_edges_dropped() == 1);
  CHECK(store.edge_count() == 3);
  CHECK(store.label("U") == "U");
  CHECK(store.label("T") == "town");
  CHECK(store.is_type("T"));
  CHECK_FALSE(store.is_type("a"));
  CHECK(store.has_instance_of("a"));
  // Equal degree: smallest id wins.
  CHECK(store.resolve_label("Springfield") == std::optional<std::string>("a"));
  CHECK_FALSE(store.resolve_label("Shelbyville").has_value());
  CHECK(store.reaches("a", "U"));
  CHECK_FALSE(store.reaches("U", "a"));

  std::istringstream bad("a\tT\tpart_of\n");
  CHECK_THROWS_AS(TaxonomyStore::parse(bad, nullptr), DataError);
  std::istringstream short_line("a\tT\n");
  CHECK_THROWS_AS(TaxonomyStore::parse(short_line, nullptr), DataError);
}

TEST_CASE("ambiguous labels prefer the better connected entity") {
  std::istringstream edges("x\tT\tinstance_of\ny\tT\tinstance_of\ny\tU\tinstance_of\n");
  std::istringstream labels("x\tMercury\ny\tMercury\n");
  auto store = TaxonomyStore::parse(edges, &labels);
  CHECK(store.resolve_label("Mercury") == std::optional<std::string>("y"));
}

TEST_CASE("coverage equals brute-force closure on random DAGs") {
  std::mt19937_64 gen(77);
  for (int t = 0; t < 30; ++t) {
    auto dag = oracle::random_dag(gen);
    TaxonomyStore store(dag.edges, {});
    auto g = build_etg(dag.seeds, store);
    auto expected = oracle::brute_force_coverage(dag);
    std::map<std::string, std::size_t> got;
    for (const auto& n : g.nodes) got[n.id] = n.coverage();
    REQUIRE(got == expected);

    auto order = fine_to_coarse_order(condense_cycles(g));
    CHECK(respects_edges(g, order));
    // Parents cover at least what their children cover.
    for (const auto& [c, p] : g.edges) CHECK(g.nodes[p].coverage() >= g.nodes[c].coverage());
    for (const auto& n : g.nodes) CHECK(n.coverage() <= g.seed_size());
  }
}
