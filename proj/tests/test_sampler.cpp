#include <doctest.h>

#include <sstream>

#include "mlmprobe/analytics.hpp"
#include "mlmprobe/error.hpp"
#include "mlmprobe/sampler.hpp"
#include "oracles.hpp"

using namespace mlmprobe;

namespace {

FactSet with_groups(const std::vector<std::pair<std::string, int>>& groups) {
  FactSet set{"R", {}};
  int s = 0;
  for (const auto& [obj, n] : groups) {
    for (int i = 0; i < n; ++i, ++s) {
      char id[16];
      std::snprintf(id, sizeof id, "S%03d", s);
      set.facts.push_back({id, id, "R", "O_" + obj, obj});
    }
  }
  return set;
}

std::vector<std::string> subjects(const FactSet& set) {
  std::vector<std::string> out;
  for (const auto& f : set.facts) out.push_back(f.subject_id);
  return out;
}

}  // namespace

TEST_CASE("answer histogram counts object labels") {
  auto d = answer_histogram(with_groups({{"a", 2}, {"b", 1}}));
  CHECK(d.weight("a") == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(d.weight("b") == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(answer_histogram(with_groups({{"x", 1}})).weight("x") == 1.0);
  CHECK_THROWS_AS(answer_histogram(FactSet{"R", {}}), AnalysisError);
}

TEST_CASE("lower median") {
  CHECK(lower_median({5, 3, 1}) == 3);
  CHECK(lower_median({4, 1, 3, 2}) == 2);
  CHECK(lower_median({7}) == 7);
  CHECK_THROWS_AS(lower_median({}), AnalysisError);
}

TEST_CASE("presample") {
  auto small = with_groups({{"a", 10}});
  CHECK(presample(small, 50000, 1).facts == small.facts);

  auto big = with_groups({{"a", 50}, {"b", 50}});
  auto first = presample(big, 10, 42);
  CHECK(first.size() == 10);
  CHECK(presample(big, 10, 42).facts == first.facts);
  CHECK(std::is_sorted(first.facts.begin(), first.facts.end(), [](const auto& x, const auto& y) {
    return x.subject_id < y.subject_id;
  }));
  auto s1 = presample(big, 10, 1), s2 = presample(big, 10, 2);
  CHECK(s1.facts != s2.facts);
  // Pinned draws: any change to the generator or the sampling order shows up here.
  CHECK(subjects(s1) == std::vector<std::string>{"S000", "S010", "S028", "S040", "S045", "S059",
                                                  "S062", "S072", "S079", "S080"});
  CHECK(subjects(s2) == std::vector<std::string>{"S002", "S003", "S018", "S028", "S030", "S049",
                                                  "S064", "S068", "S070", "S083"});
  CHECK_THROWS_AS(presample(big, 0, 1), ConfigError);
}

TEST_CASE("uniform subset on a hand-traced fixture") {
  auto set = with_groups({{"x", 5}, {"y", 3}, {"z", 1}});
  auto [out, report] = build_uniform_subset(set, 7);
  CHECK(report.median_frequency == 3);
  CHECK(report.groups_kept == 2);
  CHECK(report.groups_deleted == 1);
  CHECK(report.facts_out == 6);
  auto hist = answer_histogram(out);
  CHECK(hist.weight("x") == 0.5);
  CHECK(hist.weight("y") == 0.5);
  CHECK(hist.weight("z") == 0.0);
  CHECK(oracle::satisfies_uniform_rule(set, out));

  std::ostringstream line;
  write_report_line(line, report);
  CHECK(line.str() == "R\t3\t2\t1\t6\n");
}

TEST_CASE("uniform subset keeps equal groups whole") {
  auto set = with_groups({{"a", 2}, {"b", 2}, {"c", 2}});
  auto [out, report] = build_uniform_subset(set, 3);
  CHECK(out.facts == set.facts);
  CHECK(report.groups_deleted == 0);

  auto single = with_groups({{"only", 4}});
  auto [one, r1] = build_uniform_subset(single, 3);
  CHECK(one.facts == single.facts);
  CHECK(r1.groups_kept == 1);
  CHECK_THROWS_AS(build_uniform_subset(FactSet{"R", {}}, 1), AnalysisError);
}

TEST_CASE("uniform subset properties on random relations") {
  std::mt19937_64 gen(2024);
  for (int t = 0; t < 100; ++t) {
    auto set = oracle::random_relation(gen, "R" + std::to_string(t));
    auto [out, report] = build_uniform_subset(set, static_cast<std::uint64_t>(t));
    REQUIRE(oracle::satisfies_uniform_rule(set, out));
    CHECK(report.facts_out == report.groups_kept * report.median_frequency);
    CHECK(out.size() <= set.size());
    // Determinism.
    CHECK(build_uniform_subset(set, static_cast<std::uint64_t>(t)).first.facts == out.facts);
    // Exact uniformity: top-k coverage is k / |objects|.
    auto hist = answer_histogram(out);
    for (std::size_t k = 1; k <= report.groups_kept; ++k) {
      CHECK(topk_coverage(hist, out.size(), k) ==
            doctest::Approx(100.0 * static_cast<double>(k) / static_cast<double>(report.groups_kept)));
    }
  }
}
