#include "mlmprobe/sampler.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "mlmprobe/error.hpp"
#include "mlmprobe/random.hpp"

namespace mlmprobe {

namespace {

bool canonical_less(const Fact& a, const Fact& b) {
  if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
  return a.object_id < b.object_id;
}

}  // namespace

Distribution answer_histogram(const FactSet& set) {
  if (set.empty()) throw AnalysisError("answer_histogram: empty fact set " + set.relation_id);
  std::map<std::string, std::size_t> counts;
  for (const auto& f : set.facts) ++counts[f.object_label];
  return Distribution::from_counts(counts);
}

std::vector<ObjectGroup> object_groups(const FactSet& set) {
  std::map<std::string, ObjectGroup> groups;
  for (const auto& f : set.facts) {
    auto& g = groups[f.object_id];
    g.object_id = f.object_id;
    g.object_label = f.object_label;
    ++g.frequency;
  }
  std::vector<ObjectGroup> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) out.push_back(std::move(g));
  return out;
}

std::size_t lower_median(std::vector<std::size_t> values) {
  if (values.empty()) throw AnalysisError("lower_median of an empty list");
  const std::size_t rank = (values.size() + 1) / 2 - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank),
                   values.end());
  return values[rank];
}

FactSet presample(const FactSet& set, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw ConfigError("presample cap must be positive");
  if (set.size() <= cap) return set;
  Rng rng(seed);
  auto picks = rng.sample_indices(set.size(), cap);
  std::sort(picks.begin(), picks.end());
  FactSet out{set.relation_id, {}};
  out.facts.reserve(cap);
  for (auto i : picks) out.facts.push_back(set.facts[i]);
  return out;
}

std::pair<FactSet, UniformSampleReport> build_uniform_subset(const FactSet& set,
                                                             std::uint64_t seed) {
  if (set.empty()) throw AnalysisError("build_uniform_subset: empty fact set " + set.relation_id);

  // object_id -> indices into set.facts, in canonical order.
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < set.facts.size(); ++i) members[set.facts[i].object_id].push_back(i);

  std::vector<std::size_t> frequencies;
  frequencies.reserve(members.size());
  for (const auto& [id, idx] : members) frequencies.push_back(idx.size());
  const std::size_t f_m = lower_median(frequencies);

  UniformSampleReport report;
  report.relation_id = set.relation_id;
  report.median_frequency = f_m;

  Rng rng(seed);
  FactSet out{set.relation_id, {}};
  for (const auto& [id, idx] : members) {
    if (idx.size() < f_m) {
      ++report.groups_deleted;
      continue;
    }
    ++report.groups_kept;
    if (idx.size() == f_m) {
      for (auto i : idx) out.facts.push_back(set.facts[i]);
      continue;
    }
    for (auto pick : rng.sample_indices(idx.size(), f_m)) out.facts.push_back(set.facts[idx[pick]]);
  }
  std::sort(out.facts.begin(), out.facts.end(), canonical_less);
  report.facts_out = out.facts.size();
  return {std::move(out), report};
}

void write_report_line(std::ostream& out, const UniformSampleReport& report) {
  out << report.relation_id << '\t' << report.median_frequency << '\t' << report.groups_kept
      << '\t' << report.groups_deleted << '\t' << report.facts_out << '\n';
}

}  // namespace mlmprobe
