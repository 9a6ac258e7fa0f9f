#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mlmprobe/corpus.hpp"
#include "mlmprobe/distribution.hpp"

namespace mlmprobe {

inline constexpr std::size_t kDefaultPresampleCap = 50000;

struct ObjectGroup {
  std::string object_id;
  std::string object_label;
  std::size_t frequency = 0;
};

struct UniformSampleReport {
  std::string relation_id;
  std::size_t median_frequency = 0;  // f_m
  std::size_t groups_kept = 0;
  std::size_t groups_deleted = 0;
  std::size_t facts_out = 0;
};

// Object-label histogram of a relation. Throws AnalysisError when empty.
Distribution answer_histogram(const FactSet& set);

// Groups by object_id, ordered by object_id.
std::vector<ObjectGroup> object_groups(const FactSet& set);

// Lower median: the floor((n+1)/2)-th smallest value.
std::size_t lower_median(std::vector<std::size_t> values);

// Identity when |set| <= cap, otherwise a seeded uniform subset of size cap
// returned in the set's canonical order.
FactSet presample(const FactSet& set, std::size_t cap, std::uint64_t seed);

// Uniform-answer subset: groups larger than the median frequency are
// downsampled to it, equal groups are kept whole, smaller groups are deleted.
std::pair<FactSet, UniformSampleReport> build_uniform_subset(const FactSet& set,
                                                             std::uint64_t seed);

// relation_id \t f_m \t groups_kept \t groups_deleted \t facts_out
void write_report_line(std::ostream& out, const UniformSampleReport& report);

}  // namespace mlmprobe
