#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mlmprobe/distribution.hpp"
#include "mlmprobe/protocol.hpp"

namespace mlmprobe {

// Records and gold answers of one run, keyed by an instance key shared across
// paradigms (Fact::instance_key()).
using RecordMap = std::map<std::string, PredictionRecord>;

struct Gold {
  std::string label;
  std::string relation_id;
  std::string subject_label;
};
using GoldMap = std::map<std::string, Gold>;

inline constexpr double kDefaultKlEpsilon = 1e-6;

// Histogram of top-1 predictions across records.
Distribution prediction_histogram(std::span<const PredictionRecord> records);
// Mean over records of each record's renormalized top-k probability mass.
Distribution prediction_mass(std::span<const PredictionRecord> records);
// exp(log_prob) over the record's top-k, renormalized.
Distribution record_distribution(const PredictionRecord& record);

// Pearson r of the two weight vectors aligned on the union of supports
// (absent tokens weigh 0). Throws AnalysisError when the union has fewer
// than two tokens or either vector is constant.
double pearson(const Distribution& a, const Distribution& b);
// Same, aligned on the union of both supports and `extra_support`. Top-1
// histograms are compared over every token the model predicted, so two
// identical point histograms correlate perfectly.
double pearson(const Distribution& a, const Distribution& b,
               const std::set<std::string>& extra_support);
double pearson(std::span<const double> x, std::span<const double> y);

// sum_t p(t) ln(p(t) / q~(t)) over the support of p, where
// q~(t) = (q(t) + epsilon [t in supp p]) / (1 + epsilon |supp p|).
double kl_divergence(const Distribution& p, const Distribution& q,
                     double epsilon = kDefaultKlEpsilon);

// Percentage of the counts_total instances whose value is among the k
// heaviest tokens of d.
double topk_coverage(const Distribution& d, std::size_t counts_total, std::size_t k);

// Percentage of records whose gold label is among the top-k predictions.
double precision_at_k(const RecordMap& records, const GoldMap& golds, std::size_t k);
double macro_mean(std::span<const double> values);

// Mean reciprocal rank of the gold label. With a filter, ranks count only
// predictions inside it; a gold outside the (filtered) list contributes 0.
double mrr(const RecordMap& records, const GoldMap& golds,
           const std::set<std::string>* candidate_filter = nullptr);

struct RankOutcome {
  std::optional<std::size_t> overall_rank;  // 1-based
  std::optional<std::size_t> in_type_rank;
};
using RankOutcomes = std::map<std::string, RankOutcome>;

RankOutcome rank_outcome(const PredictionRecord& record, const std::string& gold,
                         const std::set<std::string>* type_members = nullptr);

enum class RankField { overall, in_type };

struct RankChange {
  std::size_t raised = 0;
  std::size_t unchanged = 0;
  std::size_t dropped = 0;

  std::size_t total() const { return raised + unchanged + dropped; }
  double raised_pct() const;
  double unchanged_pct() const;
  double dropped_pct() const;
};

// Counts queries whose rank is present in both runs. Throws AnalysisError when
// the key sets differ.
RankChange rank_change_analysis(const RankOutcomes& before, const RankOutcomes& after,
                                RankField field);

struct TransitionRow {
  std::size_t queries = 0;
  double precision_before = 0.0;
  double precision_after = 0.0;
  double type_precision_before = 0.0;
  double type_precision_after = 0.0;
  std::size_t wrong_to_right = 0;
  std::size_t right_to_wrong = 0;
  // Percentages over the flipped queries; absent with fewer than
  // kMinFlipsForTransition flips.
  std::optional<double> wrong_to_right_with_type_change;
  std::optional<double> right_to_wrong_without_type_change;

  double precision_delta() const { return precision_after - precision_before; }
  double type_precision_delta() const { return type_precision_after - type_precision_before; }
  double better_pct() const;
  double worse_pct() const;
};

inline constexpr std::size_t kMinFlipsForTransition = 3;

// One relation's before/after comparison. `in_type` tells whether a predicted
// label belongs to the relation's induced object type.
TransitionRow type_transition_analysis(const RecordMap& before, const RecordMap& after,
                                       const GoldMap& golds,
                                       const std::function<bool(const std::string&)>& in_type);

struct SplitRow {
  std::string group;
  std::size_t count = 0;
  double share = 0.0;  // percent of all queries in the split
  std::optional<double> precision_before;
  std::optional<double> precision_after;

  std::optional<double> delta() const;
};

// Rows {present, absent}: micro P@1 of the prompt and context runs inside each
// group.
std::array<SplitRow, 2> leakage_split(const RecordMap& prompt, const RecordMap& context,
                                      const std::map<std::string, bool>& presence,
                                      const GoldMap& golds);

// Rows {reconstructable, not_reconstructable} over the reconstruction run's
// keys: micro P@1 of the prompt and masked-context runs.
std::array<SplitRow, 2> reconstruction_split(const RecordMap& prompt,
                                             const RecordMap& masked_context,
                                             const RecordMap& reconstruction,
                                             const GoldMap& golds);

struct ContextTriple {
  double prompt = 0.0;
  double context = 0.0;
  double masked_context = 0.0;
};

// Macro (per-relation mean) P@1 of the three runs; identical key sets required.
ContextTriple masked_context_overall(const RecordMap& prompt, const RecordMap& context,
                                     const RecordMap& masked_context, const GoldMap& golds);

bool surface_form_overlap(const std::string& subject_label, const std::string& predicted_label);

// Percentage of records whose top-1 is a substring of the subject label.
double surface_form_rate(const RecordMap& records, const GoldMap& golds);

// Splits a run by relation.
std::map<std::string, RecordMap> by_relation(const RecordMap& records, const GoldMap& golds);

}  // namespace mlmprobe
