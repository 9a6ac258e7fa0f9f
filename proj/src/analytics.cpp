#include "mlmprobe/analytics.hpp"

#include <algorithm>
#include <cmath>

#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

namespace {

const Gold& gold_for(const GoldMap& golds, const std::string& key) {
  auto it = golds.find(key);
  if (it == golds.end()) throw AnalysisError("no gold label for query '" + key + "'");
  return it->second;
}

bool top1_is(const PredictionRecord& record, const std::string& label) {
  return !record.predictions.empty() && record.predictions.front().token == label;
}

void require_same_keys(const RecordMap& a, const RecordMap& b, const char* what) {
  bool same = a.size() == b.size() &&
              std::equal(a.begin(), a.end(), b.begin(),
                         [](const auto& x, const auto& y) { return x.first == y.first; });
  if (!same) throw AnalysisError(std::string(what) + ": runs cover different queries");
}

double percent(std::size_t part, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(total);
}

}  // namespace

Distribution prediction_histogram(std::span<const PredictionRecord> records) {
  if (records.empty()) throw AnalysisError("prediction histogram of an empty run");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (r.predictions.empty()) {
      throw AnalysisError("record '" + r.query_id + "' has no predictions");
    }
    ++counts[r.predictions.front().token];
  }
  return Distribution::from_counts(counts);
}

Distribution record_distribution(const PredictionRecord& record) {
  if (record.predictions.empty()) {
    throw AnalysisError("record '" + record.query_id + "' has no predictions");
  }
  // Shift by the top log-prob so tiny probabilities do not underflow to 0.
  double top = record.predictions.front().log_prob;
  std::map<std::string, double> weights;
  for (const auto& p : record.predictions) weights[p.token] += std::exp(p.log_prob - top);
  return Distribution::from_weights(std::move(weights));
}

Distribution prediction_mass(std::span<const PredictionRecord> records) {
  if (records.empty()) throw AnalysisError("prediction mass of an empty run");
  std::map<std::string, double> sum;
  for (const auto& r : records) {
    const auto d = record_distribution(r);
    for (const auto& [token, w] : d.weights()) sum[token] += w;
  }
  return Distribution::from_weights(std::move(sum));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw AnalysisError("pearson: vectors differ in length");
  if (x.size() < 2) throw AnalysisError("pearson: fewer than two aligned values");
  auto constant = [](std::span<const double> v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
  };
  if (constant(x) || constant(y)) throw AnalysisError("pearson: constant vector, correlation undefined");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double pearson(const Distribution& a, const Distribution& b) { return pearson(a, b, {}); }

double pearson(const Distribution& a, const Distribution& b,
               const std::set<std::string>& extra_support) {
  std::set<std::string> support = extra_support;
  for (const auto& [t, w] : a.weights()) support.insert(t);
  for (const auto& [t, w] : b.weights()) support.insert(t);
  std::vector<double> x, y;
  x.reserve(support.size());
  y.reserve(support.size());
  for (const auto& t : support) {
    x.push_back(a.weight(t));
    y.push_back(b.weight(t));
  }
  return pearson(x, y);
}

double kl_divergence(const Distribution& p, const Distribution& q, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw AnalysisError("kl_divergence: epsilon must be positive");
  }
  if (p.empty()) throw AnalysisError("kl_divergence: empty reference distribution");
  const double z = 1.0 + epsilon * static_cast<double>(p.size());
  double kl = 0.0;
  for (const auto& [t, pt] : p.weights()) {
    double qt = (q.weight(t) + epsilon) / z;
    kl += pt * std::log(pt / qt);
  }
  return std::max(kl, 0.0);
}

double topk_coverage(const Distribution& d, std::size_t counts_total, std::size_t k) {
  if (k == 0) throw AnalysisError("topk_coverage: k must be at least 1");
  if (counts_total == 0 || d.empty()) return 0.0;
  double mass = 0.0;
  auto ranked = d.ranked();
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) mass += ranked[i].second;
  return 100.0 * std::min(mass, 1.0);
}

double precision_at_k(const RecordMap& records, const GoldMap& golds, std::size_t k) {
  if (records.empty()) throw AnalysisError("precision of an empty run");
  std::size_t hits = 0;
  for (const auto& [key, r] : records) {
    const auto& gold = gold_for(golds, key).label;
    std::size_t depth = std::min(k, r.predictions.size());
    for (std::size_t i = 0; i < depth; ++i) {
      if (r.predictions[i].token == gold) {
        ++hits;
        break;
      }
    }
  }
  return percent(hits, records.size());
}

double macro_mean(std::span<const double> values) {
  if (values.empty()) throw AnalysisError("macro average over no relations");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

RankOutcome rank_outcome(const PredictionRecord& record, const std::string& gold,
                         const std::set<std::string>* type_members) {
  RankOutcome out;
  std::size_t in_type = 0;
  for (std::size_t i = 0; i < record.predictions.size(); ++i) {
    const auto& token = record.predictions[i].token;
    bool member = type_members && type_members->count(token);
    if (member) ++in_type;
    if (token == gold) {
      out.overall_rank = i + 1;
      if (member) out.in_type_rank = in_type;
      break;
    }
  }
  return out;
}

double mrr(const RecordMap& records, const GoldMap& golds,
           const std::set<std::string>* candidate_filter) {
  if (records.empty()) throw AnalysisError("MRR of an empty run");
  double sum = 0.0;
  for (const auto& [key, r] : records) {
    const auto& gold = gold_for(golds, key).label;
    std::size_t rank = 0;
    for (const auto& p : r.predictions) {
      if (candidate_filter && !candidate_filter->count(p.token)) continue;
      ++rank;
      if (p.token == gold) {
        sum += 1.0 / static_cast<double>(rank);
        break;
      }
    }
  }
  return sum / static_cast<double>(records.size());
}

double RankChange::raised_pct() const { return percent(raised, total()); }
double RankChange::unchanged_pct() const { return percent(unchanged, total()); }
double RankChange::dropped_pct() const { return percent(dropped, total()); }

RankChange rank_change_analysis(const RankOutcomes& before, const RankOutcomes& after,
                                RankField field) {
  bool same = before.size() == after.size() &&
              std::equal(before.begin(), before.end(), after.begin(),
                         [](const auto& x, const auto& y) { return x.first == y.first; });
  if (!same) throw AnalysisError("rank change: runs cover different queries");
  auto pick = [field](const RankOutcome& o) {
    return field == RankField::overall ? o.overall_rank : o.in_type_rank;
  };
  RankChange out;
  for (auto b = before.begin(), a = after.begin(); b != before.end(); ++b, ++a) {
    auto rb = pick(b->second), ra = pick(a->second);
    if (!rb || !ra) continue;
    if (*ra < *rb) {
      ++out.raised;
    } else if (*ra > *rb) {
      ++out.dropped;
    } else {
      ++out.unchanged;
    }
  }
  return out;
}

double TransitionRow::better_pct() const { return percent(wrong_to_right, queries); }
double TransitionRow::worse_pct() const { return percent(right_to_wrong, queries); }

TransitionRow type_transition_analysis(const RecordMap& before, const RecordMap& after,
                                       const GoldMap& golds,
                                       const std::function<bool(const std::string&)>& in_type) {
  require_same_keys(before, after, "type transition");
  if (!in_type) throw AnalysisError("type transition: no type membership oracle");
  if (before.empty()) throw AnalysisError("type transition over no queries");
  TransitionRow row;
  row.queries = before.size();
  std::size_t right_b = 0, right_a = 0, typed_b = 0, typed_a = 0;
  std::size_t w2r_changed = 0, r2w_unchanged = 0;
  for (auto b = before.begin(), a = after.begin(); b != before.end(); ++b, ++a) {
    const auto& gold = gold_for(golds, b->first).label;
    if (b->second.predictions.empty() || a->second.predictions.empty()) {
      throw AnalysisError("type transition: record '" + b->first + "' has no predictions");
    }
    bool cb = top1_is(b->second, gold), ca = top1_is(a->second, gold);
    bool tb = in_type(b->second.top1()), ta = in_type(a->second.top1());
    right_b += cb;
    right_a += ca;
    typed_b += tb;
    typed_a += ta;
    if (!cb && ca) {
      ++row.wrong_to_right;
      if (tb != ta) ++w2r_changed;
    } else if (cb && !ca) {
      ++row.right_to_wrong;
      if (tb == ta) ++r2w_unchanged;
    }
  }
  row.precision_before = percent(right_b, row.queries);
  row.precision_after = percent(right_a, row.queries);
  row.type_precision_before = percent(typed_b, row.queries);
  row.type_precision_after = percent(typed_a, row.queries);
  if (row.wrong_to_right >= kMinFlipsForTransition) {
    row.wrong_to_right_with_type_change = percent(w2r_changed, row.wrong_to_right);
  }
  if (row.right_to_wrong >= kMinFlipsForTransition) {
    row.right_to_wrong_without_type_change = percent(r2w_unchanged, row.right_to_wrong);
  }
  return row;
}

std::optional<double> SplitRow::delta() const {
  if (!precision_before || !precision_after) return std::nullopt;
  return *precision_after - *precision_before;
}

namespace {

// Micro P@1 of two runs inside each of two groups; group_of(key) -> index.
std::array<SplitRow, 2> split_rows(const std::array<std::string, 2>& names,
                                   const std::vector<std::pair<std::string, std::size_t>>& members,
                                   const RecordMap& before, const RecordMap& after,
                                   const GoldMap& golds) {
  std::array<SplitRow, 2> rows;
  std::array<std::size_t, 2> hits_b{}, hits_a{};
  for (std::size_t g = 0; g < 2; ++g) rows[g].group = names[g];
  for (const auto& [key, g] : members) {
    const auto& gold = gold_for(golds, key).label;
    ++rows[g].count;
    hits_b[g] += top1_is(before.at(key), gold);
    hits_a[g] += top1_is(after.at(key), gold);
  }
  for (std::size_t g = 0; g < 2; ++g) {
    rows[g].share = percent(rows[g].count, members.size());
    if (rows[g].count > 0) {
      rows[g].precision_before = percent(hits_b[g], rows[g].count);
      rows[g].precision_after = percent(hits_a[g], rows[g].count);
    }
  }
  return rows;
}

}  // namespace

std::array<SplitRow, 2> leakage_split(const RecordMap& prompt, const RecordMap& context,
                                      const std::map<std::string, bool>& presence,
                                      const GoldMap& golds) {
  require_same_keys(prompt, context, "leakage split");
  std::vector<std::pair<std::string, std::size_t>> members;
  members.reserve(prompt.size());
  for (const auto& [key, r] : prompt) {
    auto it = presence.find(key);
    if (it == presence.end()) throw AnalysisError("leakage split: no presence flag for '" + key + "'");
    members.emplace_back(key, it->second ? 0 : 1);
  }
  return split_rows({"present", "absent"}, members, prompt, context, golds);
}

std::array<SplitRow, 2> reconstruction_split(const RecordMap& prompt,
                                             const RecordMap& masked_context,
                                             const RecordMap& reconstruction,
                                             const GoldMap& golds) {
  std::vector<std::pair<std::string, std::size_t>> members;
  members.reserve(reconstruction.size());
  for (const auto& [key, r] : reconstruction) {
    if (!prompt.count(key) || !masked_context.count(key)) {
      throw AnalysisError("reconstruction split: query '" + key + "' missing from the compared runs");
    }
    members.emplace_back(key, top1_is(r, gold_for(golds, key).label) ? 0 : 1);
  }
  return split_rows({"reconstructable", "not_reconstructable"}, members, prompt, masked_context,
                    golds);
}

std::map<std::string, RecordMap> by_relation(const RecordMap& records, const GoldMap& golds) {
  std::map<std::string, RecordMap> out;
  for (const auto& [key, r] : records) out[gold_for(golds, key).relation_id].emplace(key, r);
  return out;
}

ContextTriple masked_context_overall(const RecordMap& prompt, const RecordMap& context,
                                     const RecordMap& masked_context, const GoldMap& golds) {
  require_same_keys(prompt, context, "masked context");
  require_same_keys(prompt, masked_context, "masked context");
  auto macro = [&](const RecordMap& run) {
    std::vector<double> per_relation;
    for (const auto& [rel, recs] : by_relation(run, golds)) {
      per_relation.push_back(precision_at_k(recs, golds, 1));
    }
    return macro_mean(per_relation);
  };
  return {macro(prompt), macro(context), macro(masked_context)};
}

bool surface_form_overlap(const std::string& subject_label, const std::string& predicted_label) {
  return ascii_lower(subject_label).find(ascii_lower(predicted_label)) != std::string::npos;
}

double surface_form_rate(const RecordMap& records, const GoldMap& golds) {
  if (records.empty()) throw AnalysisError("surface-form rate of an empty run");
  std::size_t hits = 0;
  for (const auto& [key, r] : records) {
    if (!r.predictions.empty() &&
        surface_form_overlap(gold_for(golds, key).subject_label, r.top1())) {
      ++hits;
    }
  }
  return percent(hits, records.size());
}

}  // namespace mlmprobe
