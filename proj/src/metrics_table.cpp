#include "mlmprobe/metrics_table.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

namespace {

const char* const kHeader = "experiment,variant,relation_id,metric,value,count";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw DataError("metrics.csv:" + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

bool is_aggregate(const std::string& relation) {
  return relation == kMacroRelation || relation == kPooledRelation;
}

}  // namespace

void MetricsTable::add(std::string experiment, std::string variant, std::string relation_id,
                       std::string metric, std::optional<double> value, std::size_t count) {
  rows_.push_back({std::move(experiment), std::move(variant), std::move(relation_id),
                   std::move(metric), value, count});
}

std::optional<double> MetricsTable::add_macro(const std::string& experiment,
                                              const std::string& variant,
                                              const std::string& metric) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows_) {
    if (r.experiment == experiment && r.variant == variant && r.metric == metric &&
        !is_aggregate(r.relation_id) && r.value) {
      sum += *r.value;
      ++n;
    }
  }
  std::optional<double> mean;
  if (n > 0) mean = sum / static_cast<double>(n);
  add(experiment, variant, kMacroRelation, metric, mean, n);
  return mean;
}

void MetricsTable::write_csv(std::ostream& out) const {
  std::vector<const MetricRow*> sorted;
  sorted.reserve(rows_.size());
  for (const auto& r : rows_) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const MetricRow* a, const MetricRow* b) {
    return std::tie(a->experiment, a->variant, a->relation_id, a->metric) <
           std::tie(b->experiment, b->variant, b->relation_id, b->metric);
  });
  out << kHeader << '\n';
  for (const auto* r : sorted) {
    out << csv_field(r->experiment) << ',' << csv_field(r->variant) << ','
        << csv_field(r->relation_id) << ',' << csv_field(r->metric) << ','
        << (r->value ? format_fixed(*r->value) : std::string("NA")) << ',' << r->count << '\n';
  }
}

std::vector<CsvRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || chomp(line) != kHeader) {
    throw DataError("metrics.csv: missing or unexpected header");
  }
  std::vector<CsvRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (line.empty()) continue;
    auto f = split_csv_line(line, line_no);
    if (f.size() != 6) {
      throw DataError("metrics.csv:" + std::to_string(line_no) + ": expected 6 fields");
    }
    out.push_back({f[0], f[1], f[2], f[3], f[4], f[5]});
  }
  return out;
}

std::vector<CsvRecord> load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return read_metrics_csv(in);
}

namespace {

class CsvIndex {
 public:
  explicit CsvIndex(const std::vector<CsvRecord>& records) {
    for (const auto& r : records) {
      cells_[{r.experiment, r.variant, r.relation_id, r.metric}] = &r;
      experiments_.insert(r.experiment);
    }
  }

  bool has_experiment(const std::string& e) const { return experiments_.count(e) > 0; }

  // Value cell, "-" when absent or NA.
  std::string value(const std::string& e, const std::string& v, const std::string& rel,
                    const std::string& m) const {
    const auto* r = find(e, v, rel, m);
    return r && r->value != "NA" ? r->value : "-";
  }
  std::string count(const std::string& e, const std::string& v, const std::string& rel,
                    const std::string& m) const {
    const auto* r = find(e, v, rel, m);
    return r ? r->count : "-";
  }

  std::vector<std::string> variants(const std::string& e) const {
    std::set<std::string> out;
    for (const auto& [k, r] : cells_) {
      if (std::get<0>(k) == e) out.insert(std::get<1>(k));
    }
    return {out.begin(), out.end()};
  }

  std::vector<std::string> relations(const std::string& e, const std::string& metric) const {
    std::set<std::string> out;
    for (const auto& [k, r] : cells_) {
      if (std::get<0>(k) == e && std::get<3>(k) == metric && !is_aggregate(std::get<2>(k))) {
        out.insert(std::get<2>(k));
      }
    }
    return {out.begin(), out.end()};
  }

 private:
  const CsvRecord* find(const std::string& e, const std::string& v, const std::string& rel,
                        const std::string& m) const {
    auto it = cells_.find({e, v, rel, m});
    return it == cells_.end() ? nullptr : it->second;
  }

  std::map<std::tuple<std::string, std::string, std::string, std::string>, const CsvRecord*>
      cells_;
  std::set<std::string> experiments_;
};

void table(std::ostream& out, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) {
    out << "(no rows)\n\n";
    return;
  }
  out << '|';
  for (const auto& h : header) out << ' ' << h << " |";
  out << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out << (i == 0 ? "---|" : "---:|");
  out << '\n';
  for (const auto& row : rows) {
    out << '|';
    for (const auto& c : row) out << ' ' << c << " |";
    out << '\n';
  }
  out << '\n';
}

// "catalog/dataset" variants of the prompt-bias experiment.
std::vector<std::pair<std::string, std::string>> catalog_datasets(const CsvIndex& idx) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& v : idx.variants("prompt_bias")) {
    auto slash = v.find('/');
    if (slash != std::string::npos) out.emplace_back(v.substr(0, slash), v.substr(slash + 1));
  }
  return out;
}

void render_prompt_bias(std::ostream& out, const CsvIndex& idx) {
  const std::string e = "prompt_bias";
  auto cds = catalog_datasets(idx);
  std::set<std::string> catalogs;
  for (const auto& [c, d] : cds) catalogs.insert(c);

  out << "## Prompt-based retrieval\n\n";
  out << "### Top-5 coverage and precision (macro over relations)\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& [c, d] : cds) {
    std::string v = c + "/" + d;
    rows.push_back({d, c, idx.value(e, d, kMacroRelation, "answer_top5_coverage"),
                    idx.value(e, v, kMacroRelation, "prediction_top5_coverage"),
                    idx.value(e, v, kMacroRelation, "p_at_1")});
  }
  table(out, {"Dataset", "Prompts", "Answers top-5 %", "Predictions top-5 %", "P@1"}, rows);

  out << "### Prompt fitness (macro over relations)\n\n";
  rows.clear();
  for (const auto& [c, d] : cds) {
    std::string v = c + "/" + d;
    rows.push_back({c, d, idx.value(e, v, kMacroRelation, "p_at_1"),
                    idx.value(e, v, kMacroRelation, "kl_prompt_only")});
  }
  table(out, {"Prompts", "Dataset", "P@1", "KL answers vs prompt-only"}, rows);

  out << "### Correlation of prediction distributions across datasets\n\n";
  rows.clear();
  std::vector<std::string> header{"Relation"};
  for (const auto& c : catalogs) {
    header.push_back(c + " top-1");
    header.push_back(c + " mass");
  }
  auto rels = idx.relations(e, "pearson_datasets_mass");
  rels.insert(rels.begin(), kMacroRelation);
  for (const auto& r : rels) {
    std::vector<std::string> row{r};
    for (const auto& c : catalogs) {
      row.push_back(idx.value(e, c, r, "pearson_datasets_top1"));
      row.push_back(idx.value(e, c, r, "pearson_datasets_mass"));
    }
    rows.push_back(std::move(row));
  }
  table(out, header, rows);

  out << "### Correlation between prompt-only and full-query predictions\n\n";
  rows.clear();
  header = {"Relation"};
  for (const auto& [c, d] : cds) {
    header.push_back(c + "/" + d + " top-1");
    header.push_back(c + "/" + d + " mass");
  }
  rels = idx.relations(e, "pearson_prompt_only_mass");
  rels.insert(rels.begin(), kMacroRelation);
  for (const auto& r : rels) {
    std::vector<std::string> row{r};
    for (const auto& [c, d] : cds) {
      row.push_back(idx.value(e, c + "/" + d, r, "pearson_prompt_only_top1"));
      row.push_back(idx.value(e, c + "/" + d, r, "pearson_prompt_only_mass"));
    }
    rows.push_back(std::move(row));
  }
  table(out, header, rows);
}

void render_case_analogy(std::ostream& out, const CsvIndex& idx) {
  const std::string e = "case_analogy";
  out << "## Case-based analogy\n\n";
  out << "### Precision and MRR (macro over relations)\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const std::string v : {"prompt", "case"}) {
    rows.push_back({v, idx.value(e, v, kMacroRelation, "p_at_1"),
                    idx.value(e, v, kMacroRelation, "mrr"),
                    idx.value(e, v, kMacroRelation, "in_type_mrr")});
  }
  table(out, {"Paradigm", "P@1", "MRR", "In-type MRR"}, rows);

  out << "### Better / worse shares (pooled)\n\n";
  table(out, {"Better %", "Worse %", "Queries"},
        {{idx.value(e, "case", kPooledRelation, "better_pct"),
          idx.value(e, "case", kPooledRelation, "worse_pct"),
          idx.count(e, "case", kPooledRelation, "better_pct")}});

  out << "### Type transitions per relation\n\n";
  rows.clear();
  auto rels = idx.relations(e, "precision_delta");
  rels.push_back(kMacroRelation);
  for (const auto& r : rels) {
    rows.push_back({r, idx.value(e, "types", r, "induced_type_coverage"),
                    idx.value(e, "case", r, "precision_delta"),
                    idx.value(e, "case", r, "type_precision_delta"),
                    idx.value(e, "case", r, "wrong_to_right_with_type_change"),
                    idx.value(e, "case", r, "right_to_wrong_without_type_change")});
  }
  table(out,
        {"Relation", "Type coverage", "Precision delta", "Type prec. delta",
         "Wrong->right w/ type change %", "Right->wrong w/o type change %"},
        rows);

  out << "### Rank change, prompt -> case (pooled)\n\n";
  rows.clear();
  for (const std::string v : {"overall", "in_type"}) {
    rows.push_back({v, idx.value(e, v, kPooledRelation, "raised_pct"),
                    idx.value(e, v, kPooledRelation, "unchanged_pct"),
                    idx.value(e, v, kPooledRelation, "dropped_pct"),
                    idx.count(e, v, kPooledRelation, "raised_pct")});
  }
  table(out, {"Rank", "Raised %", "Unchanged %", "Dropped %", "Queries"}, rows);
}

void render_context_inference(std::ostream& out, const CsvIndex& idx) {
  const std::string e = "context_inference";
  out << "## Context-based inference\n\n";
  out << "### Answer presence in context (micro within group)\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const std::string v : {"present", "absent"}) {
    rows.push_back({v, idx.value(e, v, kPooledRelation, "share"),
                    idx.value(e, v, kPooledRelation, "p_at_1_prompt"),
                    idx.value(e, v, kPooledRelation, "p_at_1_context"),
                    idx.value(e, v, kPooledRelation, "delta"),
                    idx.count(e, v, kPooledRelation, "share")});
  }
  table(out, {"Answer", "Share %", "Prompt P@1", "Context P@1", "Delta", "Queries"}, rows);

  out << "### Masked answers (macro over relations)\n\n";
  table(out, {"Prompt", "Context", "Masked context"},
        {{idx.value(e, "prompt", kMacroRelation, "p_at_1"),
          idx.value(e, "context", kMacroRelation, "p_at_1"),
          idx.value(e, "masked_context", kMacroRelation, "p_at_1")}});

  out << "### Reconstruction of the masked answer (micro within group)\n\n";
  rows.clear();
  for (const std::string v : {"reconstructable", "not_reconstructable"}) {
    rows.push_back({v, idx.value(e, v, kPooledRelation, "share"),
                    idx.value(e, v, kPooledRelation, "p_at_1_prompt"),
                    idx.value(e, v, kPooledRelation, "p_at_1_masked_context"),
                    idx.value(e, v, kPooledRelation, "delta"),
                    idx.count(e, v, kPooledRelation, "share")});
  }
  table(out, {"Group", "Share %", "Prompt P@1", "Masked-context P@1", "Delta", "Queries"},
        rows);
}

void render_build_uniform(std::ostream& out, const CsvIndex& idx) {
  const std::string e = "build_uniform";
  out << "## Uniform answer subsets\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : idx.relations(e, "facts_out")) {
    rows.push_back({r, idx.value(e, "uniform", r, "median_frequency"),
                    idx.value(e, "uniform", r, "groups_kept"),
                    idx.value(e, "uniform", r, "groups_deleted"),
                    idx.value(e, "uniform", r, "facts_out")});
  }
  table(out, {"Relation", "Median frequency", "Groups kept", "Groups deleted", "Facts"}, rows);
}

}  // namespace

std::string render_report(const std::vector<CsvRecord>& records) {
  CsvIndex idx(records);
  std::ostringstream out;
  out << "# Probe report\n\n"
      << "Values are percentages except correlations, KL (nats) and MRR. "
         "`-` marks an undefined value.\n\n";
  if (idx.has_experiment("build_uniform")) render_build_uniform(out, idx);
  if (idx.has_experiment("prompt_bias")) render_prompt_bias(out, idx);
  if (idx.has_experiment("case_analogy")) render_case_analogy(out, idx);
  if (idx.has_experiment("context_inference")) render_context_inference(out, idx);
  return out.str();
}

}  // namespace mlmprobe
