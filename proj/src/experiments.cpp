#include "mlmprobe/experiments.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mlmprobe/analytics.hpp"
#include "mlmprobe/cache.hpp"
#include "mlmprobe/error.hpp"
#include "mlmprobe/paradigms.hpp"
#include "mlmprobe/random.hpp"
#include "mlmprobe/sampler.hpp"
#include "mlmprobe/scorer.hpp"
#include "mlmprobe/taxonomy.hpp"

namespace mlmprobe {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::prompt_bias: return "prompt_bias";
    case ExperimentKind::build_uniform: return "build_uniform";
    case ExperimentKind::case_analogy: return "case_analogy";
    case ExperimentKind::context_inference: return "context_inference";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view text) {
  std::string s(text);
  for (auto& c : s) {
    if (c == '-') c = '_';
  }
  for (auto k : {ExperimentKind::prompt_bias, ExperimentKind::build_uniform,
                 ExperimentKind::case_analogy, ExperimentKind::context_inference}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown experiment '" + std::string(text) + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  static const std::set<std::string> known{
      "experiment", "facts",         "contrast_facts", "prompts",       "taxonomy",
      "labels",     "contexts",      "scorer_cmd",     "cache_dir",     "out",
      "seed",       "top_k",         "cases",          "type_threshold", "kl_epsilon",
      "max_in_flight", "presample_cap", "token_filter", "no_cache",     "overwrite"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    if (j.contains("experiment")) {
      c.experiment = parse_experiment_kind(j.at("experiment").get<std::string>());
    }
    auto path = [&](const char* key, fs::path& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::string>();
    };
    path("facts", c.facts);
    path("contrast_facts", c.contrast_facts);
    path("taxonomy", c.taxonomy);
    path("labels", c.labels);
    path("contexts", c.contexts);
    path("cache_dir", c.cache_dir);
    path("out", c.out);
    if (j.contains("scorer_cmd")) c.scorer_cmd = j.at("scorer_cmd").get<std::string>();
    if (j.contains("prompts")) {
      for (const auto& p : j.at("prompts")) {
        c.prompts.push_back({parse_prompt_source(p.at("source").get<std::string>()),
                             p.at("path").get<std::string>()});
      }
    }
    auto get = [&](const char* key, auto& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("seed", c.seed);
    get("top_k", c.top_k);
    get("cases", c.cases);
    get("type_threshold", c.type_threshold);
    get("kl_epsilon", c.kl_epsilon);
    get("max_in_flight", c.max_in_flight);
    get("presample_cap", c.presample_cap);
    get("token_filter", c.token_filter);
    get("no_cache", c.no_cache);
    get("overwrite", c.overwrite);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json prompts_json = json::array();
  for (const auto& p : prompts) {
    prompts_json.push_back({{"source", std::string(to_string(p.source))}, {"path", p.path.string()}});
  }
  return {{"experiment", std::string(to_string(experiment))},
          {"facts", facts.string()},
          {"contrast_facts", contrast_facts.string()},
          {"prompts", prompts_json},
          {"taxonomy", taxonomy.string()},
          {"labels", labels.string()},
          {"contexts", contexts.string()},
          {"scorer_cmd", scorer_cmd},
          {"cache_dir", cache_dir.string()},
          {"out", out.string()},
          {"seed", seed},
          {"top_k", top_k},
          {"cases", cases},
          {"type_threshold", type_threshold},
          {"kl_epsilon", kl_epsilon},
          {"max_in_flight", max_in_flight},
          {"presample_cap", presample_cap},
          {"token_filter", token_filter},
          {"no_cache", no_cache},
          {"overwrite", overwrite}};
}

void ExperimentConfig::validate() const {
  auto require_file = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing ") + what);
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  require_file(facts, "--facts");
  switch (experiment) {
    case ExperimentKind::prompt_bias:
      require_file(contrast_facts, "--contrast-facts");
      break;
    case ExperimentKind::case_analogy:
      require_file(taxonomy, "--taxonomy");
      if (!labels.empty()) require_file(labels, "--labels");
      break;
    case ExperimentKind::context_inference:
      require_file(contexts, "--contexts");
      break;
    case ExperimentKind::build_uniform:
      break;
  }
  if (experiment != ExperimentKind::build_uniform) {
    if (prompts.empty()) throw ConfigError("missing --prompts");
    std::set<PromptSource> seen;
    for (const auto& p : prompts) {
      require_file(p.path, "--prompts");
      if (!seen.insert(p.source).second) {
        throw ConfigError("prompt catalog '" + std::string(to_string(p.source)) + "' given twice");
      }
    }
  }
  if (top_k == 0) throw ConfigError("--top-k must be at least 1");
  if (!(type_threshold > 0.0 && type_threshold <= 1.0)) {
    throw ConfigError("--type-threshold must be in (0, 1]");
  }
  if (!(kl_epsilon > 0.0)) throw ConfigError("kl_epsilon must be positive");
  if (max_in_flight == 0) throw ConfigError("--max-in-flight must be at least 1");
  if (presample_cap == 0) throw ConfigError("--presample-cap must be at least 1");
  if (out.empty()) throw ConfigError("missing --out");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw ConfigError("--out is not a directory: " + out.string());
    if (!fs::is_empty(out) && !overwrite) {
      throw ConfigError("output directory " + out.string() + " is not empty (use --overwrite)");
    }
  }
}

namespace {

// Rethrows err with `stage: ` prefixed, keeping its class.
template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  const std::string p = name + ": ";
  try {
    return body();
  } catch (const ProtocolDesync& e) {
    throw ProtocolDesync(p + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(p + e.what(), e.retryable());
  } catch (const ConfigError& e) {
    throw ConfigError(p + e.what());
  } catch (const DataError& e) {
    throw DataError(p + e.what());
  } catch (const AnalysisError& e) {
    throw AnalysisError(p + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

class Session {
 public:
  Session(const ExperimentConfig& config, TransportFactory connect)
      : config_(config), connect_(std::move(connect)) {
    if (!connect_) {
      if (config_.scorer_cmd.empty()) throw ConfigError("missing --scorer-cmd");
      connect_ = [cmd = config_.scorer_cmd] { return std::make_unique<SubprocessTransport>(cmd); };
    }
  }

  Scorer& scorer() {
    if (!scorer_) {
      scorer_ = std::make_unique<Scorer>(
          connect_(), ScorerOptions{config_.max_in_flight, ScorerOptions{}.max_retries});
      spdlog::info("scorer ready: model {}", scorer_->model_id());
    }
    return *scorer_;
  }

  PredictionCache* cache() {
    if (config_.no_cache) return nullptr;
    if (!cache_) {
      fs::path dir = config_.cache_dir.empty() ? config_.out / "cache" : config_.cache_dir;
      cache_ = std::make_unique<PredictionCache>(dir);
    }
    return cache_.get();
  }

  // Scores the queries; records come back aligned with the input. Queries
  // sharing an id are sent once.
  std::vector<PredictionRecord> score(const std::vector<Query>& queries) {
    std::vector<ScoreRequest> unique;
    std::map<std::string, std::size_t> slot;
    std::vector<std::size_t> where(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
      auto [it, fresh] = slot.emplace(queries[i].query_id, unique.size());
      if (fresh) {
        unique.push_back({queries[i].query_id, queries[i].text, queries[i].target_mask_index,
                          config_.top_k, std::nullopt});
      }
      where[i] = it->second;
    }
    auto outcomes = cached_score_batch(unique, scorer(), cache(), config_.max_in_flight);
    std::vector<PredictionRecord> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
      auto& o = outcomes[where[i]];
      if (!o.ok()) {
        throw ProtocolError("query " + queries[i].query_id + " failed: " + o.error, false);
      }
      out.push_back(*o.record);
    }
    return out;
  }

  std::size_t requests_sent() const { return scorer_ ? scorer_->requests_sent() : 0; }
  bool connected() const { return scorer_ != nullptr; }

 private:
  const ExperimentConfig& config_;
  TransportFactory connect_;
  std::unique_ptr<Scorer> scorer_;
  std::unique_ptr<PredictionCache> cache_;
};

std::map<std::string, FactSet> load_relations(const fs::path& path) {
  auto loaded = load_facts(path);
  std::map<std::string, FactSet> out;
  for (auto& set : loaded.relations) out.emplace(set.relation_id, std::move(set));
  return out;
}

GoldMap golds_of(const FactSet& set) {
  GoldMap out;
  for (const auto& f : set.facts) {
    out[f.instance_key()] = {f.object_label, f.relation_id, f.subject_label};
  }
  return out;
}

std::optional<double> try_pearson(const Distribution& a, const Distribution& b,
                                  const std::set<std::string>& extra_support = {}) {
  try {
    return pearson(a, b, extra_support);
  } catch (const AnalysisError&) {
    return std::nullopt;
  }
}

std::vector<PredictionRecord> values_of(const RecordMap& m) {
  std::vector<PredictionRecord> out;
  out.reserve(m.size());
  for (const auto& [k, r] : m) out.push_back(r);
  return out;
}

// Shared frame of every runner: validation, output directory, resolved
// config, partial artifacts on failure.
template <class Body>
RunResult run_guarded(const ExperimentConfig& config, Body&& body) {
  config.validate();
  std::error_code ec;
  fs::create_directories(config.out, ec);
  if (ec) throw ConfigError("cannot create " + config.out.string() + ": " + ec.message());
  write_text(config.out / "config.json", config.to_json().dump(2) + "\n");

  RunResult result;
  result.summary = {{"experiment", std::string(to_string(config.experiment))}};
  auto flush = [&] {
    std::ostringstream csv;
    result.metrics.write_csv(csv);
    write_text(config.out / "metrics.csv", csv.str());
    std::istringstream in(csv.str());
    write_text(config.out / "report.md", render_report(read_metrics_csv(in)));
    write_text(config.out / "summary.json", result.summary.dump(2) + "\n");
  };
  try {
    body(result);
  } catch (const std::exception& e) {
    result.summary["failed"] = e.what();
    try {
      flush();
    } catch (const std::exception& inner) {
      spdlog::warn("could not write partial artifacts: {}", inner.what());
    }
    throw;
  }
  flush();
  return result;
}

}  // namespace

RunResult run_prompt_bias(const ExperimentConfig& config, TransportFactory connect) {
  return run_guarded(config, [&](RunResult& result) {
    const std::string e = "prompt_bias";
    auto& m = result.metrics;
    std::map<std::string, std::map<std::string, FactSet>> datasets;
    stage("load", [&] {
      datasets["reference"] = load_relations(config.facts);
      datasets["contrast"] = load_relations(config.contrast_facts);
    });
    Session session(config, std::move(connect));

    for (const auto& [d, rels] : datasets) {
      for (const auto& [r, set] : rels) {
        auto hist = answer_histogram(set);
        m.add(e, d, r, "answer_top5_coverage", topk_coverage(hist, set.facts.size(), 5),
              set.facts.size());
      }
      m.add_macro(e, d, "answer_top5_coverage");
    }

    json skipped = json::object();
    json object_first_templates = json::object();
    for (const auto& catalog : config.prompts) {
      const std::string c(to_string(catalog.source));
      auto templates = stage("load " + c + " prompts",
                             [&] { return load_prompts(catalog.path, catalog.source); });

      // Every query of the catalog goes out as one batch.
      std::vector<Query> queries;
      std::vector<std::string> rel_of_prompt_only;
      for (const auto& [r, tpl] : templates) {
        queries.push_back(build_prompt_only_query(tpl));
        rel_of_prompt_only.push_back(r);
      }
      const std::size_t first_fact_query = queries.size();
      std::vector<std::pair<std::string, std::string>> owner;  // (dataset, relation)
      std::size_t missing = 0;
      for (const auto& [d, rels] : datasets) {
        for (const auto& [r, set] : rels) {
          auto it = templates.find(r);
          if (it == templates.end()) {
            ++missing;
            continue;
          }
          for (const auto& f : set.facts) {
            queries.push_back(build_prompt_query(f, it->second));
            owner.emplace_back(d, r);
          }
        }
      }
      skipped[c] = missing;
      // Object-first templates read the first mask of the prompt-only probe.
      json object_first = json::array();
      for (const auto& [r, tpl] : templates) {
        if (tpl.pattern.find("[Y]") < tpl.pattern.find("[X]")) object_first.push_back(r);
      }
      object_first_templates[c] = std::move(object_first);
      auto records = stage("score " + c, [&] { return session.score(queries); });

      std::map<std::string, Distribution> prompt_only;
      for (std::size_t i = 0; i < first_fact_query; ++i) {
        prompt_only[rel_of_prompt_only[i]] = record_distribution(records[i]);
      }
      std::map<std::pair<std::string, std::string>, RecordMap> runs;
      for (std::size_t i = first_fact_query; i < queries.size(); ++i) {
        auto& rec = records[i];
        runs[owner[i - first_fact_query]].emplace(queries[i].instance, std::move(rec));
      }

      std::map<std::pair<std::string, std::string>, std::pair<Distribution, Distribution>> dists;
      stage("analyse " + c, [&] {
        for (const auto& [dr, run] : runs) {
          const auto& [d, r] = dr;
          const auto& set = datasets.at(d).at(r);
          const std::string v = c + "/" + d;
          auto golds = golds_of(set);
          auto list = values_of(run);
          auto top1 = prediction_histogram(list);
          auto mass = prediction_mass(list);
          const auto& po = prompt_only.at(r);
          const std::size_t n = run.size();
          m.add(e, v, r, "p_at_1", precision_at_k(run, golds, 1), n);
          m.add(e, v, r, "prediction_top5_coverage", topk_coverage(top1, n, 5), n);
          m.add(e, v, r, "pearson_prompt_only_top1", try_pearson(top1, po), n);
          m.add(e, v, r, "pearson_prompt_only_mass", try_pearson(mass, po), n);
          m.add(e, v, r, "kl_prompt_only", kl_divergence(answer_histogram(set), po, config.kl_epsilon),
                n);
          m.add(e, v, r, "surface_form_rate", surface_form_rate(run, golds), n);
          dists.emplace(dr, std::make_pair(std::move(top1), std::move(mass)));
        }
        for (const auto& [d, rels] : datasets) {
          const std::string v = c + "/" + d;
          for (const char* metric : {"p_at_1", "prediction_top5_coverage", "pearson_prompt_only_top1",
                                     "pearson_prompt_only_mass", "kl_prompt_only",
                                     "surface_form_rate"}) {
            m.add_macro(e, v, metric);
          }
        }
        for (const auto& [r, tpl] : templates) {
          auto a = dists.find({"reference", r});
          auto b = dists.find({"contrast", r});
          if (a == dists.end() || b == dists.end()) continue;
          std::size_t n = runs.at({"reference", r}).size() + runs.at({"contrast", r}).size();
          std::set<std::string> predicted;
          for (const auto* d : {&a->second.second, &b->second.second}) {
            for (const auto& [t, w] : d->weights()) predicted.insert(t);
          }
          m.add(e, c, r, "pearson_datasets_top1",
                try_pearson(a->second.first, b->second.first, predicted), n);
          m.add(e, c, r, "pearson_datasets_mass", try_pearson(a->second.second, b->second.second),
                n);
        }
        m.add_macro(e, c, "pearson_datasets_top1");
        m.add_macro(e, c, "pearson_datasets_mass");
      });
    }
    result.summary["relations_without_template"] = skipped;
    result.summary["object_first_templates"] = object_first_templates;
    result.summary["backend_requests"] = session.requests_sent();
  });
}

RunResult run_case_analogy(const ExperimentConfig& config, TransportFactory connect) {
  return run_guarded(config, [&](RunResult& result) {
    const std::string e = "case_analogy";
    auto& m = result.metrics;
    std::map<std::string, FactSet> rels;
    std::map<std::string, PromptTemplate> templates;
    TaxonomyStore store;
    stage("load", [&] {
      rels = load_relations(config.facts);
      templates = load_prompts(config.prompts.front().path, config.prompts.front().source);
      std::optional<fs::path> labels;
      if (!config.labels.empty()) labels = config.labels;
      store = TaxonomyStore::load(config.taxonomy, labels);
    });

    // Induced object type per relation; failures are excluded from type metrics.
    std::map<std::string, TypeAssignment> types;
    json type_failures = json::object();
    stage("induce types", [&] {
      std::ofstream types_out(config.out / "types.tsv", std::ios::binary | std::ios::trunc);
      for (const auto& [r, set] : rels) {
        std::set<std::string> objects;
        for (const auto& f : set.facts) objects.insert(f.object_id);
        try {
          auto a = induce_relation_type(r, objects, store, config.type_threshold);
          write_type_assignment(types_out, a);
          m.add(e, "types", r, "induced_type_coverage", 100.0 * a.coverage_fraction, objects.size());
          types.emplace(r, std::move(a));
        } catch (const AnalysisError& err) {
          spdlog::warn("relation {}: no induced type ({})", r, err.what());
          type_failures[r] = err.what();
          m.add(e, "types", r, "induced_type_coverage", std::nullopt, objects.size());
        }
      }
    });

    std::vector<Query> queries;  // (prompt, case) pairs
    std::vector<std::string> relation_of;
    json excluded = json::object();
    stage("build queries", [&] {
      for (const auto& [r, set] : rels) {
        auto it = templates.find(r);
        if (it == templates.end()) continue;
        std::size_t dropped = 0;
        for (const auto& f : set.facts) {
          CaseSample sample;
          try {
            sample = sample_cases(set, f, config.cases, case_seed(config.seed, f));
          } catch (const InsufficientCases&) {
            ++dropped;
            continue;
          }
          queries.push_back(build_prompt_query(f, it->second));
          queries.push_back(build_case_query(f, sample, it->second));
          relation_of.push_back(r);
        }
        if (dropped) excluded[r] = dropped;
      }
    });
    result.summary["excluded_insufficient_cases"] = excluded;
    result.summary["type_induction_failures"] = type_failures;

    Session session(config, std::move(connect));
    auto records = stage("score", [&] { return session.score(queries); });

    stage("analyse", [&] {
      std::map<std::string, RecordMap> before, after;
      for (std::size_t i = 0; i < relation_of.size(); ++i) {
        before[relation_of[i]].emplace(queries[2 * i].instance, records[2 * i]);
        after[relation_of[i]].emplace(queries[2 * i + 1].instance, records[2 * i + 1]);
      }
      RankOutcomes ranks_before, ranks_after;
      std::size_t pooled = 0, better = 0, worse = 0;
      for (const auto& [r, run_b] : before) {
        const auto& run_a = after.at(r);
        auto golds = golds_of(rels.at(r));
        const std::size_t n = run_b.size();
        double p_b = precision_at_k(run_b, golds, 1), p_a = precision_at_k(run_a, golds, 1);
        m.add(e, "prompt", r, "p_at_1", p_b, n);
        m.add(e, "case", r, "p_at_1", p_a, n);
        m.add(e, "prompt", r, "mrr", mrr(run_b, golds), n);
        m.add(e, "case", r, "mrr", mrr(run_a, golds), n);
        m.add(e, "case", r, "precision_delta", p_a - p_b, n);

        for (const auto& [key, rec] : run_b) {
          const auto& gold = golds.at(key).label;
          bool cb = !rec.predictions.empty() && rec.top1() == gold;
          const auto& rec_a = run_a.at(key);
          bool ca = !rec_a.predictions.empty() && rec_a.top1() == gold;
          better += !cb && ca;
          worse += cb && !ca;
          ++pooled;
        }

        auto t = types.find(r);
        std::optional<TypeMembership> membership;
        std::set<std::string> members;
        if (t != types.end()) {
          membership.emplace(store, t->second.type_id);
          for (const auto* run : {&run_b, &run_a}) {
            for (const auto& [key, rec] : *run) {
              for (const auto& p : rec.predictions) {
                if (membership->contains_label(p.token)) members.insert(p.token);
              }
            }
          }
        }
        const auto* filter = membership ? &members : nullptr;
        for (const auto& [key, rec] : run_b) {
          const auto& gold = golds.at(key).label;
          ranks_before[key] = rank_outcome(rec, gold, filter);
          ranks_after[key] = rank_outcome(run_a.at(key), gold, filter);
        }
        if (!membership) continue;
        m.add(e, "prompt", r, "in_type_mrr", mrr(run_b, golds, &members), n);
        m.add(e, "case", r, "in_type_mrr", mrr(run_a, golds, &members), n);
        auto row = type_transition_analysis(
            run_b, run_a, golds, [&](const std::string& label) { return membership->contains_label(label); });
        m.add(e, "case", r, "type_precision_delta", row.type_precision_delta(), n);
        m.add(e, "case", r, "wrong_to_right_with_type_change", row.wrong_to_right_with_type_change,
              row.wrong_to_right);
        m.add(e, "case", r, "right_to_wrong_without_type_change",
              row.right_to_wrong_without_type_change, row.right_to_wrong);
      }
      for (const std::string v : {"prompt", "case"}) {
        m.add_macro(e, v, "p_at_1");
        m.add_macro(e, v, "mrr");
        m.add_macro(e, v, "in_type_mrr");
      }
      for (const char* metric : {"precision_delta", "type_precision_delta",
                                 "wrong_to_right_with_type_change",
                                 "right_to_wrong_without_type_change"}) {
        m.add_macro(e, "case", metric);
      }
      m.add_macro(e, "types", "induced_type_coverage");
      auto share = [&](std::size_t k) {
        return pooled ? std::optional<double>(100.0 * static_cast<double>(k) / static_cast<double>(pooled))
                      : std::nullopt;
      };
      m.add(e, "case", kPooledRelation, "better_pct", share(better), pooled);
      m.add(e, "case", kPooledRelation, "worse_pct", share(worse), pooled);
      for (auto [v, field] : {std::pair{"overall", RankField::overall},
                              std::pair{"in_type", RankField::in_type}}) {
        auto change = rank_change_analysis(ranks_before, ranks_after, field);
        const std::size_t n = change.total();
        auto pct = [&](double x) { return n ? std::optional<double>(x) : std::nullopt; };
        m.add(e, v, kPooledRelation, "raised_pct", pct(change.raised_pct()), n);
        m.add(e, v, kPooledRelation, "unchanged_pct", pct(change.unchanged_pct()), n);
        m.add(e, v, kPooledRelation, "dropped_pct", pct(change.dropped_pct()), n);
      }
    });
    result.summary["backend_requests"] = session.requests_sent();
  });
}

RunResult run_context_inference(const ExperimentConfig& config, TransportFactory connect) {
  return run_guarded(config, [&](RunResult& result) {
    const std::string e = "context_inference";
    auto& m = result.metrics;
    std::map<std::string, FactSet> rels;
    std::map<std::string, PromptTemplate> templates;
    std::map<QueryKey, ContextRecord> contexts;
    stage("load", [&] {
      rels = load_relations(config.facts);
      templates = load_prompts(config.prompts.front().path, config.prompts.front().source);
      contexts = load_contexts(config.contexts);
    });

    // Per fact: prompt, context, masked-context queries; reconstruction
    // queries follow for the answer-present facts.
    std::vector<Query> queries;
    std::vector<Query> reconstruction;
    std::map<std::string, bool> presence;
    GoldMap golds;
    std::size_t no_context = 0;
    stage("build queries", [&] {
      for (const auto& [r, set] : rels) {
        auto tpl = templates.find(r);
        if (tpl == templates.end()) continue;
        for (const auto& f : set.facts) {
          auto ctx = contexts.find({f.subject_id, f.relation_id});
          if (ctx == contexts.end()) {
            ++no_context;
            continue;
          }
          const bool present = contains_answer(ctx->second.text, f.object_label);
          queries.push_back(build_prompt_query(f, tpl->second));
          queries.push_back(build_context_query(f, ctx->second, tpl->second));
          if (present) {
            auto masked = mask_answer_in_context(ctx->second.text, f.object_label);
            queries.push_back(build_masked_context_query(f, masked, tpl->second));
            reconstruction.push_back(build_reconstruction_query(f, masked));
          } else {
            // Nothing to mask: the masked run sees the context unchanged.
            queries.push_back(queries.back());
          }
          presence[f.instance_key()] = present;
          golds[f.instance_key()] = {f.object_label, f.relation_id, f.subject_label};
        }
      }
    });
    result.summary["excluded_without_context"] = no_context;
    if (presence.empty()) throw DataError("build queries: no fact has a context");

    Session session(config, std::move(connect));
    std::vector<Query> all = queries;
    all.insert(all.end(), reconstruction.begin(), reconstruction.end());
    auto records = stage("score", [&] { return session.score(all); });

    stage("analyse", [&] {
      RecordMap prompt, context, masked, recon;
      for (std::size_t i = 0; i + 2 < queries.size(); i += 3) {
        const auto& key = queries[i].instance;
        prompt.emplace(key, records[i]);
        context.emplace(key, records[i + 1]);
        masked.emplace(key, records[i + 2]);
      }
      for (std::size_t i = 0; i < reconstruction.size(); ++i) {
        recon.emplace(reconstruction[i].instance, records[queries.size() + i]);
      }
      for (const auto& [v, run] : {std::pair<std::string, const RecordMap*>{"prompt", &prompt},
                                   {"context", &context},
                                   {"masked_context", &masked}}) {
        for (const auto& [r, recs] : by_relation(*run, golds)) {
          m.add(e, v, r, "p_at_1", precision_at_k(recs, golds, 1), recs.size());
        }
        m.add_macro(e, v, "p_at_1");
      }
      auto emit = [&](const std::array<SplitRow, 2>& rows, const char* after_metric) {
        // A split over no queries has no shares.
        const bool any = rows[0].count + rows[1].count > 0;
        for (const auto& row : rows) {
          m.add(e, row.group, kPooledRelation, "share",
                any ? std::optional<double>(row.share) : std::nullopt, row.count);
          m.add(e, row.group, kPooledRelation, "p_at_1_prompt", row.precision_before, row.count);
          m.add(e, row.group, kPooledRelation, after_metric, row.precision_after, row.count);
          m.add(e, row.group, kPooledRelation, "delta", row.delta(), row.count);
        }
      };
      emit(leakage_split(prompt, context, presence, golds), "p_at_1_context");
      emit(reconstruction_split(prompt, masked, recon, golds), "p_at_1_masked_context");
    });
    result.summary["backend_requests"] = session.requests_sent();
  });
}

RunResult run_build_uniform(const ExperimentConfig& config, TransportFactory connect) {
  return run_guarded(config, [&](RunResult& result) {
    const std::string e = "build_uniform";
    auto& m = result.metrics;
    auto rels = stage("load", [&] { return load_relations(config.facts); });
    std::optional<Session> session;
    if (config.token_filter) session.emplace(config, std::move(connect));

    std::ofstream facts_out(config.out / "uniform_facts.tsv", std::ios::binary | std::ios::trunc);
    std::ofstream report_out(config.out / "uniform_report.tsv", std::ios::binary | std::ios::trunc);
    json filtered = json::object();
    json presampled = json::object();  // relation -> facts before the cap
    for (const auto& [r, original] : rels) {
      stage("relation " + r, [&] {
        FactSet set = original;
        if (session) {
          CachedVocab vocab(session->scorer(), session->cache());
          set = filter_single_token(set, vocab);
          filtered[r] = original.facts.size() - set.facts.size();
        }
        if (set.facts.empty()) {
          spdlog::warn("relation {}: no facts left after token filtering", r);
          return;
        }
        if (set.facts.size() > config.presample_cap) presampled[r] = set.facts.size();
        set = presample(set, config.presample_cap, derive_seed(config.seed, "presample/" + r));
        auto [subset, report] = build_uniform_subset(set, derive_seed(config.seed, "uniform/" + r));
        write_facts(facts_out, subset);
        write_report_line(report_out, report);
        m.add(e, "uniform", r, "median_frequency", static_cast<double>(report.median_frequency),
              set.facts.size());
        m.add(e, "uniform", r, "groups_kept", static_cast<double>(report.groups_kept), set.facts.size());
        m.add(e, "uniform", r, "groups_deleted", static_cast<double>(report.groups_deleted),
              set.facts.size());
        m.add(e, "uniform", r, "facts_out", static_cast<double>(report.facts_out), set.facts.size());
      });
    }
    if (!facts_out || !report_out) throw ConfigError("cannot write uniform subset files");
    result.summary["multi_token_dropped"] = filtered;
    result.summary["presampled_from"] = presampled;
    result.summary["backend_requests"] = session ? session->requests_sent() : 0;
  });
}

RunResult run_experiment(const ExperimentConfig& config, TransportFactory connect) {
  switch (config.experiment) {
    case ExperimentKind::prompt_bias: return run_prompt_bias(config, std::move(connect));
    case ExperimentKind::case_analogy: return run_case_analogy(config, std::move(connect));
    case ExperimentKind::context_inference:
      return run_context_inference(config, std::move(connect));
    case ExperimentKind::build_uniform: return run_build_uniform(config, std::move(connect));
  }
  throw ConfigError("unknown experiment");
}

}  // namespace mlmprobe
