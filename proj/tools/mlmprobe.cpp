// Command-line front end: dataset building, type induction, experiment runs,
// report rendering and input conversion.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mlmprobe/convert.hpp"
#include "mlmprobe/corpus.hpp"
#include "mlmprobe/error.hpp"
#include "mlmprobe/experiments.hpp"
#include "mlmprobe/metrics_table.hpp"
#include "mlmprobe/taxonomy.hpp"
#include "mlmprobe/text.hpp"

namespace fs = std::filesystem;
using namespace mlmprobe;

namespace {

struct RunFlags {
  std::string config_file;
  std::string experiment;
  std::string facts, contrast_facts, taxonomy, labels, contexts, scorer_cmd, cache_dir, out;
  std::vector<std::string> prompts;  // source=path
  std::uint64_t seed = 0;
  std::size_t top_k = 10, cases = 10, max_in_flight = 32, presample_cap = 50000;
  double type_threshold = 0.8, kl_epsilon = 1e-6;
  bool no_token_filter = false, no_cache = false, overwrite = false;
};

// Registers the experiment flags on `cmd`; only flags given on the command
// line override the config file.
void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config; flags override its keys")
      ->check(CLI::ExistingFile);
  cmd->add_option("--facts", f.facts, "facts TSV");
  cmd->add_option("--scorer-cmd", f.scorer_cmd, "backend command, run via /bin/sh -c");
  cmd->add_option("--seed", f.seed);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--overwrite", f.overwrite, "allow a non-empty output directory");
  cmd->add_option("--max-in-flight", f.max_in_flight)->check(CLI::PositiveNumber);
}

void add_scoring_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--contrast-facts", f.contrast_facts, "second dataset (prompt-bias)");
  cmd->add_option("--prompts", f.prompts, "prompt catalog as source=path; repeatable")
      ->take_all();
  cmd->add_option("--taxonomy", f.taxonomy, "taxonomy edges TSV");
  cmd->add_option("--labels", f.labels, "entity labels TSV");
  cmd->add_option("--contexts", f.contexts, "contexts TSV");
  cmd->add_option("--cache-dir", f.cache_dir, "prediction cache (default <out>/cache)");
  cmd->add_option("--top-k", f.top_k)->check(CLI::PositiveNumber);
  cmd->add_option("--cases", f.cases);
  cmd->add_option("--type-threshold", f.type_threshold)->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--kl-epsilon", f.kl_epsilon);
  cmd->add_flag("--no-cache", f.no_cache, "bypass the prediction cache (debugging)");
}

ExperimentConfig resolve(CLI::App* cmd, const RunFlags& f, std::optional<ExperimentKind> kind) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(f.config_file + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(f.config_file + ": expected a JSON object");
  }
  auto given = [&](const char* name) {
    try {
      return cmd->get_option(name)->count() > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  };
  auto set = [&](const char* flag, const char* key, const auto& value) {
    if (given(flag)) j[key] = value;
  };
  set("--facts", "facts", f.facts);
  set("--contrast-facts", "contrast_facts", f.contrast_facts);
  set("--taxonomy", "taxonomy", f.taxonomy);
  set("--labels", "labels", f.labels);
  set("--contexts", "contexts", f.contexts);
  set("--scorer-cmd", "scorer_cmd", f.scorer_cmd);
  set("--cache-dir", "cache_dir", f.cache_dir);
  set("--out", "out", f.out);
  set("--seed", "seed", f.seed);
  set("--top-k", "top_k", f.top_k);
  set("--cases", "cases", f.cases);
  set("--type-threshold", "type_threshold", f.type_threshold);
  set("--kl-epsilon", "kl_epsilon", f.kl_epsilon);
  set("--max-in-flight", "max_in_flight", f.max_in_flight);
  set("--presample-cap", "presample_cap", f.presample_cap);
  if (given("--no-token-filter")) j["token_filter"] = !f.no_token_filter;
  if (given("--no-cache")) j["no_cache"] = f.no_cache;
  if (given("--overwrite")) j["overwrite"] = f.overwrite;
  if (given("--prompts")) {
    auto list = nlohmann::json::array();
    for (const auto& entry : f.prompts) {
      auto eq = entry.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == entry.size()) {
        throw ConfigError("--prompts expects source=path, got '" + entry + "'");
      }
      list.push_back({{"source", entry.substr(0, eq)}, {"path", entry.substr(eq + 1)}});
    }
    j["prompts"] = list;
  }
  if (kind) {
    j["experiment"] = std::string(to_string(*kind));
  } else if (!f.experiment.empty()) {
    j["experiment"] = f.experiment;
  } else if (!j.contains("experiment")) {
    throw ConfigError("missing --experiment");
  }
  return ExperimentConfig::from_json(j);
}

void print_summary(const RunResult& result, const ExperimentConfig& config) {
  std::cerr << "wrote " << (config.out / "metrics.csv").string() << " ("
            << result.metrics.rows().size() << " rows)\n"
            << result.summary.dump() << "\n";
}

int induce_types(const std::string& facts, const std::string& taxonomy, const std::string& labels,
                 double threshold, const std::string& out_path) {
  auto loaded = load_facts(facts);
  std::optional<fs::path> labels_path;
  if (!labels.empty()) labels_path = labels;
  auto store = TaxonomyStore::load(taxonomy, labels_path);
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw ConfigError("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  int status = 0;
  for (const auto& set : loaded.relations) {
    std::set<std::string> objects;
    for (const auto& f : set.facts) objects.insert(f.object_id);
    try {
      write_type_assignment(out, induce_relation_type(set.relation_id, objects, store, threshold));
    } catch (const TypeInductionError& e) {
      spdlog::warn("{}: {}", set.relation_id, e.what());
      status = 4;
    }
  }
  return status;
}

int report(const std::string& dir, const std::string& metrics) {
  fs::path csv = metrics.empty() ? fs::path(dir) / "metrics.csv" : fs::path(metrics);
  std::string text = render_report(load_metrics_csv(csv.string()));
  if (dir.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(fs::path(dir) / "report.md", std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write report.md in " + dir);
    out << text;
  }
  return 0;
}

std::set<std::string> split_relations(const std::string& list) {
  std::set<std::string> out;
  std::string cur;
  for (char c : list + ",") {
    if (c == ',') {
      if (!cur.empty()) out.insert(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("mlmprobe"));

  CLI::App app{"Masked-LM factual knowledge probing"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  RunFlags uniform_flags;
  auto* build_cmd = app.add_subcommand("build-uniform", "uniform-answer subsets per relation");
  add_run_flags(build_cmd, uniform_flags);
  build_cmd->add_option("--presample-cap", uniform_flags.presample_cap)
      ->check(CLI::PositiveNumber);
  build_cmd->add_flag("--no-token-filter", uniform_flags.no_token_filter,
                      "keep multi-token objects (no backend needed)");

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "score and analyse one experiment");
  add_run_flags(run_cmd, run_flags);
  add_scoring_flags(run_cmd, run_flags);
  run_cmd->add_option("--experiment", run_flags.experiment)
      ->check(CLI::IsMember({"prompt-bias", "case-analogy", "context-inference", "prompt_bias",
                             "case_analogy", "context_inference"}));

  std::string it_facts, it_taxonomy, it_labels, it_out;
  double it_threshold = 0.8;
  auto* induce_cmd = app.add_subcommand("induce-types", "object type per relation");
  induce_cmd->add_option("--facts", it_facts)->required()->check(CLI::ExistingFile);
  induce_cmd->add_option("--taxonomy", it_taxonomy)->required()->check(CLI::ExistingFile);
  induce_cmd->add_option("--labels", it_labels)->check(CLI::ExistingFile);
  induce_cmd->add_option("--type-threshold", it_threshold)->check(CLI::Range(0.0, 1.0));
  induce_cmd->add_option("--out", it_out, "output TSV (default stdout)");

  std::string report_dir, report_metrics;
  auto* report_cmd = app.add_subcommand("report", "re-render report.md from metrics.csv");
  auto* report_out = report_cmd->add_option("--out", report_dir, "run directory");
  report_cmd->add_option("--metrics", report_metrics, "metrics.csv; report goes to stdout")
      ->excludes(report_out);

  std::string conv_kind, conv_input, conv_output, conv_relations, conv_taxonomy, conv_labels;
  std::string conv_language = "en";
  auto* convert_cmd = app.add_subcommand("convert", "convert LAMA or Wikidata inputs");
  convert_cmd->add_option("kind", conv_kind)
      ->required()
      ->check(CLI::IsMember({"lama-facts", "lama-relations", "wikidata"}));
  convert_cmd->add_option("--input", conv_input)->required()->check(CLI::ExistingFile);
  convert_cmd->add_option("--output", conv_output, "facts or prompts TSV")->required();
  convert_cmd->add_option("--relations", conv_relations, "wikidata: comma-separated property ids");
  convert_cmd->add_option("--taxonomy-out", conv_taxonomy, "wikidata: taxonomy edges TSV");
  convert_cmd->add_option("--labels-out", conv_labels, "wikidata: labels TSV");
  convert_cmd->add_option("--language", conv_language);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*build_cmd) {
      auto config = resolve(build_cmd, uniform_flags, ExperimentKind::build_uniform);
      print_summary(run_build_uniform(config), config);
    } else if (*run_cmd) {
      auto config = resolve(run_cmd, run_flags, std::nullopt);
      if (config.experiment == ExperimentKind::build_uniform) {
        throw ConfigError("use the build-uniform subcommand");
      }
      print_summary(run_experiment(config), config);
    } else if (*induce_cmd) {
      return induce_types(it_facts, it_taxonomy, it_labels, it_threshold, it_out);
    } else if (*report_cmd) {
      if (report_dir.empty() && report_metrics.empty()) throw ConfigError("need --out or --metrics");
      return report(report_dir, report_metrics);
    } else if (*convert_cmd) {
      std::ofstream out(conv_output, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write " + conv_output);
      if (conv_kind == "lama-relations") {
        std::ifstream in(conv_input);
        std::cerr << convert_lama_relations(in, out) << " templates\n";
      } else {
        std::vector<Fact> facts;
        if (conv_kind == "lama-facts") {
          std::ifstream in(conv_input);
          auto c = convert_lama_facts(in);
          std::cerr << c.facts.size() << " facts, " << c.skipped << " skipped\n";
          facts = std::move(c.facts);
        } else {
          auto relations = split_relations(conv_relations);
          if (relations.empty()) throw ConfigError("wikidata: --relations is required");
          std::ofstream tax, lab;
          WikidataOutputs outputs;
          if (!conv_taxonomy.empty()) {
            tax.open(conv_taxonomy, std::ios::binary | std::ios::trunc);
            outputs.taxonomy = &tax;
          }
          if (!conv_labels.empty()) {
            lab.open(conv_labels, std::ios::binary | std::ios::trunc);
            outputs.labels = &lab;
          }
          auto c = convert_wikidata_dump(conv_input, relations, outputs, conv_language);
          std::cerr << c.entities_seen << " entities, " << c.facts.size() << " facts, "
                    << c.taxonomy_edges << " taxonomy edges, " << c.unlabeled_dropped
                    << " unlabeled facts dropped\n";
          facts = std::move(c.facts);
        }
        for (const auto& set : group_facts(std::move(facts)).relations) write_facts(out, set);
      }
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ProtocolError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const AnalysisError& e) {
    spdlog::error("{}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
