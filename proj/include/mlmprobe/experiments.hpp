#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlmprobe/corpus.hpp"
#include "mlmprobe/metrics_table.hpp"
#include "mlmprobe/transport.hpp"

namespace mlmprobe {

enum class ExperimentKind { prompt_bias, build_uniform, case_analogy, context_inference };

std::string_view to_string(ExperimentKind kind);
// Accepts both prompt_bias and prompt-bias spellings.
ExperimentKind parse_experiment_kind(std::string_view text);

struct PromptCatalog {
  PromptSource source = PromptSource::manual;
  std::filesystem::path path;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::prompt_bias;
  std::filesystem::path facts;
  std::filesystem::path contrast_facts;  // second dataset of the prompt-bias run
  std::vector<PromptCatalog> prompts;
  std::filesystem::path taxonomy;
  std::filesystem::path labels;
  std::filesystem::path contexts;
  std::string scorer_cmd;
  std::filesystem::path cache_dir;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t top_k = 10;
  std::size_t cases = 10;
  double type_threshold = 0.8;
  double kl_epsilon = 1e-6;
  std::size_t max_in_flight = 32;
  std::size_t presample_cap = 50000;
  bool token_filter = true;  // build_uniform: drop multi-token objects first
  bool no_cache = false;
  bool overwrite = false;

  // Keys mirror the field names; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Throws ConfigError for missing inputs, bad values or a non-empty output
  // directory without overwrite.
  void validate() const;
};

// Opens a connection to the scoring backend. Defaults to launching
// config.scorer_cmd as a subprocess.
using TransportFactory = std::function<std::unique_ptr<Transport>()>;

struct RunResult {
  MetricsTable metrics;
  nlohmann::json summary;  // counts and backend traffic; not part of metrics.csv
};

// Each runner writes config.json, metrics.csv, report.md and summary.json
// under config.out. A failing stage rethrows with the stage name prefixed;
// whatever metrics were computed so far are still written.
RunResult run_prompt_bias(const ExperimentConfig& config, TransportFactory connect = {});
RunResult run_case_analogy(const ExperimentConfig& config, TransportFactory connect = {});
RunResult run_context_inference(const ExperimentConfig& config, TransportFactory connect = {});
// Writes uniform_facts.tsv and uniform_report.tsv. Needs a backend only when
// token_filter is on.
RunResult run_build_uniform(const ExperimentConfig& config, TransportFactory connect = {});

RunResult run_experiment(const ExperimentConfig& config, TransportFactory connect = {});

}  // namespace mlmprobe
