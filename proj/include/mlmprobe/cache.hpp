#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlmprobe/protocol.hpp"
#include "mlmprobe/scorer.hpp"

namespace mlmprobe {

// Append-only prediction store: `<dir>/predictions.tsv`, one
// `cache_key \t response_payload` line per scored request, and
// `<dir>/token_counts.tsv`, one `cache_key \t n_tokens` line per tokenized
// label. Both files are read at open; appends are serialized, lookups take a
// shared lock.
class PredictionCache {
 public:
  explicit PredictionCache(const std::filesystem::path& dir);

  static std::string key(const std::string& model_id, const ScoreRequest& request);

  std::optional<PredictionRecord> lookup(const std::string& key) const;
  void store(const std::string& key, const PredictionRecord& record);

  static std::string token_key(const std::string& model_id, const std::string& label);
  std::optional<std::size_t> lookup_tokens(const std::string& key) const;
  void store_tokens(const std::string& key, std::size_t n_tokens);

  std::size_t size() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  std::filesystem::path token_file_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
  std::unordered_map<std::string, std::size_t> token_counts_;
  std::ofstream out_;
  std::ofstream token_out_;
};

// Single-token oracle backed by the scorer, answering from the cache when it
// can. cache may be null.
class CachedVocab : public VocabOracle {
 public:
  CachedVocab(Scorer& scorer, PredictionCache* cache) : scorer_(scorer), cache_(cache) {}
  bool is_single_token(const std::string& label) override;

 private:
  Scorer& scorer_;
  PredictionCache* cache_;
};

// Hit: the stored record (query_id set to the request id), no backend
// traffic. Miss: score and append.
PredictionRecord cached_score(const ScoreRequest& request, Scorer& scorer,
                              PredictionCache& cache);

// Batch form; only misses reach the backend. cache may be null (no caching).
std::vector<ScoreOutcome> cached_score_batch(const std::vector<ScoreRequest>& requests,
                                             Scorer& scorer, PredictionCache* cache,
                                             std::optional<std::size_t> max_in_flight = std::nullopt);

}  // namespace mlmprobe
