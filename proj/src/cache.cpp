#include "mlmprobe/cache.hpp"

#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

namespace {

// Reads `key \t value` lines, handing each value to `accept`; any malformed
// line is reported with its byte offset.
template <class Accept>
void read_keyed_lines(const std::filesystem::path& file, const char* what, Accept&& accept) {
  std::ifstream in{file, std::ios::binary};
  if (!in) return;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    auto corrupt = [&](const std::string& why) {
      return DataError(std::string(what) + " " + file.string() + " is corrupt at byte offset " +
                       std::to_string(line_offset) + ": " + why);
    };
    if (in.eof()) throw corrupt("truncated final line");
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw corrupt("missing key");
    try {
      accept(line.substr(0, tab), line.substr(tab + 1));
    } catch (const std::exception& e) {
      throw corrupt(e.what());
    }
  }
}

}  // namespace

PredictionCache::PredictionCache(const std::filesystem::path& dir)
    : file_(dir / "predictions.tsv"), token_file_(dir / "token_counts.tsv") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create cache directory " + dir.string() + ": " + ec.message());

  read_keyed_lines(file_, "prediction cache", [&](std::string key, std::string payload) {
    (void)record_from_json(payload);
    entries_[std::move(key)] = std::move(payload);
  });
  read_keyed_lines(token_file_, "token cache", [&](std::string key, const std::string& value) {
    std::size_t used = 0;
    const auto n = std::stoull(value, &used);
    if (used != value.size()) throw DataError("bad token count '" + value + "'");
    token_counts_[std::move(key)] = n;
  });
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) throw ConfigError("cache file not writable: " + file_.string());
  token_out_.open(token_file_, std::ios::binary | std::ios::app);
  if (!token_out_) throw ConfigError("cache file not writable: " + token_file_.string());
}

std::string PredictionCache::key(const std::string& model_id, const ScoreRequest& request) {
  Fnv1a h;
  h.field(model_id).field(request.text).add(static_cast<std::uint64_t>(request.mask_index));
  h.add(static_cast<std::uint64_t>(request.top_k));
  if (request.candidates) {
    h.add(static_cast<std::uint64_t>(request.candidates->size() + 1));
    for (const auto& c : *request.candidates) h.field(c);
  } else {
    h.add(std::uint64_t{0});
  }
  // A second, differently seeded pass widens the key to 128 bits.
  Fnv1a h2;
  h2.add(std::uint64_t{0x6d6c6d70726f6265ULL}).add(h.digest()).field(request.text);
  return h.hex() + h2.hex();
}

std::optional<PredictionRecord> PredictionCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return record_from_json(it->second);
}

void PredictionCache::store(const std::string& key, const PredictionRecord& record) {
  auto payload = record_to_json(record);
  std::unique_lock lock(mutex_);
  if (!entries_.emplace(key, payload).second) return;
  out_ << key << '\t' << payload << '\n';
  out_.flush();
  if (!out_) throw ConfigError("failed to append to " + file_.string());
}

std::string PredictionCache::token_key(const std::string& model_id, const std::string& label) {
  Fnv1a h;
  h.field("tokenize").field(model_id).field(label);
  Fnv1a h2;
  h2.add(std::uint64_t{0x6d6c6d70726f6265ULL}).add(h.digest()).field(label);
  return h.hex() + h2.hex();
}

std::optional<std::size_t> PredictionCache::lookup_tokens(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = token_counts_.find(key);
  if (it == token_counts_.end()) return std::nullopt;
  return it->second;
}

void PredictionCache::store_tokens(const std::string& key, std::size_t n_tokens) {
  std::unique_lock lock(mutex_);
  if (!token_counts_.emplace(key, n_tokens).second) return;
  token_out_ << key << '\t' << n_tokens << '\n';
  token_out_.flush();
  if (!token_out_) throw ConfigError("failed to append to " + token_file_.string());
}

bool CachedVocab::is_single_token(const std::string& label) {
  if (!cache_) return scorer_.is_single_token(label);
  const auto key = PredictionCache::token_key(scorer_.model_id(), label);
  if (auto n = cache_->lookup_tokens(key)) return *n == 1;
  const auto n = scorer_.count_tokens(label);
  cache_->store_tokens(key, n);
  return n == 1;
}

std::size_t PredictionCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

PredictionRecord cached_score(const ScoreRequest& request, Scorer& scorer,
                              PredictionCache& cache) {
  const auto key = PredictionCache::key(scorer.model_id(), request);
  if (auto hit = cache.lookup(key)) {
    hit->query_id = request.id;
    return *hit;
  }
  auto record = scorer.score(request);
  cache.store(key, record);
  return record;
}

std::vector<ScoreOutcome> cached_score_batch(const std::vector<ScoreRequest>& requests,
                                             Scorer& scorer, PredictionCache* cache,
                                             std::optional<std::size_t> max_in_flight) {
  std::vector<ScoreOutcome> outcomes(requests.size());
  std::vector<ScoreRequest> misses;
  std::vector<std::size_t> miss_index;
  std::vector<std::string> keys(requests.size());
  // Identical requests under different ids are scored once.
  std::unordered_map<std::string, std::size_t> first_miss;
  std::vector<std::pair<std::size_t, std::size_t>> aliases;  // (request, miss slot)
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (cache) {
      keys[i] = PredictionCache::key(scorer.model_id(), requests[i]);
      if (auto hit = cache->lookup(keys[i])) {
        hit->query_id = requests[i].id;
        outcomes[i].record = std::move(*hit);
        continue;
      }
      auto [it, inserted] = first_miss.emplace(keys[i], misses.size());
      if (!inserted) {
        aliases.emplace_back(i, it->second);
        continue;
      }
    }
    miss_index.push_back(i);
    misses.push_back(requests[i]);
  }
  auto scored = scorer.score_batch(misses, max_in_flight);
  for (std::size_t m = 0; m < misses.size(); ++m) {
    const auto i = miss_index[m];
    if (cache && scored[m].ok()) cache->store(keys[i], *scored[m].record);
    outcomes[i] = scored[m];
  }
  for (const auto& [i, m] : aliases) {
    outcomes[i] = scored[m];
    if (outcomes[i].record) outcomes[i].record->query_id = requests[i].id;
  }
  return outcomes;
}

}  // namespace mlmprobe
