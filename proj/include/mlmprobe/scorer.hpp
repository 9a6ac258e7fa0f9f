#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mlmprobe/corpus.hpp"
#include "mlmprobe/protocol.hpp"
#include "mlmprobe/transport.hpp"

namespace mlmprobe {

struct ScorerOptions {
  std::size_t max_in_flight = 32;
  std::size_t max_retries = 2;
};

// Result of one request inside a batch: a record, or the permanent error the
// backend (or local validation) reported for it.
struct ScoreOutcome {
  std::optional<PredictionRecord> record;
  std::string error;

  bool ok() const { return record.has_value(); }
};

// Client side of the scorer wire protocol. Thread-safe; requests from
// concurrent callers are serialized onto the single backend.
class Scorer : public VocabOracle {
 public:
  explicit Scorer(std::unique_ptr<Transport> transport, ScorerOptions options = {});

  const Handshake& handshake() const { return handshake_; }
  const std::string& model_id() const { return handshake_.model_id; }
  const ScorerOptions& options() const { return options_; }

  // Throws ProtocolError on failure (retryable flag preserved).
  PredictionRecord score(const ScoreRequest& request);

  // Output order equals input order. At most max_in_flight requests are
  // outstanding at once (defaults to options().max_in_flight). Duplicate ids
  // throw before anything is sent.
  std::vector<ScoreOutcome> score_batch(const std::vector<ScoreRequest>& requests,
                                        std::optional<std::size_t> max_in_flight = std::nullopt);

  std::size_t count_tokens(const std::string& label);
  bool is_single_token(const std::string& label) override;

  // Score and tokenize messages written to the backend so far.
  std::size_t requests_sent() const { return requests_sent_.load(); }

 private:
  std::string translate(const std::string& text) const;
  void reconnect();

  std::unique_ptr<Transport> transport_;
  ScorerOptions options_;
  Handshake handshake_;
  std::mutex mutex_;
  std::atomic<std::size_t> requests_sent_{0};
  std::size_t tokenize_counter_ = 0;
};

// Local request validation: top_k >= 1 and the mask index addresses one of
// the text's mask sentinels. Returns an error message or empty.
std::string check_request(const ScoreRequest& request);

}  // namespace mlmprobe
