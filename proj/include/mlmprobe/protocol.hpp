#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace mlmprobe {

// Scorer wire protocol: one JSON message per line in each direction.
//   -> {"id", "op": "score", "text", "mask_index", "top_k", "candidates": [..] | null}
//   <- {"id", "model_id", "predictions": [[token, log_prob], ...]}
//   -> {"id", "op": "tokenize", "label"}
//   <- {"id", "n_tokens"}
//   <- {"id", "error", "retryable"}
// The backend announces itself first with
//   {"op": "ready", "model_id", "mask_sentinel", "separator"}.

struct Prediction {
  std::string token;
  double log_prob = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct ScoreRequest {
  std::string id;
  std::string text;
  std::size_t mask_index = 0;
  std::size_t top_k = 10;
  std::optional<std::vector<std::string>> candidates;
};

struct PredictionRecord {
  std::string query_id;
  std::string model_id;
  std::vector<Prediction> predictions;  // descending log_prob
  std::string created_at;               // ISO-8601 UTC
  bool truncated = false;

  const std::string& top1() const;  // throws when empty
};

struct Handshake {
  std::string model_id;
  std::string mask_sentinel = "[MASK]";
  std::string separator = "[SEP]";
};

struct ResponseError {
  std::string id;
  std::string message;
  bool retryable = false;
};

nlohmann::json encode_score_request(const ScoreRequest& request);
nlohmann::json encode_tokenize_request(const std::string& id, const std::string& label);

Handshake decode_handshake(std::string_view line);

// Parses and validates one score response. Malformed payloads and contract
// violations throw ProtocolError carrying the raw line.
std::variant<PredictionRecord, ResponseError> decode_score_response(
    std::string_view line, const ScoreRequest& request, const std::string& default_model_id);

std::variant<std::size_t, ResponseError> decode_tokenize_response(std::string_view line,
                                                                   const std::string& id);

// Checks the record invariants against the request that produced it.
void validate_record(const PredictionRecord& record, const ScoreRequest& request);

// Stable single-line JSON used by the prediction cache.
std::string record_to_json(const PredictionRecord& record);
PredictionRecord record_from_json(std::string_view payload);

std::string utc_timestamp();

}  // namespace mlmprobe
