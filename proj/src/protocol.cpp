#include "mlmprobe/protocol.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <set>
#include <unordered_set>

#include "mlmprobe/error.hpp"

namespace mlmprobe {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(std::string_view why, std::string_view raw) {
  throw ProtocolError("malformed scorer response (" + std::string(why) + "): " + std::string(raw),
                      false);
}

json parse_line(std::string_view line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error&) {
    malformed("not JSON", line);
  }
}

std::optional<ResponseError> as_error(const json& msg, std::string_view raw) {
  if (!msg.contains("error")) return std::nullopt;
  ResponseError err;
  err.id = msg.value("id", "");
  if (!msg["error"].is_string()) malformed("error is not a string", raw);
  err.message = msg["error"].get<std::string>();
  err.retryable = msg.value("retryable", false);
  return err;
}

std::vector<Prediction> parse_predictions(const json& list, std::string_view raw) {
  if (!list.is_array()) malformed("predictions is not a list", raw);
  std::vector<Prediction> out;
  out.reserve(list.size());
  for (const auto& pair : list) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number()) {
      malformed("prediction entry is not [token, log_prob]", raw);
    }
    out.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
  }
  return out;
}

}  // namespace

const std::string& PredictionRecord::top1() const {
  if (predictions.empty()) throw AnalysisError("record " + query_id + " has no predictions");
  return predictions.front().token;
}

json encode_score_request(const ScoreRequest& request) {
  json msg = {{"id", request.id},
              {"op", "score"},
              {"text", request.text},
              {"mask_index", request.mask_index},
              {"top_k", request.top_k}};
  msg["candidates"] = request.candidates ? json(*request.candidates) : json(nullptr);
  return msg;
}

json encode_tokenize_request(const std::string& id, const std::string& label) {
  return {{"id", id}, {"op", "tokenize"}, {"label", label}};
}

Handshake decode_handshake(std::string_view line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error&) {
    throw ProtocolError("scorer handshake is not JSON: " + std::string(line), false);
  }
  if (msg.value("op", "") != "ready" || !msg.contains("model_id") ||
      !msg["model_id"].is_string()) {
    throw ProtocolError("expected scorer handshake {\"op\": \"ready\", ...}, got: " +
                            std::string(line),
                        false);
  }
  Handshake h;
  h.model_id = msg["model_id"].get<std::string>();
  h.mask_sentinel = msg.value("mask_sentinel", h.mask_sentinel);
  h.separator = msg.value("separator", h.separator);
  return h;
}

void validate_record(const PredictionRecord& record, const ScoreRequest& request) {
  const auto& preds = record.predictions;
  auto fail = [&](const std::string& why) {
    throw ProtocolError("scorer response for " + request.id + " violates the contract: " + why,
                        false);
  };
  if (preds.size() > request.top_k) fail("more than top_k predictions");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!std::isfinite(preds[i].log_prob)) fail("non-finite log-probability");
    if (preds[i].log_prob > 0.0) fail("positive log-probability");
    if (i > 0 && preds[i].log_prob > preds[i - 1].log_prob) fail("log-probabilities increase");
    if (!seen.insert(preds[i].token).second) fail("duplicate token '" + preds[i].token + "'");
  }
  if (request.candidates) {
    std::set<std::string> allowed(request.candidates->begin(), request.candidates->end());
    for (const auto& p : preds) {
      if (!allowed.count(p.token)) fail("token '" + p.token + "' outside the candidate set");
    }
  }
}

std::variant<PredictionRecord, ResponseError> decode_score_response(
    std::string_view line, const ScoreRequest& request, const std::string& default_model_id) {
  const json msg = parse_line(line);
  if (!msg.is_object()) malformed("not an object", line);
  if (msg.value("id", "") != request.id) {
    throw ProtocolDesync("scorer response id mismatch: expected " + request.id + ", got: " +
                         std::string(line));
  }
  if (auto err = as_error(msg, line)) return *err;
  if (!msg.contains("predictions")) malformed("missing predictions", line);
  PredictionRecord record;
  record.query_id = request.id;
  record.model_id = msg.value("model_id", default_model_id);
  record.predictions = parse_predictions(msg["predictions"], line);
  record.truncated = msg.value("truncated", false);
  record.created_at = utc_timestamp();
  validate_record(record, request);
  return record;
}

std::variant<std::size_t, ResponseError> decode_tokenize_response(std::string_view line,
                                                                   const std::string& id) {
  const json msg = parse_line(line);
  if (!msg.is_object()) malformed("not an object", line);
  if (msg.value("id", "") != id) {
    throw ProtocolDesync("scorer response id mismatch: expected " + id + ", got: " +
                         std::string(line));
  }
  if (auto err = as_error(msg, line)) return *err;
  if (!msg.contains("n_tokens") || !msg["n_tokens"].is_number_integer() ||
      msg["n_tokens"].get<long long>() < 0) {
    malformed("missing n_tokens", line);
  }
  return msg["n_tokens"].get<std::size_t>();
}

std::string record_to_json(const PredictionRecord& record) {
  json preds = json::array();
  for (const auto& p : record.predictions) preds.push_back(json::array({p.token, p.log_prob}));
  json msg = {{"id", record.query_id},
              {"model_id", record.model_id},
              {"predictions", std::move(preds)},
              {"created_at", record.created_at}};
  if (record.truncated) msg["truncated"] = true;
  return msg.dump();
}

PredictionRecord record_from_json(std::string_view payload) {
  const json msg = json::parse(payload);  // parse_error propagates to the caller
  PredictionRecord record;
  record.query_id = msg.at("id").get<std::string>();
  record.model_id = msg.at("model_id").get<std::string>();
  record.predictions = parse_predictions(msg.at("predictions"), payload);
  record.created_at = msg.value("created_at", "");
  record.truncated = msg.value("truncated", false);
  return record;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace mlmprobe
