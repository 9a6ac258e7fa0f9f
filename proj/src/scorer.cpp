#include "mlmprobe/scorer.hpp"

#include <set>

#include <spdlog/spdlog.h>

#include "mlmprobe/error.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

namespace {

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  if (from == to) return text;
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

}  // namespace

std::string check_request(const ScoreRequest& request) {
  if (request.id.empty()) return "empty request id";
  if (request.top_k == 0) return "top_k must be at least 1";
  const auto masks = count_occurrences(request.text, kMaskSentinel);
  if (request.mask_index >= masks) {
    return "mask_index " + std::to_string(request.mask_index) + " out of range (text has " +
           std::to_string(masks) + " masks)";
  }
  return {};
}

Scorer::Scorer(std::unique_ptr<Transport> transport, ScorerOptions options)
    : transport_(std::move(transport)), options_(options) {
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  handshake_ = decode_handshake(transport_->read_line());
}

void Scorer::reconnect() {
  transport_->restart();
  auto fresh = decode_handshake(transport_->read_line());
  if (fresh.model_id != handshake_.model_id) {
    throw ProtocolError("scorer model changed across restart: " + handshake_.model_id + " -> " +
                            fresh.model_id,
                        false);
  }
}

std::string Scorer::translate(const std::string& text) const {
  auto out = replace_all(text, kMaskSentinel, handshake_.mask_sentinel);
  return replace_all(std::move(out), kSeparator, handshake_.separator);
}

PredictionRecord Scorer::score(const ScoreRequest& request) {
  auto outcomes = score_batch({request}, 1);
  if (!outcomes.front().ok()) throw ProtocolError(outcomes.front().error, false);
  return std::move(*outcomes.front().record);
}

std::vector<ScoreOutcome> Scorer::score_batch(const std::vector<ScoreRequest>& requests,
                                              std::optional<std::size_t> max_in_flight) {
  std::set<std::string> ids;
  for (const auto& r : requests) {
    if (!ids.insert(r.id).second) {
      throw DataError("score_batch: duplicate request id " + r.id);
    }
  }
  const std::size_t window = std::max<std::size_t>(1, max_in_flight.value_or(options_.max_in_flight));

  std::vector<ScoreOutcome> outcomes(requests.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    auto problem = check_request(requests[i]);
    if (problem.empty()) {
      pending.push_back(i);
    } else {
      outcomes[i].error = problem;
    }
  }

  std::lock_guard<std::mutex> lock(mutex_);
  for (std::size_t attempt = 0; !pending.empty(); ++attempt) {
    const bool last_attempt = attempt >= options_.max_retries;
    std::vector<std::size_t> retry;
    for (std::size_t start = 0; start < pending.size(); start += window) {
      const std::size_t end = std::min(pending.size(), start + window);
      std::vector<std::string> lines;
      lines.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) {
        auto wire = requests[pending[j]];
        wire.text = translate(wire.text);
        lines.push_back(encode_score_request(wire).dump());
      }
      std::vector<std::string> responses;
      try {
        requests_sent_ += lines.size();
        responses = transport_->round_trip(lines);
      } catch (const ProtocolError& e) {
        if (!e.retryable() || last_attempt) throw;
        spdlog::warn("{}; restarting backend", e.what());
        reconnect();
        retry.insert(retry.end(), pending.begin() + static_cast<std::ptrdiff_t>(start),
                     pending.begin() + static_cast<std::ptrdiff_t>(end));
        continue;
      }
      for (std::size_t j = start; j < end; ++j) {
        const auto i = pending[j];
        std::variant<PredictionRecord, ResponseError> decoded;
        try {
          decoded = decode_score_response(responses[j - start], requests[i], model_id());
        } catch (const ProtocolDesync&) {
          throw;
        } catch (const ProtocolError& e) {
          outcomes[i].error = e.what();
          continue;
        }
        if (auto* record = std::get_if<PredictionRecord>(&decoded)) {
          outcomes[i].record = std::move(*record);
          continue;
        }
        const auto& err = std::get<ResponseError>(decoded);
        if (err.retryable && !last_attempt) {
          retry.push_back(i);
        } else {
          outcomes[i].error = err.message;
        }
      }
    }
    pending = std::move(retry);
  }
  return outcomes;
}

std::size_t Scorer::count_tokens(const std::string& label) {
  std::lock_guard<std::mutex> lock(mutex_);
  for (std::size_t attempt = 0;; ++attempt) {
    const std::string id = "tok-" + std::to_string(tokenize_counter_++);
    std::vector<std::string> responses;
    try {
      ++requests_sent_;
      responses = transport_->round_trip({encode_tokenize_request(id, label).dump()});
    } catch (const ProtocolError& e) {
      if (!e.retryable() || attempt >= options_.max_retries) throw;
      reconnect();
      continue;
    }
    auto decoded = decode_tokenize_response(responses.front(), id);
    if (auto* n = std::get_if<std::size_t>(&decoded)) return *n;
    const auto& err = std::get<ResponseError>(decoded);
    if (!err.retryable || attempt >= options_.max_retries) {
      throw ProtocolError("tokenize '" + label + "': " + err.message, err.retryable);
    }
  }
}

bool Scorer::is_single_token(const std::string& label) { return count_tokens(label) == 1; }

}  // namespace mlmprobe
