#include "mlmprobe/mock_scorer.hpp"

#include <algorithm>
#include <cmath>

#include "mlmprobe/error.hpp"
#include "mlmprobe/random.hpp"
#include "mlmprobe/text.hpp"

namespace mlmprobe {

using nlohmann::json;

MockScorerConfig MockScorerConfig::from_json(const json& j) {
  MockScorerConfig c;
  std::map<std::string, double> bias = j.at("bias").get<std::map<std::string, double>>();
  double total = 0.0;
  for (const auto& [label, w] : bias) total += w;
  if (std::fabs(total - 1.0) > 1e-6) throw ConfigError("mock scorer bias must sum to 1");
  c.bias = Distribution::from_weights(std::move(bias));
  c.subject_shift = j.value("subject_shift", 0.0);
  if (c.subject_shift < 0.0 || c.subject_shift > 1.0) {
    throw ConfigError("mock scorer subject_shift must lie in [0, 1]");
  }
  if (j.contains("vocab")) c.vocab = j["vocab"].get<std::set<std::string>>();
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("fixed")) {
    for (const auto& [text, list] : j["fixed"].items()) {
      std::vector<Prediction> preds;
      for (const auto& pair : list) preds.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
      c.fixed.emplace(text, std::move(preds));
    }
  }
  c.answer_from_context = j.value("answer_from_context", false);
  c.model_id = j.value("model_id", "");
  return c;
}

json MockScorerConfig::to_json() const {
  json fixed_json = json::object();
  for (const auto& [text, preds] : fixed) {
    json list = json::array();
    for (const auto& p : preds) list.push_back(json::array({p.token, p.log_prob}));
    fixed_json[text] = std::move(list);
  }
  json j = {{"bias", bias.weights()},
            {"subject_shift", subject_shift},
            {"vocab", vocab},
            {"seed", seed},
            {"fixed", std::move(fixed_json)},
            {"answer_from_context", answer_from_context}};
  if (!model_id.empty()) j["model_id"] = model_id;
  return j;
}

MockModel::MockModel(MockScorerConfig config) : config_(std::move(config)) {
  model_id_ = config_.model_id.empty() ? "mock-" + Fnv1a{}.field(config_.to_json().dump()).hex()
                                       : config_.model_id;
}

std::string MockModel::handshake_line() const {
  return json{{"op", "ready"},
              {"model_id", model_id_},
              {"mask_sentinel", std::string(kMaskSentinel)},
              {"separator", std::string(kSeparator)}}
      .dump();
}

std::map<std::string, double> MockModel::distribution(std::string_view text) const {
  const double s = config_.subject_shift;
  std::set<std::string> support = config_.vocab;
  for (const auto& [label, w] : config_.bias.weights()) support.insert(label);

  std::map<std::string, double> probs;
  for (const auto& t : support) probs[t] = (1.0 - s) * config_.bias.weight(t);

  if (s > 0.0) {
    Fnv1a words;
    for (auto w : split_words(text)) {
      if (w != kMaskSentinel) words.field(w);
    }
    const std::uint64_t subject_hash = words.digest();
    std::map<std::string, double> noise;
    double total = 0.0;
    for (const auto& t : support) {
      const std::uint64_t bits =
          splitmix64(subject_hash ^ splitmix64(Fnv1a{}.field(t).digest() ^ config_.seed));
      const double u = 0.05 + static_cast<double>(bits >> 11) * 0x1.0p-53;
      noise[t] = u;
      total += u;
    }
    for (const auto& t : support) probs[t] += s * noise[t] / total;
  }

  if (config_.answer_from_context) {
    const auto sep = text.rfind(kSeparator);
    if (sep != std::string_view::npos) {
      const auto context = text.substr(0, sep);
      std::optional<std::pair<std::size_t, std::string>> first;
      for (const auto& t : support) {
        auto hits = find_whole_word(context, t);
        if (!hits.empty() && (!first || hits.front() < first->first)) first = {hits.front(), t};
      }
      if (first) {
        for (auto& [t, p] : probs) p *= 0.1;
        probs[first->second] += 0.9;
      }
    }
  }
  return probs;
}

std::vector<Prediction> MockModel::predict(
    std::string_view text, std::size_t top_k,
    const std::optional<std::vector<std::string>>& candidates) const {
  std::vector<Prediction> ranked;
  if (auto it = config_.fixed.find(std::string(text)); it != config_.fixed.end()) {
    ranked = it->second;
  } else {
    for (const auto& [t, p] : distribution(text)) {
      if (p > 0.0) ranked.push_back({t, std::log(p)});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Prediction& a, const Prediction& b) { return a.log_prob > b.log_prob; });
  }
  if (candidates) {
    std::set<std::string> allowed(candidates->begin(), candidates->end());
    std::erase_if(ranked, [&](const Prediction& p) { return !allowed.count(p.token); });
  }
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

std::size_t MockModel::count_tokens(std::string_view label) const {
  if (config_.vocab.count(std::string(label))) return 1;
  return std::max<std::size_t>(2, split_words(label).size());
}

std::string MockModel::handle(std::string_view line) const {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error& e) {
    return json{{"id", ""}, {"error", std::string("unparseable request: ") + e.what()},
                {"retryable", false}}
        .dump();
  }
  const std::string id = msg.value("id", "");
  auto error = [&](const std::string& why) {
    return json{{"id", id}, {"error", why}, {"retryable", false}}.dump();
  };
  const std::string op = msg.value("op", "");
  if (op == "tokenize") {
    const std::string label = msg.value("label", "");
    if (label.empty()) return error("empty label");
    return json{{"id", id}, {"n_tokens", count_tokens(label)}}.dump();
  }
  if (op != "score") return error("unknown op '" + op + "'");

  const std::string text = msg.value("text", "");
  const auto mask_index = msg.value("mask_index", std::size_t{0});
  const auto top_k = msg.value("top_k", std::size_t{10});
  if (top_k == 0) return error("top_k must be at least 1");
  if (mask_index >= count_occurrences(text, kMaskSentinel)) return error("mask_index out of range");
  std::optional<std::vector<std::string>> candidates;
  if (msg.contains("candidates") && !msg["candidates"].is_null()) {
    candidates = msg["candidates"].get<std::vector<std::string>>();
  }
  json preds = json::array();
  for (const auto& p : predict(text, top_k, candidates)) {
    preds.push_back(json::array({p.token, p.log_prob}));
  }
  return json{{"id", id}, {"model_id", model_id_}, {"predictions", std::move(preds)}}.dump();
}

std::unique_ptr<Transport> make_loopback_transport(std::shared_ptr<const MockModel> model) {
  auto handshake = model->handshake_line();
  return std::make_unique<LoopbackTransport>(
      std::move(handshake), [model](std::string_view line) { return model->handle(line); });
}

}  // namespace mlmprobe
