#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mlmprobe/distribution.hpp"
#include "mlmprobe/protocol.hpp"
#include "mlmprobe/transport.hpp"

namespace mlmprobe {

// Test double for a masked-LM backend. For every request the output
// distribution is
//   (1 - subject_shift) * bias + subject_shift * perturbation(hash(words))
// where `words` are the non-mask tokens of the probe. With subject_shift = 0
// the answer ignores the subject entirely.
struct MockScorerConfig {
  Distribution bias;
  double subject_shift = 0.0;
  std::set<std::string> vocab;  // tokenizer vocabulary; also part of the support
  std::uint64_t seed = 0;
  // Exact probe text -> canned predictions (already sorted), checked first.
  std::map<std::string, std::vector<Prediction>> fixed;
  // When the probe carries a context segment (text before the last [SEP]),
  // the first vocabulary word found there takes 0.9 of the mass.
  bool answer_from_context = false;
  std::string model_id;  // derived from the config when empty

  static MockScorerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class MockModel {
 public:
  explicit MockModel(MockScorerConfig config);

  const std::string& model_id() const { return model_id_; }
  std::string handshake_line() const;
  // Answers one protocol line.
  std::string handle(std::string_view line) const;

  std::vector<Prediction> predict(std::string_view text, std::size_t top_k,
                                  const std::optional<std::vector<std::string>>& candidates) const;
  // 1 for vocabulary words; otherwise the word count, at least 2.
  std::size_t count_tokens(std::string_view label) const;

 private:
  std::map<std::string, double> distribution(std::string_view text) const;

  MockScorerConfig config_;
  std::string model_id_;
};

std::unique_ptr<Transport> make_loopback_transport(std::shared_ptr<const MockModel> model);

}  // namespace mlmprobe
