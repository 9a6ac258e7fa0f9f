#include "mlmprobe/distribution.hpp"

#include <algorithm>
#include <cmath>

#include "mlmprobe/error.hpp"

namespace mlmprobe {

Distribution Distribution::from_weights(std::map<std::string, double> weights) {
  double total = 0.0;
  for (const auto& [label, w] : weights) {
    if (label.empty()) throw AnalysisError("distribution: empty token label");
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw AnalysisError("distribution: invalid weight for '" + label + "'");
    }
    total += w;
  }
  if (!(total > 0.0)) throw AnalysisError("distribution: total weight is zero");
  Distribution d;
  for (auto& [label, w] : weights) {
    if (w > 0.0) d.weights_.emplace(label, w / total);
  }
  return d;
}

Distribution Distribution::from_counts(const std::map<std::string, std::size_t>& counts) {
  std::map<std::string, double> weights;
  for (const auto& [label, n] : counts) weights.emplace(label, static_cast<double>(n));
  return from_weights(std::move(weights));
}

Distribution Distribution::point(std::string label) {
  return from_weights({{std::move(label), 1.0}});
}

double Distribution::weight(const std::string& label) const {
  auto it = weights_.find(label);
  return it == weights_.end() ? 0.0 : it->second;
}

std::vector<std::pair<std::string, double>> Distribution::ranked() const {
  std::vector<std::pair<std::string, double>> out(weights_.begin(), weights_.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace mlmprobe
