#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mlmprobe {

// A normalized token -> probability map. Construction normalizes and checks
// the invariants (non-negative weights, non-empty labels, positive total).
class Distribution {
 public:
  Distribution() = default;

  static Distribution from_weights(std::map<std::string, double> weights);
  static Distribution from_counts(const std::map<std::string, std::size_t>& counts);
  static Distribution point(std::string label);

  double weight(const std::string& label) const;
  const std::map<std::string, double>& weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  // Entries by descending weight, ties by ascending label.
  std::vector<std::pair<std::string, double>> ranked() const;

 private:
  std::map<std::string, double> weights_;
};

}  // namespace mlmprobe
