#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "mlmprobe/mock_scorer.hpp"
#include "mlmprobe/scorer.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen{std::random_device{}()};
    path_ = fs::temp_directory_path() / ("mlmprobe-" + tag + "-" + std::to_string(gen()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::shared_ptr<const mlmprobe::MockModel> mock_model(const std::string& config_json) {
  return std::make_shared<mlmprobe::MockModel>(
      mlmprobe::MockScorerConfig::from_json(nlohmann::json::parse(config_json)));
}

inline std::unique_ptr<mlmprobe::Scorer> loopback_scorer(const std::string& config_json) {
  return std::make_unique<mlmprobe::Scorer>(mlmprobe::make_loopback_transport(mock_model(config_json)));
}

}  // namespace testing
