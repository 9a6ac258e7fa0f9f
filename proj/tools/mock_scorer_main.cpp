// Deterministic stand-in for the masked-LM backend, speaking the scorer
// protocol on stdin/stdout.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlmprobe/error.hpp"
#include "mlmprobe/mock_scorer.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mock masked-LM scorer"};
  std::string config_path;
  int delay_ms = 0;
  std::string crash_marker;
  std::size_t crash_after = 0;
  app.add_option("--config", config_path, "mock config JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--delay-ms", delay_ms, "sleep before every answer");
  app.add_option("--crash-marker", crash_marker,
                 "exit abruptly once, after --crash-after answers, if this file is absent "
                 "(the file is created first)");
  app.add_option("--crash-after", crash_after);
  CLI11_PARSE(app, argc, argv);

  std::unique_ptr<mlmprobe::MockModel> model;
  try {
    std::ifstream in(config_path);
    model = std::make_unique<mlmprobe::MockModel>(
        mlmprobe::MockScorerConfig::from_json(nlohmann::json::parse(in)));
  } catch (const std::exception& e) {
    std::cerr << "mock scorer: " << e.what() << "\n";
    return 2;
  }
  bool crash = !crash_marker.empty() && !std::filesystem::exists(crash_marker);
  if (crash) std::ofstream{crash_marker} << "crashed\n";

  std::ios::sync_with_stdio(false);
  std::cout << model->handshake_line() << std::endl;
  std::string line;
  std::size_t answered = 0;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    if (crash && answered == crash_after) std::_Exit(1);
    if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    std::cout << model->handle(line) << std::endl;
    ++answered;
  }
  return 0;
}
