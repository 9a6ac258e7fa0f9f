#include <doctest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include "world.hpp"

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is discarded.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string(CLI_PATH) + " -q " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

struct Fixture {
  testing::TempDir dir{"cli"};
  world::Paths paths = world::write(dir.path());

  std::string scorer(double shift, const std::string& extra = "") const {
    auto cfg = dir / ("mock-" + std::to_string(shift) + ".json");
    testing::write_file(cfg, world::mock_json(shift, true));
    return "--scorer-cmd \"" + std::string(MOCK_SCORER_PATH) + " --config " + cfg.string() + extra + "\"";
  }

  std::string prompt_bias(const std::string& out) const {
    return "run --experiment prompt-bias --facts " + q(paths.reference) + " --contrast-facts " +
           q(paths.contrast) + " --prompts manual=" + paths.manual.string() + " --prompts mined=" +
           paths.mined.string() + " --out " + q(dir / out) + " --seed 3";
  }
};

}  // namespace

TEST_CASE("successful runs exit 0 and write artifacts") {
  Fixture fx;
  auto r = cli(fx.prompt_bias("pb") + " " + fx.scorer(0.0));
  CHECK(r.code == 0);
  for (const auto* name : {"config.json", "metrics.csv", "report.md", "summary.json"}) {
    CHECK(std::filesystem::exists(fx.dir / "pb" / name));
  }
  auto report = testing::read_file(fx.dir / "pb" / "report.md");

  // report re-renders the same markdown from metrics.csv alone.
  std::filesystem::remove(fx.dir / "pb" / "report.md");
  CHECK(cli("report --out " + q(fx.dir / "pb")).code == 0);
  CHECK(testing::read_file(fx.dir / "pb" / "report.md") == report);
  auto printed = cli("report --metrics " + q(fx.dir / "pb" / "metrics.csv"));
  CHECK(printed.code == 0);
  CHECK(printed.out == report);
}

TEST_CASE("config file with flag overrides") {
  Fixture fx;
  nlohmann::json cfg{{"experiment", "context_inference"},
                     {"facts", fx.paths.reference.string()},
                     {"contexts", fx.paths.contexts.string()},
                     {"prompts", {{{"source", "manual"}, {"path", fx.paths.manual.string()}}}},
                     {"out", (fx.dir / "ignored").string()}};
  testing::write_file(fx.dir / "run.json", cfg.dump());
  auto r = cli("run --config " + q(fx.dir / "run.json") + " --out " + q(fx.dir / "ci") + " " + fx.scorer(0.0));
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(fx.dir / "ci" / "metrics.csv"));
  CHECK_FALSE(std::filesystem::exists(fx.dir / "ignored"));
  auto resolved = nlohmann::json::parse(testing::read_file(fx.dir / "ci" / "config.json"));
  CHECK(resolved["experiment"] == "context_inference");
}

TEST_CASE("case analogy and build-uniform from the command line") {
  Fixture fx;
  auto r = cli("run --experiment case-analogy --facts " + q(fx.paths.reference) + " --prompts manual=" +
               fx.paths.manual.string() + " --taxonomy " + q(fx.paths.taxonomy) + " --labels " +
               q(fx.paths.labels) + " --cases 2 --out " + q(fx.dir / "ca") + " " + fx.scorer(0.5));
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(fx.dir / "ca" / "types.tsv"));
  auto b = cli("build-uniform --facts " + q(fx.paths.reference) + " --out " + q(fx.dir / "bu") + " " +
               fx.scorer(0.0));
  CHECK(b.code == 0);
  CHECK(std::filesystem::exists(fx.dir / "bu" / "uniform_facts.tsv"));
  CHECK(std::filesystem::exists(fx.dir / "bu" / "uniform_report.tsv"));
}

TEST_CASE("configuration and data errors exit 2") {
  Fixture fx;
  CHECK(cli("run --experiment prompt-bias --facts " + q(fx.dir / "missing.tsv") + " --out " + q(fx.dir / "x")).code == 2);
  CHECK(cli("run --bogus-flag").code == 2);
  CHECK(cli("run --experiment nonsense --facts " + q(fx.paths.reference)).code == 2);
  CHECK(cli(fx.prompt_bias("pb") + " --top-k 0 " + fx.scorer(0.0)).code == 2);

  std::filesystem::create_directories(fx.dir / "busy");
  testing::write_file(fx.dir / "busy" / "stale.txt", "x");
  CHECK(cli(fx.prompt_bias("busy") + " " + fx.scorer(0.0)).code == 2);

  testing::write_file(fx.dir / "broken.tsv", "only\ttwo\n");
  CHECK(cli("run --experiment prompt-bias --facts " + q(fx.dir / "broken.tsv") + " --contrast-facts " +
            q(fx.paths.contrast) + " --prompts manual=" + fx.paths.manual.string() + " --out " +
            q(fx.dir / "y") + " " + fx.scorer(0.0)).code == 2);
}

TEST_CASE("backend failures exit 3") {
  Fixture fx;
  CHECK(cli(fx.prompt_bias("dead") + " --scorer-cmd 'exit 0'").code == 3);
  CHECK(cli(fx.prompt_bias("garbage") + " --scorer-cmd 'echo not-a-handshake'").code == 3);
  auto summary = testing::read_file(fx.dir / "garbage" / "summary.json");
  CHECK(summary.find("failed") != std::string::npos);
}

TEST_CASE("analysis failures exit 4") {
  Fixture fx;
  // Type induction fails when no type covers enough of the objects.
  testing::write_file(fx.dir / "sparse.tsv", "Q90\tQ515\tinstance_of\n");
  auto r = cli("induce-types --facts " + q(fx.paths.reference) + " --taxonomy " + q(fx.dir / "sparse.tsv"));
  CHECK(r.code == 4);
  auto ok = cli("induce-types --facts " + q(fx.paths.reference) + " --taxonomy " + q(fx.paths.taxonomy) +
                " --labels " + q(fx.paths.labels));
  CHECK(ok.code == 0);
  CHECK(ok.out == "P19\tQ515\tcity\t1.000000\nP27\tQ6256\tcountry\t1.000000\n");
}

TEST_CASE("convert") {
  Fixture fx;
  testing::write_file(fx.dir / "trex.jsonl",
                      R"({"sub_uri": "Q1", "sub_label": "Ann", "predicate_id": "P19", "obj_uri": "Q90", "obj_label": "Paris"})"
                      "\n");
  auto r = cli("convert lama-facts --input " + q(fx.dir / "trex.jsonl") + " --output " + q(fx.dir / "facts.tsv"));
  CHECK(r.code == 0);
  CHECK(testing::read_file(fx.dir / "facts.tsv") == "Q1\tAnn\tP19\tQ90\tParis\n");

  testing::write_file(fx.dir / "relations.jsonl", R"({"relation": "P19", "template": "[X] was born in [Y] ."})" "\n");
  CHECK(cli("convert lama-relations --input " + q(fx.dir / "relations.jsonl") + " --output " +
            q(fx.dir / "prompts.tsv")).code == 0);
  CHECK(testing::read_file(fx.dir / "prompts.tsv") == "P19\t[X] was born in [Y] .\n");

  testing::write_file(fx.dir / "bad.jsonl", "{not json\n");
  CHECK(cli("convert lama-relations --input " + q(fx.dir / "bad.jsonl") + " --output " +
            q(fx.dir / "p2.tsv")).code == 2);
}
