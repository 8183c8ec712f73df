#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "egoexo/cli/app.hpp"
#include "egoexo/cli/run_config.hpp"
#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"
#include "egoexo/synthetic/generators.hpp"
#include "support/temp_dir.hpp"

using namespace egoexo;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

const std::string kFix = EGOEXO_FIXTURES;

}  // namespace

TEST_CASE("no arguments prints usage and fails") {
  const auto r = run({});
  CHECK(r.status != 0);
  CHECK(r.err.find("mine-pairs") != std::string::npos);
  CHECK(r.err.find("train-retrieval") != std::string::npos);
}

TEST_CASE("unknown subcommands and flags are rejected") {
  CHECK(run({"frobnicate"}).status != 0);
  const auto r = run({"mine-pairs", "--no_such_field", "1"});
  CHECK(r.status != 0);
  CHECK(r.err.find("no_such_field") != std::string::npos);
}

TEST_CASE("mine-pairs on the six-clip fixture") {
  testutil::TempDir dir;
  const auto r = run({"mine-pairs", "--ego_manifest", kFix + "/mine6/ego.jsonl", "--exo_manifest", kFix + "/mine6/exo.jsonl",
                      "--lexicon", kFix + "/lexicon.tsv", "--pairs", dir / "pairs.jsonl", "--extended_exo_manifest",
                      dir / "ext.jsonl"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(io::read_file_text(dir / "pairs.jsonl") == io::read_file_text(kFix + "/mine6/expected_pairs_top1.jsonl"));
  CHECK(r.out.find("mine-pairs: done") != std::string::npos);
  CHECK(r.out.find("ego_with_pairs=2") != std::string::npos);

  const auto summary = nlohmann::json::parse(io::read_file_text(dir / "pairs.jsonl.summary.json"));
  CHECK(summary.at("command") == "mine-pairs");
  CHECK(summary.at("config").at("top_k") == 1);
  CHECK(summary.at("config_hash").get<std::string>().size() == 16);

  // x1 [0,4] and x2 [5,9] share video vx; x3 [0,6] is alone in vy
  const auto ext = io::read_file_text(dir / "ext.jsonl");
  CHECK(ext.find(R"("clip_id":"x2")") != std::string::npos);
  std::istringstream lines(ext);
  std::string line;
  std::vector<std::pair<double, double>> spans;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    spans.emplace_back(j.at("start").get<double>(), j.at("end").get<double>());
  }
  CHECK(spans == std::vector<std::pair<double, double>>{{0, 5}, {4, 9}, {0, 6}});

  const auto top2 = run({"mine-pairs", "--ego_manifest", kFix + "/mine6/ego.jsonl", "--exo_manifest",
                         kFix + "/mine6/exo.jsonl", "--lexicon", kFix + "/lexicon.tsv", "--pairs", dir / "p2.jsonl",
                         "--top_k", "2"});
  REQUIRE(top2.status == 0);
  CHECK(io::read_file_text(dir / "p2.jsonl") == io::read_file_text(kFix + "/mine6/expected_pairs_top2.jsonl"));
}

TEST_CASE("train-retrieval echoes the default hyperparameters") {
  testutil::TempDir dir;
  synthetic::DeskCorpusConfig dc;
  dc.ego_per_scenario = 2;
  dc.exo_videos_per_scenario = 1;
  dc.narrations_per_video = 3;
  synthetic::write_desk_corpus(synthetic::make_desk_corpus(dc), dir.path());
  const auto mined = run({"mine-pairs", "--ego_manifest", dir / "ego.jsonl", "--exo_manifest", dir / "exo.jsonl",
                          "--lexicon", dir / "lexicon.tsv", "--pairs", dir / "pairs.jsonl"});
  REQUIRE_MESSAGE(mined.status == 0, mined.err);
  const auto r = run({"train-retrieval", "--ego_manifest", dir / "ego.jsonl", "--exo_manifest", dir / "exo.jsonl",
                      "--ego_features", dir / "ego.cvfs", "--exo_features", dir / "exo.cvfs", "--lexicon",
                      dir / "lexicon.tsv", "--pairs", dir / "pairs.jsonl", "--retrieval_checkpoint", dir / "r.ck",
                      "--encoder_layers", "1", "--encoder_heads", "2", "--text_buckets", "64", "--max_steps", "1"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("epochs=5 lr=3e-05 batch_size=4096") != std::string::npos);
  CHECK(fs::exists(dir / "r.ck"));
}

TEST_CASE("config precedence: defaults, environment, file, flags") {
  testutil::TempDir dir;
  io::write_file_text(dir / "c.json", R"({"epochs": 9, "lr": 0.5, "refiner_url": "http://file"})");
  auto printed = [](const Result& r) { return nlohmann::json::parse(r.out); };

  const auto plain = run({"train-retrieval", "--print-config"});
  REQUIRE(plain.status == 0);
  CHECK(printed(plain).at("epochs") == 5);
  CHECK(printed(plain).at("batch_size") == 4096);

  ::setenv("EGOEXO_REFINER_URL", "http://env", 1);
  CHECK(printed(run({"refine-captions", "--print-config"})).at("refiner_url") == "http://env");
  const auto file = printed(run({"refine-captions", "--print-config", "--config", dir / "c.json"}));
  CHECK(file.at("refiner_url") == "http://file");
  CHECK(file.at("epochs") == 9);
  const auto flags = printed(
      run({"refine-captions", "--print-config", "--config", dir / "c.json", "--epochs", "2", "--refiner_url", "http://flag"}));
  CHECK(flags.at("epochs") == 2);
  CHECK(flags.at("lr") == 0.5);
  CHECK(flags.at("refiner_url") == "http://flag");
  ::unsetenv("EGOEXO_REFINER_URL");

  io::write_file_text(dir / "bad.json", R"({"epochs": 9, "mystery": 1})");
  CHECK(run({"train-retrieval", "--print-config", "--config", dir / "bad.json"}).status != 0);
  CHECK(run({"train-retrieval", "--print-config", "--epochs", "many"}).status != 0);
  CHECK(run({"train-retrieval", "--print-config", "--temperature", "-1"}).status != 0);

  // the shipped configs resolve cleanly
  for (const char* name : {"/configs/default.json", "/configs/desk.json"})
    CHECK(run({"caption", "--print-config", "--config", std::string(EGOEXO_SOURCE_DIR) + name}).status == 0);
  CHECK(printed(run({"caption", "--print-config", "--config", std::string(EGOEXO_SOURCE_DIR) + "/configs/default.json"})) ==
        cli::RunConfig{}.to_json());
}

TEST_CASE("run config helpers") {
  cli::RunConfig c;
  CHECK(cli::RunConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(cli::parse_override("epochs", "7") == 7);
  CHECK(cli::parse_override("lr", "1e-3") == 1e-3);
  CHECK(cli::parse_override("train_decoder", "false") == false);
  CHECK(cli::parse_override("entity_rule", "or") == "or");
  CHECK_THROWS_AS(cli::parse_override("nonsense", "1"), ValidationError);
  auto d = c;
  d.seed = 1;
  CHECK(d.hash() != c.hash());
  CHECK(c.hash() == cli::RunConfig{}.hash());
}

TEST_CASE("inputs are validated before anything is written") {
  testutil::TempDir dir;
  // bad lexicon path: nothing written
  auto r = run({"mine-pairs", "--ego_manifest", kFix + "/mine6/ego.jsonl", "--exo_manifest", kFix + "/mine6/exo.jsonl",
                "--lexicon", dir / "missing.tsv", "--pairs", dir / "pairs.jsonl"});
  CHECK(r.status == 1);
  CHECK_FALSE(fs::exists(dir / "pairs.jsonl"));
  CHECK(r.err.find("missing.tsv") != std::string::npos);

  // malformed manifest: error names file and line, nothing written
  io::write_file_text(dir / "ego.jsonl", io::read_file_text(kFix + "/mine6/ego.jsonl") + "{broken\n");
  r = run({"mine-pairs", "--ego_manifest", dir / "ego.jsonl", "--exo_manifest", kFix + "/mine6/exo.jsonl", "--lexicon",
           kFix + "/lexicon.tsv", "--pairs", dir / "pairs.jsonl"});
  CHECK(r.status == 1);
  CHECK(r.err.find("ego.jsonl:4") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "pairs.jsonl"));

  // output directory missing
  r = run({"mine-pairs", "--ego_manifest", kFix + "/mine6/ego.jsonl", "--exo_manifest", kFix + "/mine6/exo.jsonl",
           "--lexicon", kFix + "/lexicon.tsv", "--pairs", dir / "nowhere/pairs.jsonl"});
  CHECK(r.status == 1);

  // missing required path
  r = run({"build-index", "--exo_manifest", kFix + "/mine6/exo.jsonl"});
  CHECK(r.status == 1);
  CHECK(r.err.find("required") != std::string::npos);

  // features missing for the manifest's clips: no checkpoint
  synthetic::DeskCorpusConfig dc;
  dc.ego_per_scenario = 1;
  dc.exo_videos_per_scenario = 1;
  dc.narrations_per_video = 2;
  synthetic::write_desk_corpus(synthetic::make_desk_corpus(dc), dir.path());
  r = run({"train-retrieval", "--ego_manifest", kFix + "/mine6/ego.jsonl", "--exo_manifest", kFix + "/mine6/exo.jsonl",
           "--ego_features", dir / "ego.cvfs", "--exo_features", dir / "exo.cvfs", "--lexicon", kFix + "/lexicon.tsv",
           "--pairs", kFix + "/mine6/expected_pairs_top1.jsonl", "--retrieval_checkpoint", dir / "r.ck"});
  CHECK(r.status == 1);
  CHECK_FALSE(fs::exists(dir / "r.ck"));

  // http refiner without an endpoint
  r = run({"refine-captions", "--exo_manifest", kFix + "/mine6/exo.jsonl", "--lexicon", kFix + "/lexicon.tsv",
           "--prompt", std::string(EGOEXO_SOURCE_DIR) + "/data/refinement_prompt.tsv", "--refiner", "http",
           "--refined_manifest", dir / "refined.jsonl"});
  CHECK(r.status == 1);
  CHECK_FALSE(fs::exists(dir / "refined.jsonl"));
}

TEST_CASE("refine-captions with the fallback rules") {
  testutil::TempDir dir;
  const auto r = run({"refine-captions", "--exo_manifest", kFix + "/mine6/exo.jsonl", "--lexicon", kFix + "/lexicon.tsv",
                      "--refined_manifest", dir / "refined.jsonl"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto text = io::read_file_text(dir / "refined.jsonl");
  CHECK(text.find("The person cuts the onion.") != std::string::npos);
  CHECK(text.find("so now I'm gonna toast the bread okay") != std::string::npos);  // raw text kept
}
