// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "eva/trace_io.hpp"
#include "json.hpp"

namespace eva::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "eva");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("eva_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("EVA_JOBS");
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string make_trace(std::size_t steps = 4) {
    const std::string t = path("t.bin");
    const Outcome o = cli({"gen-traces", "--out", t, "--steps", std::to_string(steps), "--toy-seed", "3"});
    EXPECT_EQ(o.code, 0) << o.err;
    return t;
  }

  fs::path dir_;
};

TEST_F(Cli, DecodeRecordedTrace) {
  const std::string t = make_trace();
  const Outcome o = cli({"decode", "--method", "eva", "--alpha", "1.0", "--strategy", "greedy",
                         "--trace", t, "--out", path("eva.json"), "--steps-out", path("steps.jsonl")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json tokens = json::parse(slurp(path("eva.json")));
  EXPECT_EQ(tokens["tokens"], json::array({0, 0, 0, 0}));
  EXPECT_EQ(tokens["truncated"], true);

  std::istringstream lines(slurp(path("steps.jsonl")));
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const json j = json::parse(line);
    EXPECT_EQ(j["step"], n);
    EXPECT_EQ(j["selection"]["target_layer"], 24);
    EXPECT_EQ(j["selection"]["window"], json::array({20, 28}));
    EXPECT_EQ(j["selection"]["jsd_by_layer"].size(), 9u);
    EXPECT_EQ(j["modulation"]["target_layer"], 24);
    EXPECT_GT(j["modulation"]["max_jsd"].get<double>(), 0.0);
  }
  EXPECT_EQ(n, 4);
}

TEST_F(Cli, AlphaZeroOutputByteIdenticalToVanilla) {
  const std::string t = make_trace(6);
  for (const char* strategy : {"greedy", "nucleus", "beam"}) {
    std::vector<std::string> common{"decode", "--trace", t, "--strategy", strategy, "--seed", "4"};
    if (std::string(strategy) == "beam") common.insert(common.end(), {"--beam-width", "1"});
    auto a = common, b = common;
    a.insert(a.end(), {"--method", "eva", "--alpha", "0", "--out", path("a.json")});
    b.insert(b.end(), {"--method", "vanilla", "--out", path("v.json")});
    ASSERT_EQ(cli(a).code, 0);
    ASSERT_EQ(cli(b).code, 0);
    EXPECT_EQ(slurp(path("a.json")), slurp(path("v.json"))) << strategy;
  }
  // Live toy model with real beam branching.
  for (const char* method : {"eva", "vanilla"}) {
    std::vector<std::string> args{"decode", "--toy", "--strategy", "beam", "--beam-width", "3",
                                  "--max-new-tokens", "3", "--method", method,
                                  "--out", path(std::string(method) + ".json")};
    if (std::string(method) == "eva") args.insert(args.end(), {"--alpha", "0"});
    ASSERT_EQ(cli(args).code, 0);
  }
  EXPECT_EQ(slurp(path("eva.json")), slurp(path("vanilla.json")));
}

TEST_F(Cli, ExitCodes) {
  const std::string t = make_trace();
  EXPECT_EQ(cli({"decode", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"decode"}).code, kExitUsage);  // no source
  const Outcome conflict = cli({"decode", "--trace", t, "--toy-seed", "1"});
  EXPECT_EQ(conflict.code, kExitUsage);
  EXPECT_NE((conflict.out + conflict.err).find("Usage"), std::string::npos);  // help text
  EXPECT_EQ(cli({"decode", "--trace", t, "--strategy", "beam"}).code, kExitUsage);
  EXPECT_EQ(cli({"decode", "--trace", t, "--alpha", "-1"}).code, kExitUsage);
  EXPECT_EQ(cli({"decode", "--trace", t, "--layer-lo", "3"}).code, kExitUsage);
  EXPECT_EQ(cli({"decode", "--trace", t, "--layer-lo", "3", "--layer-hi", "31"}).code, kExitUsage);
  EXPECT_EQ(cli({"decode", "--trace", path("missing.bin")}).code, kExitData);
  spit(path("junk.bin"), "EVATRACE 9 vocab_size=2\n");
  EXPECT_EQ(cli({"decode", "--trace", path("junk.bin")}).code, kExitData);
  EXPECT_EQ(cli({"gen-traces", "--out", path("x.bin"), "--suppression", "40"}).code, kExitData);
  EXPECT_EQ(cli({"decode", "--help"}).code, kExitOk);
  EXPECT_EQ(cli({"--version"}).code, kExitOk);
}

TEST_F(Cli, DoesNotOverwriteInputs) {
  const std::string t = make_trace();
  const std::string before = slurp(t);
  EXPECT_EQ(cli({"decode", "--trace", t, "--out", t}).code, kExitUsage);
  ASSERT_EQ(cli({"decode", "--trace", t, "--out", path("o.json")}).code, 0);
  ASSERT_EQ(cli({"layer-report", "--trace", t, "--out", path("r.jsonl")}).code, 0);
  EXPECT_EQ(slurp(t), before);
}

TEST_F(Cli, ConfigPrecedence) {
  const std::string t = make_trace();
  ASSERT_EQ(cli({"decode", "--trace", t, "--method", "vanilla", "--out", path("v.json")}).code, 0);
  ASSERT_EQ(cli({"decode", "--trace", t, "--method", "eva", "--out", path("e.json")}).code, 0);
  ASSERT_NE(slurp(path("v.json")), slurp(path("e.json")));

  spit(path("cfg.json"), R"({"decode": {"alpha": 0.0}, "method": "eva"})");
  ASSERT_EQ(cli({"decode", "--trace", t, "--config", path("cfg.json"), "--out", path("c.json")}).code, 0);
  EXPECT_EQ(slurp(path("c.json")), slurp(path("v.json")));  // file beats default
  ASSERT_EQ(cli({"decode", "--trace", t, "--config", path("cfg.json"), "--alpha", "1",
                 "--out", path("f.json")}).code, 0);
  EXPECT_EQ(slurp(path("f.json")), slurp(path("e.json")));  // flag beats file

  spit(path("bad.json"), R"({"decode": {"alpah": 1}})");
  EXPECT_EQ(cli({"decode", "--trace", t, "--config", path("bad.json")}).code, kExitUsage);
  spit(path("bad2.json"), R"({"colour": 1})");
  EXPECT_EQ(cli({"decode", "--trace", t, "--config", path("bad2.json")}).code, kExitUsage);
}

TEST_F(Cli, ManifestRecordsResolvedConfigAndReplays) {
  const Outcome o = cli({"decode", "--toy", "--toy-seed", "8", "--strategy", "nucleus", "--seed", "5",
                         "--nucleus-p", "0.99", "--max-new-tokens", "6", "--out", path("n.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json m = json::parse(slurp(path("n.json.manifest.json")));
  for (const char* key : {"command", "tool_version", "config", "inputs", "outputs", "seed", "jobs",
                          "simd_backend", "duration_seconds"})
    EXPECT_TRUE(m.contains(key)) << key;
  EXPECT_EQ(m["command"], "decode");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["config"]["decode"]["alpha"], 1.0);
  EXPECT_EQ(m["config"]["decode"]["top_p"], 0.9);
  EXPECT_EQ(m["config"]["decode"]["strategy"], "nucleus");
  EXPECT_EQ(m["config"]["toy"]["seed"], 8);
  EXPECT_EQ(m["config"]["toy"]["plant"]["fact_layer"], 24);

  ASSERT_EQ(cli({"decode", "--config", path("n.json.manifest.json"), "--out", path("r.json")}).code, 0);
  EXPECT_EQ(slurp(path("r.json")), slurp(path("n.json")));
}

TEST_F(Cli, GenTracesManifestReplay) {
  ASSERT_EQ(cli({"gen-traces", "--out", path("a.bin"), "--steps", "3", "--toy-seed", "12",
                 "--fact-layer", "22"}).code, 0);
  ASSERT_EQ(cli({"gen-traces", "--config", path("a.bin.manifest.json"), "--out", path("b.bin")}).code, 0);
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
  EXPECT_EQ(read_trace(path("a.bin")).steps.size(), 3u);
}

TEST_F(Cli, LayerReport) {
  const std::string t = make_trace(2);
  ASSERT_EQ(cli({"layer-report", "--trace", t, "--top-k", "3", "--out", path("r.jsonl")}).code, 0);
  std::istringstream lines(slurp(path("r.jsonl")));
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const json j = json::parse(line);
    EXPECT_EQ(j["layer"], n % 32);
    EXPECT_EQ(j["step"], n / 32);
    EXPECT_EQ(j["tracked_tokens"].size(), 3u);
    EXPECT_EQ(j["in_window"], n % 32 >= 20 && n % 32 <= 28);
    if (n % 32 != 24) {
      EXPECT_EQ(j["candidate_jsd"], 0.0);
    }
  }
  EXPECT_EQ(n, 64);
  const Outcome toy = cli({"layer-report", "--toy", "--steps", "1"});
  EXPECT_EQ(toy.code, 0);
  EXPECT_EQ(std::count(toy.out.begin(), toy.out.end(), '\n'), 32);
}

TEST_F(Cli, EvalChair) {
  spit(path("caps.jsonl"),
       "{\"image_id\":\"1\",\"objects\":[\"dog\",\"puppy\",\"man\"]}\n"
       "{\"image_id\":\"2\",\"objects\":[\"cat\",\"sofa\",\"clock\"]}\n"
       "{\"image_id\":\"3\",\"objects\":[\"bus\",\"person\",\"truck\",\"car\"]}\n"
       "{\"image_id\":\"4\",\"objects\":[\"pizza\"]}\n");
  spit(path("gt.jsonl"),
       "{\"image_id\":\"1\",\"objects\":[\"dog\",\"person\",\"car\"]}\n"
       "{\"image_id\":\"2\",\"objects\":[\"cat\",\"couch\"]}\n"
       "{\"image_id\":\"3\",\"objects\":[\"bus\",\"people\"]}\n"
       "{\"image_id\":4,\"objects\":[\"pizza\"]}\n");
  const Outcome o = cli({"eval-chair", "--captions", path("caps.jsonl"), "--ground-truth",
                         path("gt.jsonl"), "--synonyms", std::string(EVA_DATA_DIR) + "/coco_synonyms.jsonl",
                         "--out", path("chair.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json r = json::parse(slurp(path("chair.json")));
  EXPECT_EQ(r["chair_s"], 0.5);
  EXPECT_EQ(r["chair_i"], 0.3);
  EXPECT_NE(o.out.find("CHAIR_S 0.5000"), std::string::npos);
  spit(path("broken.jsonl"), "{\"image_id\":\"1\"}\n");
  EXPECT_EQ(cli({"eval-chair", "--captions", path("broken.jsonl"), "--ground-truth", path("gt.jsonl")}).code,
            kExitData);
}

TEST_F(Cli, EvalPope) {
  std::string text;
  auto add = [&](const char* split, int tp, int fp, int fn, int tn) {
    auto line = [&](const char* p, const char* l) {
      text += std::string("{\"split\":\"") + split + "\",\"predicted\":\"" + p + "\",\"label\":\"" + l + "\"}\n";
    };
    for (int i = 0; i < tp; ++i) line("yes", "yes");
    for (int i = 0; i < fp; ++i) line("yes", "no");
    for (int i = 0; i < fn; ++i) line("no", "yes");
    for (int i = 0; i < tn; ++i) line("no", "no");
  };
  add("random", 4, 1, 1, 4);
  add("popular", 3, 2, 1, 4);
  add("adversarial", 0, 0, 0, 5);
  spit(path("pope.jsonl"), text);
  const Outcome o = cli({"eval-pope", "--records", path("pope.jsonl"), "--out", path("pope.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json r = json::parse(slurp(path("pope.json")));
  EXPECT_NEAR(r["splits"]["random"]["f1"].get<double>(), 0.8, 1e-12);
  EXPECT_NEAR(r["splits"]["popular"]["f1"].get<double>(), 6.0 / 9.0, 1e-12);
  EXPECT_EQ(r["splits"]["adversarial"]["degenerate"], true);
  EXPECT_EQ(r["warnings"].size(), 1u);
  EXPECT_NE(o.err.find("warning"), std::string::npos);
  spit(path("bad.jsonl"), "{\"split\":\"random\",\"predicted\":\"maybe\",\"label\":\"no\"}\n");
  EXPECT_EQ(cli({"eval-pope", "--records", path("bad.jsonl")}).code, kExitData);
}

TEST_F(Cli, CompareActivationFilesMatchInMemoryAndJobs) {
  ASSERT_EQ(cli({"gen-traces", "--corpus", "80", "--out", path("c.bin"), "--annotations-out",
                 path("c.jsonl"), "--toy-seed", "21", "--jobs", "3"}).code, 0);
  ASSERT_EQ(cli({"compare-activation", "--trace", path("c.bin"), "--annotations", path("c.jsonl"),
                 "--out", path("files.json")}).code, 0);
  ASSERT_EQ(cli({"compare-activation", "--corpus", "80", "--toy-seed", "21", "--jobs", "1",
                 "--out", path("mem1.json")}).code, 0);
  setenv("EVA_JOBS", "4", 1);
  ASSERT_EQ(cli({"compare-activation", "--corpus", "80", "--toy-seed", "21", "--out", path("mem4.json")}).code, 0);
  const json m4 = json::parse(slurp(path("mem4.json.manifest.json")));
  EXPECT_EQ(m4["jobs"], 4);
  setenv("EVA_JOBS", "many", 1);
  EXPECT_EQ(cli({"compare-activation", "--corpus", "5"}).code, kExitUsage);
  unsetenv("EVA_JOBS");

  EXPECT_EQ(slurp(path("mem1.json")), slurp(path("mem4.json")));
  const json files = json::parse(slurp(path("files.json")));
  const json mem = json::parse(slurp(path("mem1.json")));
  EXPECT_EQ(files["eva"], mem["eva"]);
  EXPECT_EQ(files["deco"], mem["deco"]);
  EXPECT_EQ(mem["eva_ge_deco"], true);
  EXPECT_EQ(cli({"compare-activation", "--trace", path("c.bin")}).code, kExitUsage);
}

TEST_F(Cli, GenTracesCorpusNeedsAnnotations) {
  EXPECT_EQ(cli({"gen-traces", "--corpus", "3", "--out", path("c.bin")}).code, kExitUsage);
  EXPECT_EQ(cli({"gen-traces", "--corpus", "3", "--steps", "2", "--out", path("c.bin")}).code, kExitUsage);
}

TEST_F(Cli, Selftest) {
  const Outcome o = cli({"selftest", "--examples", "40", "--jobs", "2"});
  EXPECT_EQ(o.code, kExitOk) << o.out;
  EXPECT_NE(o.out.find("PASS planted-fact"), std::string::npos);
  EXPECT_EQ(o.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(cli({"selftest", "--no-plant"}).code, kExitUsage);
}

}  // namespace
}  // namespace eva::cli
