#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <json.hpp>

#include "cli.hpp"
#include "kc/capture.hpp"
#include "kc/dataset.hpp"
#include "kc/turtle.hpp"

namespace kc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kData(KC_DATA_DIR);

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result kc(std::vector<std::string> args) {
  args.insert(args.begin(), "kc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("kc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    wd = "--workdir=" + dir.string();
  }
  void TearDown() override { fs::remove_all(dir); }
  void write(const std::string& name, const std::string& text) { std::ofstream(dir / name) << text; }

  fs::path dir;
  std::string wd;
  const std::string corpus = (kData / "corpus.jsonl").string();
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(kc({}).code, kUsageError);
  EXPECT_EQ(kc({"--bogus", "parse", "x"}).code, kUsageError);
  EXPECT_EQ(kc({"dataset", "stats", "--corpus", corpus, "--nope"}).code, kUsageError);
  EXPECT_EQ(kc({"dataset"}).code, kUsageError);
  EXPECT_EQ(kc({"eval", "--test", corpus, "--oracle", "--mode", "fuzzy"}).code, kUsageError);
  EXPECT_EQ(kc({"eval", "--test", corpus}).code, kUsageError);  // no backend
  EXPECT_EQ(kc({"eval", "--test", corpus, "--oracle", "--drop-rate", "1.5"}).code, kUsageError);
  EXPECT_EQ(kc({"eval", "--test", corpus, "--responses", "r.jsonl", "--oracle"}).code, kUsageError);
}

TEST_F(CliTest, HelpListsEveryFlag) {
  const auto r = kc({"eval", "--help"});
  EXPECT_EQ(r.code, kOk);
  for (const char* flag : {"--test", "--responses", "--endpoint", "--oracle", "--drop-rate", "--spurious-rate",
                           "--noise-seed", "--mode", "--fail-mode", "--macro", "--out", "--label"})
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  const auto top = kc({"--help"});
  for (const char* cmd : {"parse", "validate", "materialize", "dataset", "capture", "eval", "sweep", "store",
                          "--schema", "--workdir", "--config"})
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
}

TEST_F(CliTest, ParseValidateMaterialize) {
  write("g.ttl", "@prefix k: <https://know.dev/> .\n<urn:kc:person:me> k:father <urn:kc:person:robert> .\n");
  auto r = kc({wd, "parse", "g.ttl"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("know:father"), std::string::npos);
  r = kc({wd, "validate", "g.ttl", "--report", "v.json"});
  EXPECT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(json::parse(slurp(dir / "v.json"))["ok"].get<bool>());
  r = kc({wd, "materialize", "g.ttl", "--out", "m.ttl"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(slurp(dir / "m.ttl").find("know:child"), std::string::npos);

  write("bad.ttl", "<urn:a> <https://know.dev/father> <urn:b>, <urn:c> .\n");
  r = kc({wd, "validate", "bad.ttl", "--report", "v.json"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_NE(r.out.find("functional"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("<urn:c>"), std::string::npos);
  EXPECT_EQ(kc({wd, "materialize", "bad.ttl"}).code, kDomainError);

  write("broken.ttl", "<urn:a> <urn:b> .\n");
  r = kc({wd, "parse", "broken.ttl"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_NE(r.err.find("broken.ttl"), std::string::npos) << r.err;
  EXPECT_EQ(kc({wd, "parse", "missing.ttl"}).code, kDomainError);
}

TEST_F(CliTest, StatsTableHasNoneRow) {
  const auto r = kc({wd, "dataset", "stats", "--corpus", corpus, "--json", "stats.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("\nnone "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("70 samples (60 ontology, 10 generic)"), std::string::npos) << r.out;
  const json j = json::parse(slurp(dir / "stats.json"));
  EXPECT_EQ(j["histogram"]["none"], 10);
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsWin) {
  write("kc.json", json{{"corpus", corpus}, {"out_dir", "parts"}}.dump());
  auto r = kc({wd, "dataset", "stats"});
  ASSERT_EQ(r.code, kOk) << r.err;
  r = kc({wd, "dataset", "split", "--test-count", "10", "--seed", "3"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "parts" / "test.jsonl"));
  r = kc({wd, "--out-dir", "other", "dataset", "split", "--test-count", "10"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "other" / "train.jsonl"));
  write("kc.json", "{not json");
  EXPECT_EQ(kc({wd, "dataset", "stats"}).code, kDomainError);
}

TEST_F(CliTest, SplitIsDisjointAndDeterministic) {
  ASSERT_EQ(kc({wd, "--out-dir", "a", "dataset", "split", "--corpus", corpus, "--test-count", "14", "--seed", "5"}).code,
            kOk);
  ASSERT_EQ(kc({wd, "--out-dir", "b", "dataset", "split", "--corpus", corpus, "--test-count", "14", "--seed", "5"}).code,
            kOk);
  EXPECT_EQ(slurp(dir / "a" / "test.jsonl"), slurp(dir / "b" / "test.jsonl"));
  EXPECT_EQ(slurp(dir / "a" / "split.json"), slurp(dir / "b" / "split.json"));
  const json s = json::parse(slurp(dir / "a" / "split.json"));
  std::set<std::string> train(s["train"].begin(), s["train"].end()), test(s["test"].begin(), s["test"].end());
  EXPECT_EQ(test.size(), 14u);
  EXPECT_EQ(train.size(), 56u);
  for (const auto& id : test) EXPECT_FALSE(train.count(id));
  EXPECT_EQ(kc({wd, "dataset", "split", "--corpus", corpus, "--test-count", "70"}).code, kDomainError);
}

TEST_F(CliTest, SelectTwiceIsByteIdentical) {
  for (const char* out : {"s1.jsonl", "s2.jsonl"})
    ASSERT_EQ(kc({wd, "dataset", "select", "--corpus", corpus, "--k", "8", "--seed", "7", "--out", out}).code, kOk);
  EXPECT_EQ(slurp(dir / "s1.jsonl"), slurp(dir / "s2.jsonl"));
  const auto picked = dataset::load_corpus(dir / "s1.jsonl", onto::default_schema());
  const auto hist = dataset::corpus_stats(picked);
  for (const auto& tag : dataset::swept_concepts()) EXPECT_GE(hist.get(tag), 8u) << tag;
  const auto r = kc({wd, "dataset", "select", "--corpus", corpus, "--k", "50", "--out", "x.jsonl"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_NE(r.err.find("needed"), std::string::npos);
}

TEST_F(CliTest, ExportRefusesOverwrite) {
  auto r = kc({wd, "dataset", "export", "--corpus", corpus, "--out", "train.jsonl", "--k", "4"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("70 records"), std::string::npos);
  EXPECT_EQ(json::parse(slurp(dir / "train.jsonl.manifest.json"))["samples_per_concept"], 4);
  EXPECT_EQ(kc({wd, "dataset", "export", "--corpus", corpus, "--out", "train.jsonl"}).code, kDomainError);
  EXPECT_EQ(kc({wd, "dataset", "export", "--corpus", corpus, "--out", "train.jsonl", "--force"}).code, kOk);
}

TEST_F(CliTest, EvalZeroNoiseOracle) {
  for (const char* mode : {"name-keyed", "iso"}) {
    const auto r = kc({wd, "eval", "--test", corpus, "--split-seed", "7", "--test-count", "14", "--oracle", "--mode",
                       mode, "--out", "report.json"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.out.find("micro F1 1.000"), std::string::npos) << r.out;
    const json j = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(j["micro"]["f1"], 1.0);
    EXPECT_EQ(j["config"]["backend"], "oracle");
    EXPECT_EQ(j["config"]["split"]["test_count"], 14);
    EXPECT_TRUE(j["config"].contains("cli"));
  }
}

TEST_F(CliTest, EvalReplayAndFailModes) {
  // record perfect responses for all but one sample
  const auto c = dataset::load_corpus(corpus, onto::default_schema());
  {
    std::ofstream rec(dir / "rec.jsonl");
    for (std::size_t i = 1; i < c.size(); ++i)
      rec << json{{"sample_id", c.samples[i].id},
                  {"response_text", rdf::serialize_turtle(c.samples[i].expected, rdf::default_prefixes())}}
                 .dump()
          << '\n';
  }
  auto r = kc({wd, "eval", "--test", corpus, "--responses", "rec.jsonl"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_NE(r.err.find(c.samples[0].id), std::string::npos) << r.err;
  std::ofstream(dir / "rec.jsonl", std::ios::app)
      << json{{"sample_id", c.samples[0].id}, {"response_text", "garbage {"}}.dump() << '\n';
  r = kc({wd, "eval", "--test", corpus, "--responses", "rec.jsonl", "--macro", "--out", "rep.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("1 parse failure"), std::string::npos);
  EXPECT_NE(r.out.find("macro"), std::string::npos);
  EXPECT_EQ(json::parse(slurp(dir / "rep.json"))["parse_failures"], 1);
}

TEST_F(CliTest, SweepWritesCsvAndSvg) {
  write("sweep.json", json{{"test_corpus", corpus},
                           {"runs",
                            {{{"label", "k=2"}, {"backend", "oracle"}, {"noise", {{"drop_rate", 0.5}}}},
                             {{"label", "k=8"}, {"backend", "oracle"}}}}}
                          .dump());
  auto r = kc({wd, "sweep", "--manifest", "sweep.json", "--csv", "out.csv", "--svg", "out.svg", "--json", "all.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const std::string csv = slurp(dir / "out.csv");
  EXPECT_TRUE(csv.starts_with("label,precision,recall,f1,tp,fp,fn\r\n"));
  EXPECT_NE(csv.find("k=8,1.000000"), std::string::npos);
  EXPECT_NE(slurp(dir / "out.svg").find("<svg"), std::string::npos);
  EXPECT_EQ(json::parse(slurp(dir / "all.json"))["runs"].size(), 2u);

  write("bad.json", json{{"test_corpus", corpus}, {"runs", {{{"label", "r"}, {"backend", "replay"}, {"responses", "no.jsonl"}}}}}.dump());
  r = kc({wd, "sweep", "--manifest", "bad.json", "--csv", "bad.csv"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_TRUE(fs::exists(dir / "bad.csv"));
}

TEST_F(CliTest, CaptureAndStore) {
  write("gold.ttl", "_:me know:father _:r . _:r know:name \"Robert\" .");
  auto r = kc({wd, "capture", "--store", "kg.ttl", "--prompt", "My father is Robert.", "--oracle", "--gold", "gold.ttl",
               "--record", "rec.jsonl", "--timestamp", "t1"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("status: captured"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "kg.ttl"));
  EXPECT_EQ(model::read_recording(dir / "rec.jsonl").size(), 1u);

  // replaying the recording is a pure duplicate
  const auto first = capture::load_store(dir / "kg.ttl", onto::default_schema());
  r = kc({wd, "capture", "--store", "kg.ttl", "--prompt", "My father is Robert.", "--responses", "rec.jsonl"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto store = capture::load_store(dir / "kg.ttl", onto::default_schema());
  EXPECT_EQ(store.graph, first.graph);

  write("james.ttl", "_:me know:father _:j . _:j know:name \"James\" .");
  r = kc({wd, "store", "merge", "--store", "kg.ttl", "--from", "james.ttl"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_NE(r.out.find("functional"), std::string::npos);
  EXPECT_EQ(capture::load_store(dir / "kg.ttl", onto::default_schema()), store);
  r = kc({wd, "store", "merge", "--store", "kg.ttl", "--from", "james.ttl", "--policy", "keep-new"});
  ASSERT_EQ(r.code, kOk) << r.err;

  r = kc({wd, "store", "show", "--store", "kg.ttl", "--json", "show.json", "--turtle"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("person:james"), std::string::npos);
  const json j = json::parse(slurp(dir / "show.json"));
  EXPECT_EQ(j["sources"].size(), 2u);

  write("raw.txt", "not turtle at all {");
  r = kc({wd, "capture", "--store", "kg.ttl", "--prompt", "hi", "--response-file", "raw.txt"});
  EXPECT_EQ(r.code, kDomainError);
  EXPECT_NE(r.err.find("syntax error"), std::string::npos);
  write("empty.txt", "");
  EXPECT_EQ(kc({wd, "capture", "--store", "kg.ttl", "--prompt", "What's the weather?", "--response-file", "empty.txt"})
                .code,
            kOk);
  EXPECT_EQ(kc({wd, "capture", "--store", "kg.ttl", "--prompt", "x", "--oracle"}).code, kUsageError);
}

}  // namespace
}  // namespace kc::cli
