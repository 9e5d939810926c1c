#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "kc/model_client.hpp"
#include "kc/turtle.hpp"
#include "support/generators.hpp"

namespace kc::model {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace std::chrono_literals;

const onto::OntologySchema& schema() { return onto::default_schema(); }

rdf::Graph ttl(const std::string& text) { return rdf::parse_turtle(text, rdf::default_prefixes()); }

Request req(std::string id, rdf::Graph gold = {}, std::string prompt = "p") {
  return Request{std::move(id), std::move(prompt), std::move(gold)};
}

TEST(ClientConfig, DefaultsAndRanges) {
  ClientConfig c;
  EXPECT_EQ(c.model_name, "Mistral-7B-Instruct-v0.2");
  EXPECT_EQ(c.temperature, 0);
  EXPECT_EQ(c.max_parallel, 4);
  EXPECT_NO_THROW(c.check());
  c.max_parallel = 0;
  EXPECT_THROW(c.check(), std::invalid_argument);
  c = {};
  c.temperature = -0.1;
  EXPECT_THROW(c.check(), std::invalid_argument);
  c = {};
  c.noise.drop_rate = 1.5;
  EXPECT_THROW(c.check(), std::invalid_argument);
  EXPECT_EQ(parse_backend_kind("oracle"), BackendKind::kOracle);
  EXPECT_THROW(parse_backend_kind("gpu"), std::invalid_argument);
}

TEST(Oracle, ZeroNoiseReturnsGoldExactly) {
  const rdf::Graph gold = ttl("_:me know:sister _:a . _:a know:name \"Ann\" .");
  const OracleBackend as_recorded({}, schema(), rdf::CanonicalMode::kStrict);
  EXPECT_EQ(as_recorded.complete(req("s", gold), "sys"), rdf::serialize_turtle(gold, rdf::default_prefixes()));
  const OracleBackend keyed({}, schema());
  EXPECT_EQ(rdf::parse_turtle(keyed.complete(req("s", gold), "sys")),
            ttl("<urn:kc:person:me> know:sister <urn:kc:person:ann> . <urn:kc:person:ann> know:name \"Ann\" ."));
}

TEST(Oracle, FullDropIsEmptyResponse) {
  const OracleBackend oracle({1.0, 0.0, 3}, schema());
  EXPECT_EQ(oracle.complete(req("s", ttl("_:me know:knows _:a . _:a know:name \"A\" .")), ""), "");
}

// 1000 gold triples spread over many samples, as the evaluation sees them.
std::vector<Request> many_requests(std::size_t total_triples) {
  std::vector<Request> out;
  std::size_t n = 0;
  for (std::size_t i = 0; n < total_triples; ++i) {
    rdf::Graph g;
    for (std::size_t j = 0; j < 5 && n < total_triples; ++j, ++n)
      g.insert(rdf::Triple(rdf::Term::iri("http://e/p" + std::to_string(i)),
                           rdf::Term::iri(std::string(rdf::vocab::kKnow) + "knows"),
                           rdf::Term::iri("http://e/q" + std::to_string(i) + "-" + std::to_string(j))));
    out.push_back(req("s" + std::to_string(i), g));
  }
  return out;
}

TEST(Oracle, DropRateIsBinomial) {
  const auto requests = many_requests(1000);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const OracleBackend oracle({0.2, 0.0, seed}, schema());
    std::size_t survivors = 0;
    for (const auto& r : requests) {
      const auto g = oracle.respond(r);
      for (const auto& t : g) EXPECT_TRUE(r.gold.contains(t));
      survivors += g.size();
    }
    const double sigma = std::sqrt(1000 * 0.2 * 0.8);
    EXPECT_NEAR(static_cast<double>(survivors), 800.0, 3 * sigma) << "seed " << seed;
  }
}

TEST(Oracle, SpuriousTriplesAreFreshAndWellFormed) {
  const auto requests = many_requests(1000);
  const OracleBackend oracle({0.0, 0.1, 9}, schema());
  std::size_t spurious = 0;
  for (const auto& r : requests) {
    const std::string text = oracle.complete(r, "");
    const rdf::Graph g = rdf::parse_turtle(text);
    for (const auto& t : g) {
      if (r.gold.contains(t)) continue;
      ++spurious;
      EXPECT_NE(schema().object_property(t.predicate.value()), nullptr);
      EXPECT_TRUE(t.subject.value().starts_with("urn:kc:oracle:"));
      EXPECT_TRUE(t.object.value().starts_with("urn:kc:oracle:"));
    }
  }
  EXPECT_NEAR(static_cast<double>(spurious), 100.0, 3 * std::sqrt(1000 * 0.1 * 0.9));
}

TEST(Oracle, NoiseDependsOnSeedAndSampleNotCallOrder) {
  auto requests = many_requests(200);
  const OracleBackend oracle({0.3, 0.2, 5}, schema());
  std::map<std::string, std::string> first;
  for (const auto& r : requests) first[r.sample_id] = oracle.complete(r, "");
  std::reverse(requests.begin(), requests.end());
  for (const auto& r : requests) EXPECT_EQ(oracle.complete(r, ""), first[r.sample_id]);
  const OracleBackend other({0.3, 0.2, 6}, schema());
  std::size_t differing = 0;
  for (const auto& r : requests) differing += other.complete(r, "") != first[r.sample_id] ? 1 : 0;
  EXPECT_GT(differing, 0u);
}

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove(path); }
  ~TempFile() { fs::remove(path); }
};

TEST(Replay, ReturnsRecordingsAndReportsGaps) {
  TempFile f("kc_replay_test.jsonl");
  {
    std::ofstream out(f.path);
    out << json{{"sample_id", "a"}, {"response_text", "_:me know:knows _:x ."}}.dump() << "\n\n"
        << json{{"sample_id", "b"}, {"response_text", ""}}.dump() << "\n";
  }
  const auto replay = ReplayBackend::from_file(f.path);
  EXPECT_EQ(replay.complete(req("a"), ""), "_:me know:knows _:x .");
  EXPECT_EQ(replay.complete(req("b"), ""), "");
  try {
    replay.complete(req("zzz"), "");
    FAIL();
  } catch (const MissingRecording& e) {
    EXPECT_EQ(e.sample_id(), "zzz");
  }
  {
    std::ofstream out(f.path, std::ios::app);
    out << json{{"sample_id", "a"}, {"response_text", "again"}}.dump() << "\n";
  }
  EXPECT_THROW(ReplayBackend::from_file(f.path), IoError);
  EXPECT_THROW(ReplayBackend::from_file("/nonexistent/r.jsonl"), IoError);
}

TEST(Replay, DoubleRunIsByteIdentical) {
  TempFile f("kc_replay_double.jsonl");
  std::vector<CompletionRecord> recorded;
  std::vector<Request> requests;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    CompletionRecord r;
    r.sample_id = "s" + std::to_string(i);
    r.response_text = rdf::serialize_turtle(kc::testing::random_schema_graph(rng, 6), rdf::default_prefixes());
    recorded.push_back(r);
    requests.push_back(req(r.sample_id));
  }
  write_recording(recorded, f.path);
  const auto a = batch_complete(ReplayBackend::from_file(f.path), requests, "", 4);
  const auto b = batch_complete(ReplayBackend::from_file(f.path), requests, "", 3);
  ASSERT_EQ(a.size(), recorded.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].response_text, recorded[i].response_text);
    EXPECT_EQ(a[i].response_text, b[i].response_text);
    EXPECT_EQ(a[i].backend, BackendKind::kReplay);
  }
}

// Sleeps a pseudo-random while and tracks how many calls overlap.
class CountingBackend : public Backend {
 public:
  std::string complete(const Request& r, const std::string&) const override {
    const int now = ++in_flight_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1 + std::hash<std::string>{}(r.sample_id) % 7));
    --in_flight_;
    if (r.sample_id == "bad") throw MalformedEndpointResponse("nope");
    return "echo " + r.sample_id;
  }
  BackendKind kind() const override { return BackendKind::kOracle; }
  int peak() const { return peak_; }

 private:
  mutable std::atomic<int> in_flight_{0};
  mutable std::atomic<int> peak_{0};
};

TEST(BatchComplete, KeepsInputOrderAndBoundsConcurrency) {
  for (int parallel : {1, 2, 4, 7}) {
    CountingBackend backend;
    std::vector<Request> requests;
    for (int i = 0; i < 40; ++i) requests.push_back(req(i == 13 ? "bad" : "s" + std::to_string(i)));
    const auto records = batch_complete(backend, requests, "", parallel);
    ASSERT_EQ(records.size(), requests.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      EXPECT_EQ(records[i].sample_id, requests[i].sample_id);
      if (i == 13) {
        EXPECT_FALSE(records[i].ok());
        EXPECT_EQ(records[i].error_kind, "malformed-response");
      } else {
        EXPECT_EQ(records[i].response_text, "echo " + requests[i].sample_id);
      }
    }
    EXPECT_LE(backend.peak(), parallel);
  }
  EXPECT_THROW(batch_complete(CountingBackend{}, {}, "", 0), std::invalid_argument);
  EXPECT_TRUE(batch_complete(CountingBackend{}, {}, "", 2).empty());
}

// A local chat-completions server. Prompts steer its behaviour.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
      const int now = ++in_flight_;
      int seen = peak_.load();
      while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
      }
      ++hits_;
      const json body = json::parse(rq.body);
      {
        std::lock_guard lock(mu_);
        last_body_ = body;
        last_auth_ = rq.get_header_value("Authorization");
      }
      const std::string prompt = body["messages"][1]["content"];
      std::this_thread::sleep_for(20ms);
      if (prompt == "slow") std::this_thread::sleep_for(1500ms);
      --in_flight_;
      if (prompt == "boom") {
        rs.status = 503;
        rs.set_content("overloaded", "text/plain");
      } else if (prompt == "odd") {
        rs.set_content(R"({"choices": []})", "application/json");
      } else {
        rs.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "re: " + prompt}}}}}}}.dump(),
                       "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/"; }
  int peak() const { return peak_; }
  int hits() const { return hits_; }
  json last_body() {
    std::lock_guard lock(mu_);
    return last_body_;
  }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> in_flight_{0}, peak_{0}, hits_{0};
  std::mutex mu_;
  json last_body_;
  std::string last_auth_;
};

ClientConfig endpoint_config(const std::string& url) {
  ClientConfig c;
  c.endpoint_url = url;
  c.timeout = 400ms;
  c.retry = {1, 10ms};
  c.api_key_env = "KC_TEST_API_KEY";
  return c;
}

TEST(Endpoint, SendsChatRequestWithBearerToken) {
  FakeEndpoint server;
  ::setenv("KC_TEST_API_KEY", "secret-token", 1);
  const EndpointBackend backend(endpoint_config(server.url()));
  ::unsetenv("KC_TEST_API_KEY");
  EXPECT_EQ(backend.complete(req("a", {}, "hello"), "be terse"), "re: hello");
  const json body = server.last_body();
  EXPECT_EQ(body["model"], "Mistral-7B-Instruct-v0.2");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["messages"][0], (json{{"role", "system"}, {"content", "be terse"}}));
  EXPECT_EQ(body["messages"][1], (json{{"role", "user"}, {"content", "hello"}}));
  EXPECT_FALSE(body.contains("max_tokens"));
  EXPECT_EQ(server.last_auth(), "Bearer secret-token");
}

TEST(Endpoint, BatchWithOneTimeout) {
  FakeEndpoint server;
  const EndpointBackend backend(endpoint_config(server.url()));
  std::vector<Request> requests;
  for (int i = 0; i < 10; ++i) requests.push_back(req("s" + std::to_string(i), {}, i == 6 ? "slow" : "q" + std::to_string(i)));
  const auto records = batch_complete(backend, requests, "sys", 4);
  ASSERT_EQ(records.size(), 10u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].sample_id, requests[i].sample_id);
    if (i == 6) {
      EXPECT_FALSE(records[i].ok());
      EXPECT_EQ(records[i].error_kind, "timeout") << *records[i].error;
    } else {
      EXPECT_TRUE(records[i].ok()) << *records[i].error;
      EXPECT_EQ(records[i].response_text, "re: q" + std::to_string(i));
    }
  }
  EXPECT_LE(server.peak(), 4);
}

TEST(Endpoint, HttpErrorsAndOddPayloadsAreNotRetried) {
  FakeEndpoint server;
  ClientConfig c = endpoint_config(server.url());
  c.retry = {3, 10ms};
  const EndpointBackend backend(c);
  try {
    backend.complete(req("a", {}, "boom"), "");
    FAIL();
  } catch (const HttpStatus& e) {
    EXPECT_EQ(e.code(), 503);
  }
  EXPECT_THROW(backend.complete(req("a", {}, "odd"), ""), MalformedEndpointResponse);
  EXPECT_EQ(server.hits(), 2);
}

TEST(Endpoint, TransportFailuresRetryWithBackoff) {
  int port;
  {
    httplib::Server probe;  // grab a free port, then release it
    port = probe.bind_to_any_port("127.0.0.1");
  }
  ClientConfig c = endpoint_config("http://127.0.0.1:" + std::to_string(port));
  c.retry = {3, 40ms};
  const EndpointBackend backend(c);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(backend.complete(req("a"), ""), TransportError);
  EXPECT_GE(std::chrono::steady_clock::now() - start, 120ms);  // 40 + 80
}

TEST(Endpoint, RejectsMalformedUrls) {
  for (const char* url : {"", "ftp://x/", "localhost:8080", "http://"})
    EXPECT_THROW(EndpointBackend(endpoint_config(url)), std::invalid_argument) << url;
}

TEST(MakeBackend, DispatchesOnKind) {
  ClientConfig c;
  c.backend = BackendKind::kOracle;
  EXPECT_EQ(make_backend(c, schema())->kind(), BackendKind::kOracle);
  c.backend = BackendKind::kReplay;
  c.replay_path = "/nonexistent/replay.jsonl";
  EXPECT_THROW(make_backend(c, schema()), IoError);
  c.backend = BackendKind::kEndpoint;
  c.endpoint_url = "http://localhost:1";
  EXPECT_EQ(make_backend(c, schema())->kind(), BackendKind::kEndpoint);
}

}  // namespace
}  // namespace kc::model
