#include "kc/model_client.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "kc/rng.hpp"
#include "kc/turtle.hpp"

namespace kc::model {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kEndpoint: return "endpoint";
    case BackendKind::kReplay: return "replay";
    case BackendKind::kOracle: return "oracle";
  }
  return "endpoint";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "endpoint") return BackendKind::kEndpoint;
  if (text == "replay") return BackendKind::kReplay;
  if (text == "oracle") return BackendKind::kOracle;
  throw std::invalid_argument("unknown backend '" + std::string(text) + "' (endpoint, replay or oracle)");
}

void OracleNoise::check() const {
  if (!(drop_rate >= 0 && drop_rate <= 1)) throw std::invalid_argument("drop_rate must be in [0,1]");
  if (!(spurious_rate >= 0 && spurious_rate <= 1)) throw std::invalid_argument("spurious_rate must be in [0,1]");
}

void ClientConfig::check() const {
  if (max_parallel < 1) throw std::invalid_argument("max_parallel must be at least 1");
  if (!(temperature >= 0)) throw std::invalid_argument("temperature must be non-negative");
  if (max_tokens < 0) throw std::invalid_argument("max_tokens must be non-negative");
  if (timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
  if (retry.max_attempts < 1) throw std::invalid_argument("retry.max_attempts must be at least 1");
  if (retry.backoff_base.count() < 0) throw std::invalid_argument("retry.backoff_base must be non-negative");
  noise.check();
}

HttpStatus::HttpStatus(int code, std::string body)
    : Error("endpoint returned HTTP " + std::to_string(code) + (body.empty() ? "" : ": " + body.substr(0, 200))),
      code_(code) {}

MissingRecording::MissingRecording(std::string sample_id)
    : Error("no recorded response for sample '" + sample_id + "'"), sample_id_(std::move(sample_id)) {}

EndpointBackend::EndpointBackend(ClientConfig config) : config_(std::move(config)) {
  config_.check();
  static const std::regex url(R"(^(https?://[^/?#]+)(/[^?#]*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(config_.endpoint_url, m, url))
    throw std::invalid_argument("endpoint url must look like http(s)://host[:port][/path], got '" +
                                config_.endpoint_url + "'");
  scheme_host_port_ = m[1];
  path_ = m[2];
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string EndpointBackend::complete(const Request& request, const std::string& system_prompt) const {
  json body = {
      {"model", config_.model_name},
      {"messages", json::array({{{"role", "system"}, {"content", system_prompt}},
                                {{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", config_.temperature},
  };
  if (config_.max_tokens > 0) body["max_tokens"] = config_.max_tokens;
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string failure;
  bool timed_out = false;
  for (int attempt = 0; attempt < config_.retry.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.retry.backoff_base * (1 << std::min(attempt - 1, 16)));
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    const auto start = Clock::now();
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      timed_out = err == httplib::Error::ConnectionTimeout ||
                  (err == httplib::Error::Read && Clock::now() - start >= config_.timeout);
      failure = httplib::to_string(err);
      continue;
    }
    if (res->status < 200 || res->status >= 300) throw HttpStatus(res->status, res->body);
    try {
      const json reply = json::parse(res->body);
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw MalformedEndpointResponse("choices[0].message.content is not a string");
      return content.get<std::string>();
    } catch (const json::exception& e) {
      throw MalformedEndpointResponse(std::string("unexpected endpoint payload: ") + e.what());
    }
  }
  const std::string where = scheme_host_port_ + path_ + " for sample '" + request.sample_id + "'";
  if (timed_out) throw Timeout("timed out after " + std::to_string(config_.timeout.count()) + " ms: " + where);
  throw TransportError(failure + ": " + where);
}

ReplayBackend ReplayBackend::from_file(const std::filesystem::path& path) { return ReplayBackend(read_recording(path)); }

std::string ReplayBackend::complete(const Request& request, const std::string&) const {
  const auto it = responses_.find(request.sample_id);
  if (it == responses_.end()) throw MissingRecording(request.sample_id);
  return it->second;
}

OracleBackend::OracleBackend(OracleNoise noise, const onto::OntologySchema& schema, rdf::CanonicalMode entities)
    : noise_(noise), schema_(&schema), entities_(entities) {
  noise_.check();
  for (const auto& [iri, def] : schema.object_properties()) properties_.push_back(iri);
  if (properties_.empty()) throw SchemaError("oracle needs a schema with at least one object property");
}

rdf::Graph OracleBackend::respond(const Request& request) const {
  const rdf::Graph gold = onto::canonicalize(request.gold, *schema_, entities_);
  SeededRng rng(derive_seed(noise_.seed, request.sample_id));
  rdf::Graph out;
  std::size_t fresh = 0;
  for (const auto& t : gold) {
    if (rng.bernoulli(noise_.drop_rate)) continue;
    out.insert(t);
    if (rng.bernoulli(noise_.spurious_rate)) {
      const auto& p = properties_[rng.below(properties_.size())];
      const std::string base = "urn:kc:oracle:spurious-" + std::to_string(fresh++);
      out.insert(rdf::Triple(rdf::Term::iri(base + "-s"), rdf::Term::iri(p), rdf::Term::iri(base + "-o")));
    }
  }
  return out;
}

std::string OracleBackend::complete(const Request& request, const std::string&) const {
  return rdf::serialize_turtle(respond(request), rdf::default_prefixes());
}

std::unique_ptr<Backend> make_backend(const ClientConfig& config, const onto::OntologySchema& schema) {
  config.check();
  switch (config.backend) {
    case BackendKind::kEndpoint: return std::make_unique<EndpointBackend>(config);
    case BackendKind::kReplay: return std::make_unique<ReplayBackend>(ReplayBackend::from_file(config.replay_path));
    case BackendKind::kOracle: return std::make_unique<OracleBackend>(config.noise, schema, config.oracle_entities);
  }
  throw std::invalid_argument("unknown backend");
}

namespace {

void run_one(const Backend& backend, const Request& request, const std::string& system_prompt,
             CompletionRecord& record) {
  const auto start = Clock::now();
  auto fail = [&](std::string_view kind, const std::exception& e) {
    record.error = e.what();
    record.error_kind = kind;
  };
  try {
    record.response_text = backend.complete(request, system_prompt);
  } catch (const Timeout& e) {
    fail("timeout", e);
  } catch (const TransportError& e) {
    fail("transport", e);
  } catch (const HttpStatus& e) {
    fail("http-status", e);
  } catch (const MissingRecording& e) {
    fail("missing-recording", e);
  } catch (const MalformedEndpointResponse& e) {
    fail("malformed-response", e);
  } catch (const std::exception& e) {
    fail("error", e);
  }
  record.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
}

}  // namespace

std::vector<CompletionRecord> batch_complete(const Backend& backend, const std::vector<Request>& requests,
                                             const std::string& system_prompt, int max_parallel) {
  if (max_parallel < 1) throw std::invalid_argument("max_parallel must be at least 1");
  std::vector<CompletionRecord> records(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    records[i].sample_id = requests[i].sample_id;
    records[i].prompt = requests[i].prompt;
    records[i].backend = backend.kind();
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < requests.size();)
      run_one(backend, requests[i], system_prompt, records[i]);
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_parallel), requests.size());
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  return records;
}

std::map<std::string, std::string> read_recording(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read recording " + path.string());
  std::map<std::string, std::string> responses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      auto id = j.at("sample_id").get<std::string>();
      if (!responses.emplace(id, j.at("response_text").get<std::string>()).second)
        throw IoError(where + ": duplicate recording for sample '" + id + "'");
    } catch (const json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
  }
  return responses;
}

void write_recording(const std::vector<CompletionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write recording " + path.string());
  for (const auto& r : records)
    if (r.ok()) out << json{{"sample_id", r.sample_id}, {"response_text", r.response_text}}.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace kc::model
