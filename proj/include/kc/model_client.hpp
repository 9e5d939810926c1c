#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kc/error.hpp"
#include "kc/graph_ops.hpp"
#include "kc/ontology.hpp"
#include "kc/rdf.hpp"

namespace kc::model {

enum class BackendKind { kEndpoint, kReplay, kOracle };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view text);  // throws std::invalid_argument

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
};

/// Noise injected by the oracle backend. Each gold triple is dropped with
/// drop_rate; each surviving one additionally brings a spurious triple with
/// spurious_rate. So the expected recall is 1 - drop_rate and the expected
/// precision 1 / (1 + spurious_rate).
struct OracleNoise {
  double drop_rate = 0;
  double spurious_rate = 0;
  std::uint64_t seed = 0;

  void check() const;
};

struct ClientConfig {
  BackendKind backend = BackendKind::kEndpoint;
  std::string endpoint_url;
  std::string model_name = "Mistral-7B-Instruct-v0.2";
  double temperature = 0;
  int max_tokens = 0;  // 0 leaves it to the server
  int max_parallel = 4;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::string api_key_env = "KC_API_KEY";

  std::filesystem::path replay_path;

  OracleNoise noise;
  // Entity form of the oracle's output. Name-keyed output lets a dropped name
  // triple cost exactly one miss under name-keyed scoring, instead of
  // orphaning every triple that mentions the person.
  rdf::CanonicalMode oracle_entities = rdf::CanonicalMode::kNameKeyed;

  // Throws std::invalid_argument on out-of-range values.
  void check() const;
};

/// What a backend needs to answer one sample. `gold` is only read by the
/// oracle.
struct Request {
  std::string sample_id;
  std::string prompt;
  rdf::Graph gold;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class Timeout : public TransportError {
 public:
  using TransportError::TransportError;
};

class HttpStatus : public Error {
 public:
  HttpStatus(int code, std::string body);
  int code() const { return code_; }

 private:
  int code_;
};

class MissingRecording : public Error {
 public:
  explicit MissingRecording(std::string sample_id);
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

class MalformedEndpointResponse : public Error {
 public:
  using Error::Error;
};

/// Backends are shared across worker threads, so complete() must be safe to
/// call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const Request& request, const std::string& system_prompt) const = 0;
  virtual BackendKind kind() const = 0;
};

/// POSTs `{model, messages, temperature}` to `<endpoint_url>/chat/completions`
/// and returns choices[0].message.content. Transport failures are retried
/// with exponential backoff; HTTP errors and odd payloads are not.
class EndpointBackend : public Backend {
 public:
  explicit EndpointBackend(ClientConfig config);
  std::string complete(const Request& request, const std::string& system_prompt) const override;
  BackendKind kind() const override { return BackendKind::kEndpoint; }

 private:
  ClientConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
};

/// Recorded responses keyed by sample id.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(std::map<std::string, std::string> responses) : responses_(std::move(responses)) {}
  static ReplayBackend from_file(const std::filesystem::path& path);

  std::string complete(const Request& request, const std::string& system_prompt) const override;
  BackendKind kind() const override { return BackendKind::kReplay; }
  const std::map<std::string, std::string>& responses() const { return responses_; }

 private:
  std::map<std::string, std::string> responses_;
};

/// Answers with the gold graph itself, optionally degraded. The noise for a
/// sample depends only on (seed, sample id), never on call order.
class OracleBackend : public Backend {
 public:
  OracleBackend(OracleNoise noise, const onto::OntologySchema& schema,
                rdf::CanonicalMode entities = rdf::CanonicalMode::kNameKeyed);
  std::string complete(const Request& request, const std::string& system_prompt) const override;
  BackendKind kind() const override { return BackendKind::kOracle; }

  // The degraded graph complete() serializes.
  rdf::Graph respond(const Request& request) const;

 private:
  OracleNoise noise_;
  const onto::OntologySchema* schema_;
  rdf::CanonicalMode entities_;
  std::vector<std::string> properties_;
};

std::unique_ptr<Backend> make_backend(const ClientConfig& config, const onto::OntologySchema& schema);

struct CompletionRecord {
  std::string sample_id;
  std::string prompt;
  std::string response_text;
  std::chrono::milliseconds latency{0};
  BackendKind backend = BackendKind::kEndpoint;
  std::optional<std::string> error;  // set when the request failed
  std::string error_kind;            // e.g. "timeout", "http-status"

  bool ok() const { return !error; }
};

/// Runs every request with at most max_parallel in flight. Output order is
/// input order; per-request failures land in the record.
std::vector<CompletionRecord> batch_complete(const Backend& backend, const std::vector<Request>& requests,
                                             const std::string& system_prompt, int max_parallel);

// Replay file I/O: one {sample_id, response_text} object per line. Failed
// records are skipped when writing.
std::map<std::string, std::string> read_recording(const std::filesystem::path& path);
void write_recording(const std::vector<CompletionRecord>& records, const std::filesystem::path& path);

}  // namespace kc::model
