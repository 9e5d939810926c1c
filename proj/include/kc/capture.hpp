#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kc/error.hpp"
#include "kc/model_client.hpp"
#include "kc/ontology.hpp"
#include "kc/rdf.hpp"

namespace kc::capture {

enum class CaptureStatus { kCaptured, kEmpty, kRejected };

std::string_view to_string(CaptureStatus status);

struct CaptureResult {
  std::string source;  // sample id, or "prompt:<hash>" for ad-hoc prompts
  std::string prompt;
  std::string raw_response;
  std::optional<rdf::Graph> parsed;     // as written by the model; empty on a parse failure
  std::optional<rdf::Graph> canonical;  // name-keyed form of `parsed`
  std::string error;                    // parse or canonicalization failure
  onto::ValidationReport validation;
  std::optional<rdf::Graph> materialized;  // present iff captured
  CaptureStatus status = CaptureStatus::kRejected;

  // One human-readable line (or block) explaining the status.
  std::string diagnostic() const;
};

/// The pipeline after the model call: parse (default prefixes as base) →
/// name-keyed canonicalization → validate → materialize. Never throws on bad
/// input; every outcome is recorded in the result.
CaptureResult capture_text(std::string_view raw_response, const onto::OntologySchema& schema,
                           std::string source = {}, std::string prompt = {});

/// Asks the backend, then runs capture_text. Only backend failures
/// (transport, HTTP, missing recording) propagate as exceptions.
CaptureResult capture(const model::Request& request, const model::Backend& backend,
                      const std::string& system_prompt, const onto::OntologySchema& schema);

// Stable short hash used to name ad-hoc prompts.
std::string prompt_source(std::string_view prompt);

struct ProvenanceEntry {
  std::string source;
  std::string timestamp;  // ISO-8601 UTC
  bool asserted = true;   // false when the triple was inferred for this capture

  friend bool operator==(const ProvenanceEntry&, const ProvenanceEntry&) = default;
};

/// The personal knowledge graph. `graph` is always closed under the schema
/// rules; triples carrying at least one asserted provenance entry form the
/// base it is the closure of.
struct Store {
  rdf::Graph graph;
  std::map<rdf::Triple, std::vector<ProvenanceEntry>> provenance;

  rdf::Graph asserted() const;
  friend bool operator==(const Store& a, const Store& b) {
    return a.graph == b.graph && a.provenance == b.provenance;
  }
};

enum class MergePolicy { kRejectConflicts, kKeepExisting, kKeepNew };

std::string_view to_string(MergePolicy policy);
MergePolicy parse_merge_policy(std::string_view text);  // throws std::invalid_argument

struct MergeReport {
  std::size_t added = 0;       // incoming triples new to the store
  std::size_t duplicates = 0;  // incoming triples already present
  std::size_t dropped = 0;     // incoming triples discarded by keep-existing
  std::size_t removed = 0;     // store triples displaced by keep-new
  // Violations the plain union would have had (functional clashes mostly).
  std::vector<onto::Violation> conflicts;
};

class PolicyViolation : public Error {
 public:
  explicit PolicyViolation(MergeReport report);
  const MergeReport& report() const { return report_; }

 private:
  MergeReport report_;
};

struct MergeOptions {
  MergePolicy policy = MergePolicy::kRejectConflicts;
  std::string timestamp;  // empty = now
};

/// Adds a captured result to the store. Unnamed blank nodes are scoped to
/// their capture, so merging the same result twice is a no-op on the graph
/// while two different captures never share an anonymous node.
///
/// Conflicts are whatever violations the union would have. reject-conflicts
/// throws PolicyViolation and leaves the store untouched; keep-existing drops
/// incoming triples that would clash; keep-new drops the clashing store
/// triples instead. The store stays closed under the rules in every case.
/// Throws std::invalid_argument unless result.status is captured.
MergeReport merge(Store& store, const CaptureResult& result, const onto::OntologySchema& schema,
                  const MergeOptions& options = {});

std::filesystem::path provenance_path(const std::filesystem::path& store_path);

/// Canonical Turtle at `path` plus `<path>.provenance.jsonl`, each written to a
/// temporary file and renamed into place.
void save_store(const Store& store, const std::filesystem::path& path);

/// Reads both files back. A missing store file yields an empty store. Throws
/// onto::InvalidInput when the graph does not validate, IoError on unreadable
/// or inconsistent files.
Store load_store(const std::filesystem::path& path, const onto::OntologySchema& schema);

}  // namespace kc::capture
