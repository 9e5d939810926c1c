#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kc/dataset.hpp"
#include "kc/error.hpp"
#include "kc/model_client.hpp"
#include "kc/ontology.hpp"
#include "kc/rdf.hpp"

namespace kc::eval {

/// name-keyed: people are identified by their names (see rdf::canonicalize).
/// isomorphism: no name keying; blank nodes of the prediction are aligned to
/// the gold graph by the mapping that matches the most triples.
enum class CompareMode { kNameKeyed, kIsomorphism };

std::string_view to_string(CompareMode mode);
CompareMode parse_compare_mode(std::string_view text);  // "name-keyed", "iso" or "isomorphism"

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

/// precision = tp / (tp + fp), or when nothing was predicted 1 if nothing was
/// missed and 0 otherwise. Recall mirrors it. f1 is 0 when p + r is 0.
struct Metrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  static Metrics from_counts(const Counts& c);
};

struct SampleScore {
  std::string sample_id;
  Counts counts;
  std::map<std::string, Counts> per_concept;
  bool parse_failed = false;
  std::string error;  // why parsing (or the model call) failed
};

/// Scores one response against its gold graph. Literals are compared after
/// trimming surrounding whitespace. A response that does not parse (or names
/// two people identically in name-keyed mode) scores as a total miss. Never
/// throws.
SampleScore score_sample(std::string_view response_text, const rdf::Graph& gold, const onto::OntologySchema& schema,
                         CompareMode mode, std::string sample_id = {});

// Same, for a failure before any response existed.
SampleScore failed_sample(const rdf::Graph& gold, const onto::OntologySchema& schema, std::string sample_id,
                          std::string error);

class EmptyInput : public Error {
 public:
  using Error::Error;
};

struct EvalReport {
  std::string label;
  Counts totals;
  Metrics micro;
  // Unweighted mean over concepts that occur on either side.
  std::optional<Metrics> macro;
  std::map<std::string, Counts> per_concept_counts;
  std::map<std::string, Metrics> per_concept;
  std::vector<SampleScore> samples;
  std::size_t parse_failures = 0;
  // Echo of how the report was produced.
  CompareMode mode = CompareMode::kNameKeyed;
  std::string schema_hash;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::ordered_json to_json() const;
};

struct AggregateOptions {
  bool macro = false;
};

/// Micro-averages: counts are summed over samples, then the Metrics formulas
/// applied once. Throws EmptyInput on an empty list.
EvalReport aggregate(const std::vector<SampleScore>& scores, const AggregateOptions& options = {});

enum class FailMode { kAbort, kScoreZero };

std::string_view to_string(FailMode mode);
FailMode parse_fail_mode(std::string_view text);

struct EvalOptions {
  std::string label;
  CompareMode mode = CompareMode::kNameKeyed;
  FailMode fail_mode = FailMode::kAbort;
  bool macro = false;
  std::string system_prompt;  // empty = the bundled default
  int max_parallel = 4;
};

class SampleFailed : public Error {
 public:
  SampleFailed(std::string sample_id, std::string kind, const std::string& message);
  const std::string& sample_id() const { return sample_id_; }
  const std::string& kind() const { return kind_; }

 private:
  std::string sample_id_;
  std::string kind_;
};

/// batch_complete over the corpus, then score_sample and aggregate. A missing
/// recording always aborts; other per-sample failures abort or score as
/// total misses depending on fail_mode.
EvalReport run_eval(const dataset::Corpus& test, const model::Backend& backend, const onto::OntologySchema& schema,
                    const EvalOptions& options);

/// Builds the backend from `config`. The oracle is told to emit entities in
/// the form the comparison mode scores.
EvalReport run_eval(const dataset::Corpus& test, const model::ClientConfig& config,
                    const onto::OntologySchema& schema, const EvalOptions& options);

struct SweepRun {
  std::string label;
  model::ClientConfig client;
};

/// JSON form:
///   { "test_corpus": "test.jsonl",
///     "split": {"seed": 7, "test_count": 12},          (optional)
///     "mode": "name-keyed", "fail_mode": "abort", "max_parallel": 4,
///     "runs": [ {"label": "k=2", "backend": "oracle",
///                "noise": {"drop_rate": 0.5, "spurious_rate": 0, "seed": 1}},
///               {"label": "k=8", "backend": "replay", "responses": "k8.jsonl"},
///               {"label": "live", "backend": "endpoint", "endpoint_url": "http://...",
///                "model": "...", "timeout_ms": 60000} ] }
/// Relative paths resolve against `base_dir`.
struct SweepManifest {
  std::filesystem::path test_corpus;
  std::optional<dataset::SplitSpec> split;
  CompareMode mode = CompareMode::kNameKeyed;
  FailMode fail_mode = FailMode::kAbort;
  int max_parallel = 4;
  std::string system_prompt;
  std::vector<SweepRun> runs;

  static SweepManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static SweepManifest load(const std::filesystem::path& path);
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

struct SweepEntry {
  std::string label;
  std::optional<EvalReport> report;
  std::string error;  // set when the run failed
};

/// One entry per run, in manifest order. A failing run is recorded and the
/// sweep moves on.
std::vector<SweepEntry> sweep(const SweepManifest& manifest, const onto::OntologySchema& schema);

// label,precision,recall,f1,tp,fp,fn with a header row. Failed runs keep
// their label and leave the other fields empty.
void write_csv(const std::vector<SweepEntry>& entries, std::ostream& out);

/// Grouped bar chart: one group per label, bars for P, R and F1 on a fixed
/// [0,1] axis.
std::string render_svg(const std::vector<SweepEntry>& entries);

}  // namespace kc::eval
