#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kc/error.hpp"
#include "kc/ontology.hpp"
#include "kc/rdf.hpp"

namespace kc::dataset {

enum class SampleKind { kOntology, kGeneric };

std::string_view to_string(SampleKind kind);

/// One user prompt and the triples a perfect capture would produce. Generic
/// (out-of-context) samples expect the empty graph and carry the `none` tag.
struct Sample {
  std::string id;
  std::string prompt;
  rdf::Graph expected;
  std::set<std::string> concepts;
  SampleKind kind = SampleKind::kOntology;
};

struct Corpus {
  std::vector<Sample> samples;
  // Schema concept tags in display order, `none` last. Kept so statistics on
  // an empty corpus still list every concept.
  std::vector<std::string> concept_tags;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const Sample* find(std::string_view id) const;
};

class CorpusError : public Error {
 public:
  struct Problem {
    std::string id;  // sample id, or "line N" when the id is unreadable
    std::string cause;
  };

  explicit CorpusError(std::vector<Problem> problems);
  const std::vector<Problem>& problems() const { return problems_; }

 private:
  std::vector<Problem> problems_;
};

/// Reads line-delimited {id, prompt, expected_turtle, kind} records. Every
/// expected graph is parsed with the default prefixes and validated (after
/// name-keyed canonicalization) against `schema`. All problems in the file are
/// collected into a single CorpusError.
Corpus load_corpus(const std::filesystem::path& path, const onto::OntologySchema& schema);
Corpus parse_corpus(std::istream& in, const onto::OntologySchema& schema);

/// Builds a corpus from in-memory samples, deriving concepts and enforcing
/// unique ids and prompts.
Corpus make_corpus(std::vector<Sample> samples, const onto::OntologySchema& schema);

// Writes the corpus back in the same record format, expected graphs in
// canonical Turtle.
void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Occurrences per concept, counted once per (sample, concept) pair.
struct ConceptHistogram {
  std::vector<std::pair<std::string, std::size_t>> counts;  // display order

  std::size_t get(std::string_view tag) const;
  std::size_t total() const;
  nlohmann::ordered_json to_json() const;
};

ConceptHistogram corpus_stats(const Corpus& corpus);

struct SplitSpec {
  std::uint64_t seed = 0;
  std::size_t test_count = 0;
  std::size_t validation_count = 0;
};

struct Split {
  Corpus train;
  Corpus validation;
  Corpus test;
};

class InfeasibleSplit : public Error {
 public:
  using Error::Error;
};

/// Seeded shuffle, then the first test_count ids go to test and the next
/// validation_count to validation. Each part keeps corpus order.
/// Requires test_count + validation_count < corpus size.
Split split(const Corpus& corpus, const SplitSpec& spec);

class InsufficientSamples : public Error {
 public:
  InsufficientSamples(std::string concept_tag, std::size_t have, std::size_t need);
  const std::string& concept_tag() const { return concept_; }
  std::size_t have() const { return have_; }
  std::size_t need() const { return need_; }

 private:
  std::string concept_;
  std::size_t have_;
  std::size_t need_;
};

// The nine relation concepts varied in the samples-per-concept sweep.
const std::vector<std::string>& swept_concepts();

/// Greedy seeded cover: for each concept in order, draw random unselected
/// samples carrying it until at least k selected samples carry it. A sample
/// counts toward every concept it carries. Generic samples are appended
/// unless include_generic is false. Output keeps corpus order.
Corpus select_k_per_concept(const Corpus& corpus, std::size_t k, const std::vector<std::string>& concepts,
                            std::uint64_t seed, bool include_generic = true);

struct AdapterHyperparameters {
  std::vector<std::string> layer_keys{"self_attn.q_proj", "self_attn.v_proj"};
  int rank = 8;
  double alpha = 16;
  double scale = 10;
  std::string optimizer = "adam";
  double learning_rate = 1e-5;
  int num_layers = 16;
  int minibatch_size = 4;
};

/// Everything an external QLoRA run needs to reproduce a fine-tuning session.
/// Training itself happens outside this toolkit.
struct TrainingManifest {
  int samples_per_concept = 8;
  int epochs = 18;
  AdapterHyperparameters adapter;
  std::vector<std::pair<std::string, std::string>> dataset_files;  // role -> path
  std::string system_prompt;

  // Throws std::invalid_argument on non-positive hyperparameters.
  void check() const;
  nlohmann::json to_json() const;
  static TrainingManifest from_json(const nlohmann::json& j);
};

const std::string& default_system_prompt();

struct ExportOptions {
  bool force = false;
};

/// One chat record per sample: system prompt, user prompt, canonical Turtle of
/// the expected graph (empty for generic samples). Also writes
/// `<out>.manifest.json`. Refuses to replace existing files unless forced.
/// Returns the number of records written.
std::size_t export_chat_jsonl(const Corpus& corpus, const TrainingManifest& manifest,
                              const std::filesystem::path& out, const ExportOptions& options = {});

struct ChatRecord {
  std::string system;
  std::string user;
  std::string assistant;
};

std::vector<ChatRecord> read_chat_jsonl(const std::filesystem::path& path);

}  // namespace kc::dataset
