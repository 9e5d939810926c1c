#include "kc/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "kc/bundled_data.hpp"
#include "kc/graph_ops.hpp"
#include "kc/rng.hpp"
#include "kc/turtle.hpp"

namespace kc::dataset {

using nlohmann::json;

std::string_view to_string(SampleKind kind) { return kind == SampleKind::kGeneric ? "generic" : "ontology"; }

const Sample* Corpus::find(std::string_view id) const {
  for (const auto& s : samples)
    if (s.id == id) return &s;
  return nullptr;
}

namespace {

std::string describe(const std::vector<CorpusError::Problem>& problems) {
  std::string msg = "corpus has " + std::to_string(problems.size()) + " problem(s)";
  for (const auto& p : problems) msg += "\n  " + p.id + ": " + p.cause;
  return msg;
}

std::vector<std::string> tags_for(const onto::OntologySchema& schema) {
  auto tags = schema.concept_tags();
  tags.emplace_back(onto::kNoConcept);
  return tags;
}

// Derives concepts and checks the per-sample invariants. Returns the cause of
// the first failure, or an empty string.
std::string check_sample(Sample& sample, const onto::OntologySchema& schema) {
  if (sample.id.empty()) return "empty id";
  if (sample.prompt.empty()) return "empty prompt";
  sample.concepts.clear();
  if (sample.kind == SampleKind::kGeneric) {
    if (!sample.expected.empty()) return "generic sample with non-empty expected graph";
    sample.concepts.insert(std::string(onto::kNoConcept));
    return {};
  }
  if (sample.expected.empty()) return "ontology sample with empty expected graph";
  rdf::Graph keyed;
  try {
    keyed = onto::canonicalize(sample.expected, schema, rdf::CanonicalMode::kNameKeyed);
  } catch (const AmbiguousName& e) {
    return e.what();
  }
  const auto report = onto::validate(keyed, schema);
  if (!report.ok()) return report.summary();
  for (const auto& t : sample.expected) {
    auto tag = onto::concept_of(t, schema);
    if (tag != onto::kNoConcept) sample.concepts.insert(std::move(tag));
  }
  return {};
}

Corpus assemble(std::vector<Sample> samples, const onto::OntologySchema& schema,
                std::vector<CorpusError::Problem> problems) {
  std::set<std::string> ids;
  std::set<std::string> prompts;
  for (auto& s : samples) {
    if (!ids.insert(s.id).second) problems.push_back({s.id, "duplicate id"});
    if (!prompts.insert(s.prompt).second) problems.push_back({s.id, "duplicate prompt"});
    if (auto cause = check_sample(s, schema); !cause.empty()) problems.push_back({s.id, std::move(cause)});
  }
  if (!problems.empty()) throw CorpusError(std::move(problems));
  return Corpus{std::move(samples), tags_for(schema)};
}

Corpus subset(const Corpus& corpus, const std::vector<bool>& keep) {
  Corpus out{{}, corpus.concept_tags};
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (keep[i]) out.samples.push_back(corpus.samples[i]);
  return out;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_for_write(const std::filesystem::path& path, bool force) {
  // "x" makes creation exclusive, so a concurrent writer cannot be clobbered.
  File f(std::fopen(path.c_str(), force ? "w" : "wx"));
  if (!f) throw IoError("cannot create " + path.string() + (force ? "" : " (exists? use --force)"));
  return f;
}

void write_all(std::FILE* f, const std::string& text, const std::filesystem::path& path) {
  if (std::fwrite(text.data(), 1, text.size(), f) != text.size()) throw IoError("write failed: " + path.string());
}

}  // namespace

CorpusError::CorpusError(std::vector<Problem> problems) : Error(describe(problems)), problems_(std::move(problems)) {}

Corpus parse_corpus(std::istream& in, const onto::OntologySchema& schema) {
  std::vector<Sample> samples;
  std::vector<CorpusError::Problem> problems;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = "line " + std::to_string(line_no);
    try {
      const json record = json::parse(line);
      if (record.contains("id") && record["id"].is_string()) where = record["id"].get<std::string>();
      Sample s;
      s.id = record.at("id").get<std::string>();
      s.prompt = record.at("prompt").get<std::string>();
      const auto kind = record.at("kind").get<std::string>();
      if (kind == "generic") {
        s.kind = SampleKind::kGeneric;
      } else if (kind != "ontology") {
        problems.push_back({where, "unknown kind '" + kind + "'"});
        continue;
      }
      s.expected = rdf::parse_turtle(record.at("expected_turtle").get<std::string>(), rdf::default_prefixes());
      samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      problems.push_back({where, std::string("bad record: ") + e.what()});
    } catch (const Error& e) {
      problems.push_back({where, e.what()});
    }
  }
  return assemble(std::move(samples), schema, std::move(problems));
}

Corpus load_corpus(const std::filesystem::path& path, const onto::OntologySchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  return parse_corpus(in, schema);
}

Corpus make_corpus(std::vector<Sample> samples, const onto::OntologySchema& schema) {
  return assemble(std::move(samples), schema, {});
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus.samples) {
    json record;
    record["id"] = s.id;
    record["prompt"] = s.prompt;
    record["expected_turtle"] = rdf::serialize_turtle(s.expected, rdf::default_prefixes());
    record["kind"] = to_string(s.kind);
    out << record.dump() << '\n';
  }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_corpus(corpus, out);
  if (!out) throw IoError("write failed: " + path.string());
}

std::size_t ConceptHistogram::get(std::string_view tag) const {
  for (const auto& [t, n] : counts)
    if (t == tag) return n;
  return 0;
}

std::size_t ConceptHistogram::total() const {
  std::size_t sum = 0;
  for (const auto& entry : counts) sum += entry.second;
  return sum;
}

nlohmann::ordered_json ConceptHistogram::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [t, n] : counts) j[t] = n;
  return j;
}

ConceptHistogram corpus_stats(const Corpus& corpus) {
  std::map<std::string, std::size_t> tally;
  for (const auto& s : corpus.samples)
    for (const auto& c : s.concepts) ++tally[c];
  ConceptHistogram h;
  for (const auto& tag : corpus.concept_tags) {
    h.counts.emplace_back(tag, tally[tag]);
    tally.erase(tag);
  }
  // Tags outside the schema list (a corpus built against another schema).
  for (const auto& [tag, n] : tally) h.counts.emplace_back(tag, n);
  return h;
}

Split split(const Corpus& corpus, const SplitSpec& spec) {
  const std::size_t n = corpus.size();
  if (spec.test_count >= n || spec.validation_count >= n - spec.test_count)
    throw InfeasibleSplit("test_count + validation_count (" + std::to_string(spec.test_count) + " + " +
                          std::to_string(spec.validation_count) + ") must be below the corpus size " +
                          std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(spec.seed);
  rng.shuffle(order);

  std::vector<bool> in_test(n, false), in_validation(n, false), in_train(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < spec.test_count)
      in_test[order[i]] = true;
    else if (i < spec.test_count + spec.validation_count)
      in_validation[order[i]] = true;
    else
      in_train[order[i]] = true;
  }
  return Split{subset(corpus, in_train), subset(corpus, in_validation), subset(corpus, in_test)};
}

InsufficientSamples::InsufficientSamples(std::string concept_tag, std::size_t have, std::size_t need)
    : Error("concept '" + concept_tag + "' has " + std::to_string(have) + " sample(s), " + std::to_string(need) +
            " needed"),
      concept_(std::move(concept_tag)),
      have_(have),
      need_(need) {}

const std::vector<std::string>& swept_concepts() {
  static const std::vector<std::string> tags = {"child",   "father",  "mother",  "sibling", "sister",
                                                "brother", "spouse", "partner", "knows"};
  return tags;
}

Corpus select_k_per_concept(const Corpus& corpus, std::size_t k, const std::vector<std::string>& concepts,
                            std::uint64_t seed, bool include_generic) {
  const std::size_t n = corpus.size();
  std::vector<bool> chosen(n, false);
  SeededRng rng(seed);
  for (const auto& c : concepts) {
    std::size_t have = 0;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
      if (!corpus.samples[i].concepts.contains(c)) continue;
      if (chosen[i])
        ++have;
      else
        candidates.push_back(i);
    }
    if (have + candidates.size() < k) throw InsufficientSamples(c, have + candidates.size(), k);
    rng.shuffle(candidates);
    for (std::size_t j = 0; have < k; ++j, ++have) chosen[candidates[j]] = true;
  }
  if (include_generic)
    for (std::size_t i = 0; i < n; ++i)
      if (corpus.samples[i].kind == SampleKind::kGeneric) chosen[i] = true;
  return subset(corpus, chosen);
}

void TrainingManifest::check() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  positive(samples_per_concept, "samples_per_concept");
  positive(epochs, "epochs");
  positive(adapter.rank, "rank");
  positive(adapter.alpha, "alpha");
  positive(adapter.scale, "scale");
  positive(adapter.learning_rate, "learning_rate");
  positive(adapter.num_layers, "num_layers");
  positive(adapter.minibatch_size, "minibatch_size");
  if (adapter.layer_keys.empty()) throw std::invalid_argument("layer_keys must not be empty");
  if (adapter.optimizer.empty()) throw std::invalid_argument("optimizer must be named");
}

json TrainingManifest::to_json() const {
  json files = json::object();
  for (const auto& [role, path] : dataset_files) files[role] = path;
  return json{
      {"samples_per_concept", samples_per_concept},
      {"epochs", epochs},
      {"adapter",
       {{"layer_keys", adapter.layer_keys},
        {"rank", adapter.rank},
        {"alpha", adapter.alpha},
        {"scale", adapter.scale},
        {"optimizer", adapter.optimizer},
        {"learning_rate", adapter.learning_rate},
        {"num_layers", adapter.num_layers},
        {"minibatch_size", adapter.minibatch_size}}},
      {"dataset_files", files},
      {"system_prompt", system_prompt},
  };
}

TrainingManifest TrainingManifest::from_json(const json& j) {
  TrainingManifest m;
  m.samples_per_concept = j.value("samples_per_concept", m.samples_per_concept);
  m.epochs = j.value("epochs", m.epochs);
  if (j.contains("adapter")) {
    const auto& a = j.at("adapter");
    m.adapter.layer_keys = a.value("layer_keys", m.adapter.layer_keys);
    m.adapter.rank = a.value("rank", m.adapter.rank);
    m.adapter.alpha = a.value("alpha", m.adapter.alpha);
    m.adapter.scale = a.value("scale", m.adapter.scale);
    m.adapter.optimizer = a.value("optimizer", m.adapter.optimizer);
    m.adapter.learning_rate = a.value("learning_rate", m.adapter.learning_rate);
    m.adapter.num_layers = a.value("num_layers", m.adapter.num_layers);
    m.adapter.minibatch_size = a.value("minibatch_size", m.adapter.minibatch_size);
  }
  if (j.contains("dataset_files"))
    for (const auto& [role, path] : j.at("dataset_files").items()) m.dataset_files.emplace_back(role, path);
  m.system_prompt = j.value("system_prompt", m.system_prompt);
  m.check();
  return m;
}

const std::string& default_system_prompt() {
  static const std::string prompt(bundled::kSystemPrompt);
  return prompt;
}

std::size_t export_chat_jsonl(const Corpus& corpus, const TrainingManifest& manifest,
                              const std::filesystem::path& out, const ExportOptions& options) {
  manifest.check();
  const std::filesystem::path manifest_path = out.string() + ".manifest.json";
  if (!options.force)
    for (const auto& p : {out, manifest_path})
      if (std::filesystem::exists(p)) throw IoError(p.string() + " exists; use --force to overwrite");

  const std::string& system = manifest.system_prompt.empty() ? default_system_prompt() : manifest.system_prompt;
  std::string body;
  for (const auto& s : corpus.samples) {
    const json record = {
        {"messages",
         json::array({
             {{"role", "system"}, {"content", system}},
             {{"role", "user"}, {"content", s.prompt}},
             {{"role", "assistant"}, {"content", rdf::serialize_turtle(s.expected, rdf::default_prefixes())}},
         })}};
    body += record.dump();
    body += '\n';
  }

  {
    File f = open_for_write(out, options.force);
    write_all(f.get(), body, out);
  }
  TrainingManifest recorded = manifest;
  recorded.system_prompt = system;
  File f = open_for_write(manifest_path, options.force);
  write_all(f.get(), recorded.to_json().dump(2) + "\n", manifest_path);
  return corpus.size();
}

std::vector<ChatRecord> read_chat_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ChatRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ChatRecord r;
      for (const auto& m : j.at("messages")) {
        const auto role = m.at("role").get<std::string>();
        auto content = m.at("content").get<std::string>();
        if (role == "system")
          r.system = std::move(content);
        else if (role == "user")
          r.user = std::move(content);
        else if (role == "assistant")
          r.assistant = std::move(content);
      }
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace kc::dataset
