#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kc/capture.hpp"
#include "kc/dataset.hpp"
#include "kc/evaluation.hpp"
#include "kc/model_client.hpp"
#include "kc/ontology.hpp"
#include "kc/turtle.hpp"

namespace kc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Bad flag combinations detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Prefixes a domain error with the file it came from.
class FileError : public Error {
 public:
  FileError(const fs::path& path, const std::exception& e)
      : Error(std::string(e.what()).find(path.string()) == std::string::npos ? path.string() + ": " + e.what()
                                                                             : std::string(e.what())) {}
};

template <class F>
auto at_file(const fs::path& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FileError&) {
    throw;
  } catch (const Error& e) {
    throw FileError(path, e);
  } catch (const json::exception& e) {
    throw FileError(path, e);
  }
}

// Settings shared by all subcommands: built-in defaults, then kc.json, then
// flags.
struct GlobalConfig {
  fs::path workdir = ".";
  fs::path config_file;  // empty when none was found
  fs::path schema;       // empty = bundled
  rdf::PrefixMap prefixes = rdf::default_prefixes();
  fs::path corpus;
  std::string endpoint_url;
  std::string model = model::ClientConfig{}.model_name;
  std::string api_key_env = model::ClientConfig{}.api_key_env;
  int timeout_ms = 60000;
  int max_parallel = 4;
  fs::path out_dir = ".";
  int verbosity = 0;

  json to_json() const {
    return {{"workdir", workdir.string()},
            {"config_file", config_file.string()},
            {"schema", schema.empty() ? "(bundled)" : schema.string()},
            {"prefixes", prefixes},
            {"corpus", corpus.string()},
            {"endpoint_url", endpoint_url},
            {"model", model},
            {"api_key_env", api_key_env},
            {"timeout_ms", timeout_ms},
            {"max_parallel", max_parallel},
            {"out_dir", out_dir.string()},
            {"verbosity", verbosity}};
  }
};

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  void print(std::ostream& out) const {
    std::vector<std::size_t> width(header_.size(), 0);
    auto measure = [&](const std::vector<std::string>& row) {
      for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], row[i].size());
    };
    measure(header_);
    for (const auto& r : rows_) measure(r);
    auto line = [&](const std::vector<std::string>& row) {
      std::string s;
      for (std::size_t i = 0; i < row.size(); ++i) {
        s += row[i];
        if (i + 1 < row.size()) s += std::string(width[i] - row[i].size() + 2, ' ');
      }
      out << s << '\n';
    };
    line(header_);
    std::vector<std::string> rule;
    for (auto w : width) rule.emplace_back(w, '-');
    line(rule);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const ordered_json& j) { write_file(path, j.dump(2) + "\n"); }

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json violations_json(const onto::ValidationReport& report) {
  ordered_json arr = ordered_json::array();
  for (const auto& v : report.violations) {
    ordered_json triples = ordered_json::array();
    for (const auto& t : v.triples) triples.push_back(rdf::to_ntriples(t));
    arr.push_back({{"kind", onto::to_string(v.kind)}, {"message", v.message}, {"triples", triples}});
  }
  return arr;
}

void print_violations(const onto::ValidationReport& report, std::ostream& out) {
  Table t({"kind", "message"});
  for (const auto& v : report.violations) t.add({std::string(onto::to_string(v.kind)), v.message});
  t.print(out);
}

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv);

 private:
  void define_global(CLI::App& app);
  void define_graph_commands(CLI::App& app);
  void define_dataset(CLI::App& app);
  void define_capture(CLI::App& app);
  void define_eval(CLI::App& app);
  void define_sweep(CLI::App& app);
  void define_store(CLI::App& app);

  void resolve_global();
  fs::path path(const fs::path& p) const { return p.empty() || p.is_absolute() ? p : g_.workdir / p; }
  void log(const std::string& msg) const {
    if (g_.verbosity > 0) err_ << "kc: " << msg << '\n';
  }
  const onto::OntologySchema& schema();
  rdf::Graph read_graph(const fs::path& file);
  dataset::Corpus corpus(const std::string& flag_value);
  std::string system_prompt(const std::string& file);
  int finish_capture(const capture::CaptureResult& result, const fs::path& store_path, const std::string& policy,
                     const std::string& timestamp);

  int cmd_parse();
  int cmd_validate();
  int cmd_materialize();
  int cmd_stats();
  int cmd_split();
  int cmd_select();
  int cmd_export();
  int cmd_capture();
  int cmd_eval();
  int cmd_sweep();
  int cmd_show();
  int cmd_merge();

  std::ostream& out_;
  std::ostream& err_;
  std::function<int()> action_;
  GlobalConfig g_;
  std::optional<onto::OntologySchema> schema_;

  // Raw global flags; applied over kc.json in resolve_global().
  struct {
    std::string workdir = ".";
    std::string config;
    std::string schema;
    std::string out_dir;
    int verbosity = 0;
  } flags_;

  // Per-subcommand flags.
  std::string input_, output_, report_;
  bool ntriples_ = false;
  bool name_keyed_ = false;

  std::string corpus_;
  std::string json_out_;
  std::uint64_t seed_ = 0;
  std::size_t test_count_ = 0;
  std::size_t validation_count_ = 0;
  std::size_t k_ = 0;
  std::vector<std::string> concepts_;
  bool no_generic_ = false;
  std::optional<int> epochs_;
  std::string system_prompt_file_;
  bool force_ = false;

  std::string store_, prompt_, id_, record_, policy_ = "reject-conflicts", timestamp_;
  std::string endpoint_, responses_, response_file_, gold_;
  bool oracle_ = false;
  double drop_rate_ = 0, spurious_rate_ = 0;
  std::uint64_t noise_seed_ = 0;

  std::string mode_ = "name-keyed", fail_mode_ = "abort", label_;
  bool macro_ = false;
  std::optional<std::uint64_t> split_seed_;
  std::optional<std::size_t> eval_test_count_;

  std::string manifest_, csv_, svg_;
  bool turtle_ = false;
};

void Cli::define_global(CLI::App& app) {
  app.add_option("--workdir", flags_.workdir, "Directory relative paths are resolved against")
      ->capture_default_str();
  app.add_option("--config", flags_.config, "JSON config file (default: <workdir>/kc.json when present)");
  app.add_option("--schema", flags_.schema, "Ontology schema in Turtle (default: bundled family schema)");
  app.add_option("--out-dir", flags_.out_dir, "Directory for derived output files");
  app.add_flag("-v,--verbose", flags_.verbosity, "Log progress to stderr (repeat for more)");
}

void Cli::define_graph_commands(CLI::App& app) {
  auto* parse = app.add_subcommand("parse", "Parse a Turtle file and print it in canonical form");
  parse->add_option("file", input_, "Turtle file")->required();
  parse->add_option("-o,--out", output_, "Write here instead of stdout");
  parse->add_flag("--ntriples", ntriples_, "Emit N-Triples instead of Turtle");
  parse->add_flag("--name-keyed", name_keyed_, "Key people by their names first");
  parse->callback([this] { action_ = [this] { return cmd_parse(); }; });

  auto* validate = app.add_subcommand("validate", "Check a Turtle file against the schema");
  validate->add_option("file", input_, "Turtle file")->required();
  validate->add_option("--report", report_, "Write a JSON report here");
  validate->add_flag("--name-keyed", name_keyed_, "Key people by their names first");
  validate->callback([this] { action_ = [this] { return cmd_validate(); }; });

  auto* mat = app.add_subcommand("materialize", "Print the closure of a valid graph under the schema rules");
  mat->add_option("file", input_, "Turtle file")->required();
  mat->add_option("-o,--out", output_, "Write here instead of stdout");
  mat->add_flag("--name-keyed", name_keyed_, "Key people by their names first");
  mat->callback([this] { action_ = [this] { return cmd_materialize(); }; });
}

void Cli::define_dataset(CLI::App& app) {
  auto* ds = app.add_subcommand("dataset", "Corpus statistics, splits, per-concept selection and export");
  ds->require_subcommand(1);
  auto corpus_opt = [this](CLI::App* sub) {
    sub->add_option("--corpus", corpus_, "Corpus .jsonl (default: corpus from kc.json)");
  };

  auto* stats = ds->add_subcommand("stats", "Concept histogram of a corpus");
  corpus_opt(stats);
  stats->add_option("--json", json_out_, "Write the histogram as JSON here");
  stats->callback([this] { action_ = [this] { return cmd_stats(); }; });

  auto* split = ds->add_subcommand("split", "Seeded train/validation/test split");
  corpus_opt(split);
  split->add_option("--seed", seed_, "Shuffle seed")->capture_default_str();
  split->add_option("--test-count", test_count_, "Samples held out for testing")->required();
  split->add_option("--validation-count", validation_count_, "Samples held out for validation")
      ->capture_default_str();
  split->callback([this] { action_ = [this] { return cmd_split(); }; });

  auto* select = ds->add_subcommand("select", "Pick at least k training samples per concept");
  corpus_opt(select);
  select->add_option("--k", k_, "Samples per concept")->required();
  select->add_option("--seed", seed_, "Selection seed")->capture_default_str();
  select->add_option("--concepts", concepts_, "Concept tags to cover (default: the nine relation concepts)")
      ->delimiter(',');
  select->add_flag("--no-generic", no_generic_, "Leave out-of-context samples out");
  select->add_option("-o,--out", output_, "Output corpus .jsonl")->required();
  select->add_option("--json", json_out_, "Write per-concept counts as JSON here");
  select->callback([this] { action_ = [this] { return cmd_select(); }; });

  auto* exp = ds->add_subcommand("export", "Write a chat-format fine-tuning file plus its manifest");
  corpus_opt(exp);
  exp->add_option("-o,--out", output_, "Output .jsonl")->required();
  exp->add_option("--k", k_, "Samples per concept recorded in the manifest");
  exp->add_option("--epochs", epochs_, "Epochs recorded in the manifest");
  exp->add_option("--system-prompt-file", system_prompt_file_, "System prompt (default: bundled)");
  exp->add_flag("--force", force_, "Overwrite existing files");
  exp->callback([this] { action_ = [this] { return cmd_export(); }; });
}

void add_backend_flags(CLI::App* sub, std::string& endpoint, std::string& responses, bool& oracle) {
  sub->add_option("--endpoint", endpoint, "Chat-completions base URL (e.g. http://host:8000/v1)");
  sub->add_option("--responses", responses, "Recorded responses .jsonl (sample_id, response_text)");
  sub->add_flag("--oracle", oracle, "Answer from the gold graph, with optional noise");
}

void Cli::define_capture(CLI::App& app) {
  auto* cap = app.add_subcommand("capture", "Capture the facts of one prompt into a store");
  cap->add_option("--store", store_, "Store file (canonical Turtle)")->required();
  cap->add_option("--prompt", prompt_, "User prompt")->required();
  cap->add_option("--id", id_, "Source id (default: hash of the prompt)");
  add_backend_flags(cap, endpoint_, responses_, oracle_);
  cap->add_option("--gold", gold_, "Expected Turtle, needed by --oracle");
  cap->add_option("--response-file", response_file_, "Use this file as the model response");
  cap->add_option("--record", record_, "Append the model response to this recording");
  cap->add_option("--policy", policy_, "Conflict policy")
      ->check(CLI::IsMember({"reject-conflicts", "keep-existing", "keep-new"}))
      ->capture_default_str();
  cap->add_option("--timestamp", timestamp_, "Provenance timestamp (default: now)");
  cap->add_option("--system-prompt-file", system_prompt_file_, "System prompt (default: bundled)");
  cap->callback([this] { action_ = [this] { return cmd_capture(); }; });
}

void Cli::define_eval(CLI::App& app) {
  auto* ev = app.add_subcommand("eval", "Score a backend against a test corpus");
  ev->add_option("--test", corpus_, "Test corpus .jsonl (default: corpus from kc.json)");
  ev->add_option("--split-seed", split_seed_, "Evaluate only the test part of a split with this seed");
  ev->add_option("--test-count", eval_test_count_, "Test part size when --split-seed is given");
  add_backend_flags(ev, endpoint_, responses_, oracle_);
  ev->add_option("--drop-rate", drop_rate_, "Oracle: chance to drop each gold triple")->capture_default_str();
  ev->add_option("--spurious-rate", spurious_rate_, "Oracle: chance to add a spurious triple per kept one")
      ->capture_default_str();
  ev->add_option("--noise-seed", noise_seed_, "Oracle noise seed")->capture_default_str();
  ev->add_option("--mode", mode_, "Entity matching")
      ->check(CLI::IsMember({"name-keyed", "iso", "isomorphism"}))
      ->capture_default_str();
  ev->add_option("--fail-mode", fail_mode_, "What a failed model call does")
      ->check(CLI::IsMember({"abort", "score-zero"}))
      ->capture_default_str();
  ev->add_flag("--macro", macro_, "Also report macro averages over concepts");
  ev->add_option("--label", label_, "Label stored in the report");
  ev->add_option("-o,--out", output_, "Write the JSON report here");
  ev->add_option("--system-prompt-file", system_prompt_file_, "System prompt (default: bundled)");
  ev->callback([this] { action_ = [this] { return cmd_eval(); }; });
}

void Cli::define_sweep(CLI::App& app) {
  auto* sw = app.add_subcommand("sweep", "Run every labelled configuration of a sweep manifest");
  sw->add_option("--manifest", manifest_, "Sweep manifest JSON")->required();
  sw->add_option("--csv", csv_, "CSV output")->required();
  sw->add_option("--svg", svg_, "SVG bar chart output");
  sw->add_option("--json", json_out_, "All reports as one JSON file");
  sw->callback([this] { action_ = [this] { return cmd_sweep(); }; });
}

void Cli::define_store(CLI::App& app) {
  auto* st = app.add_subcommand("store", "Inspect or extend a knowledge store");
  st->require_subcommand(1);

  auto* show = st->add_subcommand("show", "Summarize a store");
  show->add_option("--store", store_, "Store file")->required();
  show->add_flag("--turtle", turtle_, "Also print the graph");
  show->add_option("--json", json_out_, "Write the summary as JSON here");
  show->callback([this] { action_ = [this] { return cmd_show(); }; });

  auto* merge = st->add_subcommand("merge", "Merge a Turtle file into a store");
  merge->add_option("--store", store_, "Store file")->required();
  merge->add_option("--from", input_, "Turtle file to merge")->required();
  merge->add_option("--source", id_, "Source id recorded as provenance (default: the file name)");
  merge->add_option("--policy", policy_, "Conflict policy")
      ->check(CLI::IsMember({"reject-conflicts", "keep-existing", "keep-new"}))
      ->capture_default_str();
  merge->add_option("--timestamp", timestamp_, "Provenance timestamp (default: now)");
  merge->callback([this] { action_ = [this] { return cmd_merge(); }; });
}

void Cli::resolve_global() {
  g_.workdir = flags_.workdir;
  fs::path cfg = flags_.config.empty() ? g_.workdir / "kc.json" : path(flags_.config);
  if (!flags_.config.empty() || fs::exists(cfg)) {
    const json j = at_file(cfg, [&] { return json::parse(read_file(cfg)); });
    at_file(cfg, [&] {
      if (!j.is_object()) throw IoError("config must be a JSON object");
      g_.config_file = cfg;
      if (j.contains("schema")) g_.schema = j.at("schema").get<std::string>();
      if (j.contains("corpus")) g_.corpus = j.at("corpus").get<std::string>();
      if (j.contains("endpoint_url")) g_.endpoint_url = j.at("endpoint_url").get<std::string>();
      g_.model = j.value("model", g_.model);
      g_.api_key_env = j.value("api_key_env", g_.api_key_env);
      g_.timeout_ms = j.value("timeout_ms", g_.timeout_ms);
      g_.max_parallel = j.value("max_parallel", g_.max_parallel);
      if (j.contains("out_dir")) g_.out_dir = j.at("out_dir").get<std::string>();
      g_.verbosity = j.value("verbosity", g_.verbosity);
      if (j.contains("prefixes"))
        for (const auto& [k, v] : j.at("prefixes").items()) g_.prefixes[k] = v.get<std::string>();
      return 0;
    });
  }
  if (!flags_.schema.empty()) g_.schema = flags_.schema;
  if (!flags_.out_dir.empty()) g_.out_dir = flags_.out_dir;
  g_.verbosity += flags_.verbosity;
  g_.schema = path(g_.schema);
  g_.corpus = path(g_.corpus);
  g_.out_dir = path(g_.out_dir);
  if (g_.max_parallel < 1) throw UsageError("max_parallel must be at least 1");
  if (!g_.config_file.empty()) log("config " + g_.config_file.string());
}

const onto::OntologySchema& Cli::schema() {
  if (!schema_) {
    if (g_.schema.empty()) {
      schema_ = onto::default_schema();
    } else {
      schema_ = at_file(g_.schema, [&] { return onto::load_schema_file(g_.schema); });
      log("schema " + g_.schema.string());
    }
  }
  return *schema_;
}

rdf::Graph Cli::read_graph(const fs::path& file) {
  const fs::path p = path(file);
  return at_file(p, [&] {
    rdf::Graph g = rdf::parse_turtle(read_file(p), g_.prefixes);
    if (name_keyed_) g = onto::canonicalize(g, schema(), rdf::CanonicalMode::kNameKeyed);
    return g;
  });
}

dataset::Corpus Cli::corpus(const std::string& flag_value) {
  const fs::path p = flag_value.empty() ? g_.corpus : path(flag_value);
  if (p.empty()) throw UsageError("no corpus given (flag or \"corpus\" in kc.json)");
  auto c = at_file(p, [&] { return dataset::load_corpus(p, schema()); });
  log("corpus " + p.string() + ": " + std::to_string(c.size()) + " samples");
  return c;
}

std::string Cli::system_prompt(const std::string& file) {
  if (file.empty()) return dataset::default_system_prompt();
  return read_file(path(file));
}

int Cli::cmd_parse() {
  const rdf::Graph g = read_graph(input_);
  std::string text;
  if (ntriples_) {
    for (const auto& t : g) text += rdf::to_ntriples(t) + "\n";
  } else {
    text = rdf::serialize_turtle(g, g_.prefixes);
  }
  if (output_.empty()) {
    out_ << text;
  } else {
    write_file(path(output_), text);
  }
  log(std::to_string(g.size()) + " triples");
  return kOk;
}

int Cli::cmd_validate() {
  const rdf::Graph g = read_graph(input_);
  const auto report = onto::validate(g, schema());
  if (!report_.empty()) {
    ordered_json j;
    j["file"] = path(input_).string();
    j["triples"] = g.size();
    j["ok"] = report.ok();
    j["violations"] = violations_json(report);
    j["schema_hash"] = schema().hash();
    j["config"] = g_.to_json();
    write_json(path(report_), j);
  }
  if (report.ok()) {
    out_ << path(input_).string() << ": ok, " << g.size() << " triples\n";
    return kOk;
  }
  out_ << path(input_).string() << ": " << report.violations.size() << " violation(s)\n";
  print_violations(report, out_);
  err_ << report.summary();
  return kDomainError;
}

int Cli::cmd_materialize() {
  const rdf::Graph g = read_graph(input_);
  const rdf::Graph m = at_file(path(input_), [&] { return onto::materialize(g, schema()); });
  const std::string text = rdf::serialize_turtle(m, g_.prefixes);
  if (output_.empty()) {
    out_ << text;
  } else {
    write_file(path(output_), text);
  }
  log(std::to_string(g.size()) + " asserted, " + std::to_string(m.size() - g.size()) + " inferred");
  return kOk;
}

int Cli::cmd_stats() {
  const auto c = corpus(corpus_);
  const auto hist = dataset::corpus_stats(c);
  std::size_t generic = 0;
  for (const auto& s : c.samples) generic += s.kind == dataset::SampleKind::kGeneric ? 1 : 0;
  Table t({"concept", "samples"});
  for (const auto& tag : c.concept_tags) t.add({tag, std::to_string(hist.get(tag))});
  t.print(out_);
  out_ << c.size() << " samples (" << c.size() - generic << " ontology, " << generic << " generic)\n";
  if (!json_out_.empty()) {
    ordered_json j;
    j["corpus"] = (corpus_.empty() ? g_.corpus : path(corpus_)).string();
    j["samples"] = c.size();
    j["ontology"] = c.size() - generic;
    j["generic"] = generic;
    j["histogram"] = hist.to_json();
    write_json(path(json_out_), j);
  }
  return kOk;
}

ordered_json ids(const dataset::Corpus& c) {
  ordered_json a = ordered_json::array();
  for (const auto& s : c.samples) a.push_back(s.id);
  return a;
}

int Cli::cmd_split() {
  const auto c = corpus(corpus_);
  const auto parts = dataset::split(c, {seed_, test_count_, validation_count_});
  fs::create_directories(g_.out_dir);
  dataset::write_corpus(parts.train, g_.out_dir / "train.jsonl");
  dataset::write_corpus(parts.test, g_.out_dir / "test.jsonl");
  if (validation_count_ > 0) dataset::write_corpus(parts.validation, g_.out_dir / "validation.jsonl");
  ordered_json j;
  j["seed"] = seed_;
  j["test_count"] = test_count_;
  j["validation_count"] = validation_count_;
  j["train"] = ids(parts.train);
  j["validation"] = ids(parts.validation);
  j["test"] = ids(parts.test);
  write_json(g_.out_dir / "split.json", j);

  Table t({"part", "samples", "file"});
  t.add({"train", std::to_string(parts.train.size()), (g_.out_dir / "train.jsonl").string()});
  if (validation_count_ > 0)
    t.add({"validation", std::to_string(parts.validation.size()), (g_.out_dir / "validation.jsonl").string()});
  t.add({"test", std::to_string(parts.test.size()), (g_.out_dir / "test.jsonl").string()});
  t.print(out_);
  return kOk;
}

int Cli::cmd_select() {
  const auto c = corpus(corpus_);
  const auto& concepts = concepts_.empty() ? dataset::swept_concepts() : concepts_;
  const auto picked = dataset::select_k_per_concept(c, k_, concepts, seed_, !no_generic_);
  dataset::write_corpus(picked, path(output_));
  const auto have = dataset::corpus_stats(c);
  const auto got = dataset::corpus_stats(picked);
  Table t({"concept", "available", "selected"});
  ordered_json per = ordered_json::object();
  for (const auto& tag : concepts) {
    t.add({tag, std::to_string(have.get(tag)), std::to_string(got.get(tag))});
    per[tag] = got.get(tag);
  }
  t.print(out_);
  out_ << picked.size() << " samples written to " << path(output_).string() << '\n';
  if (!json_out_.empty()) {
    ordered_json j;
    j["k"] = k_;
    j["seed"] = seed_;
    j["samples"] = picked.size();
    j["per_concept"] = per;
    j["ids"] = ids(picked);
    write_json(path(json_out_), j);
  }
  return kOk;
}

int Cli::cmd_export() {
  const auto c = corpus(corpus_);
  dataset::TrainingManifest m;
  if (k_ > 0) m.samples_per_concept = static_cast<int>(k_);
  if (epochs_) m.epochs = *epochs_;
  m.system_prompt = system_prompt(system_prompt_file_);
  m.dataset_files = {{"train", path(output_).string()}};
  m.check();
  const std::size_t n = dataset::export_chat_jsonl(c, m, path(output_), {force_});
  out_ << n << " records written to " << path(output_).string() << '\n';
  return kOk;
}

// Ensures exactly one backend flag is active and builds its config.
model::ClientConfig backend_config(const GlobalConfig& g, const std::string& endpoint, const std::string& responses,
                                   bool oracle, const std::function<fs::path(const fs::path&)>& path) {
  const int chosen = (endpoint.empty() ? 0 : 1) + (responses.empty() ? 0 : 1) + (oracle ? 1 : 0);
  if (chosen > 1) throw UsageError("--endpoint, --responses and --oracle are mutually exclusive");
  model::ClientConfig c;
  c.model_name = g.model;
  c.api_key_env = g.api_key_env;
  c.timeout = std::chrono::milliseconds(g.timeout_ms);
  c.max_parallel = g.max_parallel;
  if (oracle) {
    c.backend = model::BackendKind::kOracle;
  } else if (!responses.empty()) {
    c.backend = model::BackendKind::kReplay;
    c.replay_path = path(responses);
  } else if (!endpoint.empty() || !g.endpoint_url.empty()) {
    c.backend = model::BackendKind::kEndpoint;
    c.endpoint_url = endpoint.empty() ? g.endpoint_url : endpoint;
  } else {
    throw UsageError("no backend: give --endpoint, --responses or --oracle (or endpoint_url in kc.json)");
  }
  return c;
}

void append_recording(const fs::path& file, const std::string& id, const std::string& response) {
  std::map<std::string, std::string> existing;
  if (fs::exists(file)) existing = model::read_recording(file);
  existing[id] = response;
  std::vector<model::CompletionRecord> records;
  for (const auto& [sid, text] : existing) {
    model::CompletionRecord r;
    r.sample_id = sid;
    r.response_text = text;
    records.push_back(std::move(r));
  }
  model::write_recording(records, file);
}

int Cli::finish_capture(const capture::CaptureResult& result, const fs::path& store_path, const std::string& policy,
                        const std::string& timestamp) {
  out_ << "source: " << result.source << "\nstatus: " << capture::to_string(result.status) << '\n';
  if (result.status == capture::CaptureStatus::kRejected) {
    err_ << result.source << ": " << result.diagnostic() << '\n';
    if (!result.validation.ok()) print_violations(result.validation, out_);
    return kDomainError;
  }
  if (result.status == capture::CaptureStatus::kEmpty) {
    out_ << "nothing to store\n";
    return kOk;
  }
  capture::Store store = at_file(store_path, [&] { return capture::load_store(store_path, schema()); });
  const capture::MergeOptions options{capture::parse_merge_policy(policy), timestamp.empty() ? now_utc() : timestamp};
  capture::MergeReport report;
  try {
    report = capture::merge(store, result, schema(), options);
  } catch (const capture::PolicyViolation& e) {
    err_ << store_path.string() << ": merge rejected, " << e.report().conflicts.size() << " conflict(s)\n";
    onto::ValidationReport conflicts{e.report().conflicts};
    print_violations(conflicts, out_);
    err_ << conflicts.summary();
    return kDomainError;
  }
  capture::save_store(store, store_path);
  Table t({"added", "duplicates", "dropped", "removed", "conflicts", "store"});
  t.add({std::to_string(report.added), std::to_string(report.duplicates), std::to_string(report.dropped),
         std::to_string(report.removed), std::to_string(report.conflicts.size()), std::to_string(store.graph.size())});
  t.print(out_);
  return kOk;
}

int Cli::cmd_capture() {
  const fs::path store_path = path(store_);
  const std::string source = id_.empty() ? capture::prompt_source(prompt_) : id_;
  if (!gold_.empty() && !oracle_) throw UsageError("--gold only makes sense with --oracle");
  if (!response_file_.empty()) {
    if (!endpoint_.empty() || !responses_.empty() || oracle_)
      throw UsageError("--response-file cannot be combined with a backend");
    const fs::path rf = path(response_file_);
    const std::string raw = read_file(rf);
    if (!record_.empty()) append_recording(path(record_), source, raw);
    return finish_capture(capture::capture_text(raw, schema(), source, prompt_), store_path, policy_, timestamp_);
  }
  const auto config = backend_config(g_, endpoint_, responses_, oracle_, [this](const fs::path& p) { return path(p); });
  if (oracle_ && gold_.empty()) throw UsageError("--oracle needs --gold");
  const auto backend = model::make_backend(config, schema());
  model::Request request{source, prompt_, gold_.empty() ? rdf::Graph{} : read_graph(gold_)};
  const auto result = capture::capture(request, *backend, system_prompt(system_prompt_file_), schema());
  if (!record_.empty()) append_recording(path(record_), source, result.raw_response);
  return finish_capture(result, store_path, policy_, timestamp_);
}

void print_report(const eval::EvalReport& r, std::ostream& out) {
  Table t({"concept", "tp", "fp", "fn", "precision", "recall", "f1"});
  for (const auto& [tag, c] : r.per_concept_counts) {
    const auto& m = r.per_concept.at(tag);
    t.add({tag, std::to_string(c.tp), std::to_string(c.fp), std::to_string(c.fn), fixed3(m.precision),
           fixed3(m.recall), fixed3(m.f1)});
  }
  t.add({"micro", std::to_string(r.totals.tp), std::to_string(r.totals.fp), std::to_string(r.totals.fn),
         fixed3(r.micro.precision), fixed3(r.micro.recall), fixed3(r.micro.f1)});
  if (r.macro) t.add({"macro", "", "", "", fixed3(r.macro->precision), fixed3(r.macro->recall), fixed3(r.macro->f1)});
  t.print(out);
  out << r.samples.size() << " samples, " << r.parse_failures << " parse failure(s)\n";
  out << "micro F1 " << fixed3(r.micro.f1) << '\n';
}

int Cli::cmd_eval() {
  if (eval_test_count_.has_value() != split_seed_.has_value())
    throw UsageError("--split-seed and --test-count go together");
  dataset::Corpus test = corpus(corpus_);
  if (split_seed_) test = dataset::split(test, {*split_seed_, *eval_test_count_, 0}).test;
  auto config = backend_config(g_, endpoint_, responses_, oracle_, [this](const fs::path& p) { return path(p); });
  if (!oracle_ && (drop_rate_ != 0 || spurious_rate_ != 0 || noise_seed_ != 0))
    throw UsageError("noise flags need --oracle");
  config.noise = {drop_rate_, spurious_rate_, noise_seed_};
  config.check();

  eval::EvalOptions options;
  options.label = label_;
  options.mode = eval::parse_compare_mode(mode_);
  options.fail_mode = eval::parse_fail_mode(fail_mode_);
  options.macro = macro_;
  options.system_prompt = system_prompt(system_prompt_file_);
  options.max_parallel = g_.max_parallel;
  auto report = eval::run_eval(test, config, schema(), options);
  report.config["cli"] = g_.to_json();
  if (split_seed_) report.config["split"] = {{"seed", *split_seed_}, {"test_count", *eval_test_count_}};
  print_report(report, out_);
  if (!output_.empty()) write_json(path(output_), report.to_json());
  return kOk;
}

int Cli::cmd_sweep() {
  const fs::path mpath = path(manifest_);
  const auto manifest = at_file(mpath, [&] { return eval::SweepManifest::load(mpath); });
  log("sweep " + mpath.string() + ": " + std::to_string(manifest.runs.size()) + " runs");
  const auto entries = eval::sweep(manifest, schema());

  std::ostringstream csv;
  eval::write_csv(entries, csv);
  write_file(path(csv_), csv.str());
  if (!svg_.empty()) write_file(path(svg_), eval::render_svg(entries));

  Table t({"label", "precision", "recall", "f1", "status"});
  ordered_json all = ordered_json::array();
  std::size_t failed = 0;
  for (const auto& e : entries) {
    if (e.report) {
      t.add({e.label, fixed3(e.report->micro.precision), fixed3(e.report->micro.recall), fixed3(e.report->micro.f1),
             "ok"});
      all.push_back(e.report->to_json());
    } else {
      ++failed;
      t.add({e.label, "", "", "", "failed"});
      err_ << "run '" << e.label << "': " << e.error << '\n';
      all.push_back({{"label", e.label}, {"error", e.error}});
    }
  }
  t.print(out_);
  if (!json_out_.empty()) {
    ordered_json j;
    j["manifest"] = mpath.string();
    j["config"] = g_.to_json();
    j["runs"] = all;
    write_json(path(json_out_), j);
  }
  return failed == 0 ? kOk : kDomainError;
}

int Cli::cmd_show() {
  const fs::path p = path(store_);
  const auto store = at_file(p, [&] { return capture::load_store(p, schema()); });
  const rdf::Graph asserted = store.asserted();
  std::set<std::string> sources;
  for (const auto& [t, entries] : store.provenance)
    for (const auto& e : entries) sources.insert(e.source);
  std::map<std::string, std::size_t> per_concept;
  for (const auto& t : store.graph) ++per_concept[onto::concept_of(t, schema())];

  Table summary({"triples", "asserted", "inferred", "sources"});
  summary.add({std::to_string(store.graph.size()), std::to_string(asserted.size()),
               std::to_string(store.graph.size() - asserted.size()), std::to_string(sources.size())});
  summary.print(out_);
  out_ << '\n';
  Table concepts({"concept", "triples"});
  for (const auto& [tag, n] : per_concept) concepts.add({tag, std::to_string(n)});
  concepts.print(out_);
  if (turtle_) out_ << '\n' << rdf::serialize_turtle(store.graph, g_.prefixes);
  if (!json_out_.empty()) {
    ordered_json j;
    j["store"] = p.string();
    j["triples"] = store.graph.size();
    j["asserted"] = asserted.size();
    j["inferred"] = store.graph.size() - asserted.size();
    j["sources"] = sources;
    j["per_concept"] = per_concept;
    write_json(path(json_out_), j);
  }
  return kOk;
}

int Cli::cmd_merge() {
  const fs::path from = path(input_);
  const std::string raw = read_file(from);
  const std::string source = id_.empty() ? from.filename().string() : id_;
  return finish_capture(capture::capture_text(raw, schema(), source), path(store_), policy_, timestamp_);
}

int Cli::run(int argc, const char* const* argv) {
  CLI::App app("Ontology-driven knowledge capture toolkit", "kc");
  app.require_subcommand(1);
  app.set_version_flag("--version", "kc 0.1.0");
  define_global(app);
  define_graph_commands(app);
  define_dataset(app);
  define_capture(app);
  define_eval(app);
  define_sweep(app);
  define_store(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out_, err_);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    resolve_global();
    return action_();
  } catch (const UsageError& e) {
    err_ << "kc: usage: " << e.what() << "\nRun with --help for the flag list.\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err_ << "kc: usage: " << e.what() << '\n';
    return kUsageError;
  } catch (const Error& e) {
    err_ << "kc: error: " << e.what() << '\n';
    return kDomainError;
  } catch (const json::exception& e) {
    err_ << "kc: error: " << e.what() << '\n';
    return kDomainError;
  } catch (const std::exception& e) {
    err_ << "kc: error: " << e.what() << '\n';
    return kDomainError;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return Cli(out, err).run(argc, argv);
}

}  // namespace kc::cli
