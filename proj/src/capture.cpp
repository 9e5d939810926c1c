#include "kc/capture.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kc/graph_ops.hpp"
#include "kc/turtle.hpp"

namespace kc::capture {

using nlohmann::json;
using rdf::Graph;
using rdf::Term;
using rdf::Triple;

std::string_view to_string(CaptureStatus status) {
  switch (status) {
    case CaptureStatus::kCaptured: return "captured";
    case CaptureStatus::kEmpty: return "empty";
    case CaptureStatus::kRejected: return "rejected";
  }
  return "rejected";
}

std::string_view to_string(MergePolicy policy) {
  switch (policy) {
    case MergePolicy::kRejectConflicts: return "reject-conflicts";
    case MergePolicy::kKeepExisting: return "keep-existing";
    case MergePolicy::kKeepNew: return "keep-new";
  }
  return "reject-conflicts";
}

MergePolicy parse_merge_policy(std::string_view text) {
  if (text == "reject-conflicts") return MergePolicy::kRejectConflicts;
  if (text == "keep-existing") return MergePolicy::kKeepExisting;
  if (text == "keep-new") return MergePolicy::kKeepNew;
  throw std::invalid_argument("unknown merge policy '" + std::string(text) +
                              "' (reject-conflicts, keep-existing or keep-new)");
}

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Graph union_of(const Graph& a, const Graph& b) {
  Graph out = a;
  for (const auto& t : b) out.insert(t);
  return out;
}

std::set<Term> nodes_of(const Graph& g) {
  std::set<Term> nodes;
  for (const auto& t : g) {
    nodes.insert(t.subject);
    if (!t.object.is_literal()) nodes.insert(t.object);
  }
  return nodes;
}

// Adds `candidates` to `fixed` one at a time, in sorted order, skipping any
// that would make the graph invalid. Only candidates whose consequences touch
// a node of `fixed` can clash (every violation is local to one node), so the
// rest go in without a check.
Graph add_compatible(const Graph& fixed, const Graph& candidates, const onto::OntologySchema& schema) {
  const auto fixed_nodes = nodes_of(onto::close_under_rules(fixed, schema));
  Graph accepted = fixed;
  std::vector<Triple> risky;
  for (const auto& c : candidates) {
    Graph single;
    single.insert(c);
    bool touches = false;
    for (const auto& n : nodes_of(onto::close_under_rules(single, schema)))
      if (fixed_nodes.contains(n)) touches = true;
    if (touches)
      risky.push_back(c);
    else
      accepted.insert(c);
  }
  for (const auto& c : risky) {
    if (!accepted.insert(c)) continue;
    if (!onto::validate(accepted, schema).ok()) accepted.erase(c);
  }
  return accepted;
}

// Renames blank nodes into a namespace derived from the capture, so anonymous
// people from different captures stay apart and re-merging is idempotent.
Graph scope_blanks(const Graph& g, const std::string& key) {
  rdf::BlankMapping mapping;
  for (const auto& label : g.blank_labels()) mapping[label] = "c" + key + "_" + label;
  return rdf::relabel_blanks(g, mapping, {});
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string prompt_source(std::string_view prompt) { return "prompt:" + hex(fnv1a(prompt)); }

std::string CaptureResult::diagnostic() const {
  switch (status) {
    case CaptureStatus::kCaptured:
      return "captured " + std::to_string(canonical ? canonical->size() : 0) + " triple(s), " +
             std::to_string(materialized ? materialized->size() : 0) + " after materialization";
    case CaptureStatus::kEmpty:
      return "nothing to capture";
    case CaptureStatus::kRejected:
      if (!error.empty()) return error;
      return "rejected by validation:\n" + validation.summary();
  }
  return {};
}

CaptureResult capture_text(std::string_view raw_response, const onto::OntologySchema& schema, std::string source,
                           std::string prompt) {
  CaptureResult r;
  r.source = std::move(source);
  r.prompt = std::move(prompt);
  r.raw_response = std::string(raw_response);
  try {
    r.parsed = rdf::parse_turtle(raw_response, rdf::default_prefixes());
  } catch (const std::exception& e) {
    r.error = e.what();
    r.status = CaptureStatus::kRejected;
    return r;
  }
  if (r.parsed->empty()) {
    r.canonical = Graph{};
    r.status = CaptureStatus::kEmpty;
    return r;
  }
  try {
    r.canonical = onto::canonicalize(*r.parsed, schema, rdf::CanonicalMode::kNameKeyed);
  } catch (const AmbiguousName& e) {
    r.error = e.what();
    r.validation.violations.push_back({onto::ViolationKind::kAmbiguousName, {}, e.what()});
    r.status = CaptureStatus::kRejected;
    return r;
  }
  r.validation = onto::validate(*r.canonical, schema);
  if (!r.validation.ok()) {
    r.status = CaptureStatus::kRejected;
    return r;
  }
  r.materialized = onto::close_under_rules(*r.canonical, schema);
  r.status = CaptureStatus::kCaptured;
  return r;
}

CaptureResult capture(const model::Request& request, const model::Backend& backend, const std::string& system_prompt,
                      const onto::OntologySchema& schema) {
  const std::string response = backend.complete(request, system_prompt);
  return capture_text(response, schema, request.sample_id.empty() ? prompt_source(request.prompt) : request.sample_id,
                      request.prompt);
}

Graph Store::asserted() const {
  Graph base;
  for (const auto& t : graph) {
    const auto it = provenance.find(t);
    // Triples without any provenance (hand-written stores) count as asserted.
    if (it == provenance.end() || it->second.empty() ||
        std::any_of(it->second.begin(), it->second.end(), [](const ProvenanceEntry& e) { return e.asserted; }))
      base.insert(t);
  }
  return base;
}

PolicyViolation::PolicyViolation(MergeReport report)
    : Error([&] {
        std::string msg = "merge rejected: " + std::to_string(report.conflicts.size()) + " conflict(s)";
        for (const auto& v : report.conflicts) {
          msg += "\n  " + std::string(onto::to_string(v.kind)) + ": " + v.message;
          for (const auto& t : v.triples) msg += "\n    " + rdf::to_ntriples(t);
        }
        return msg;
      }()),
      report_(std::move(report)) {}

MergeReport merge(Store& store, const CaptureResult& result, const onto::OntologySchema& schema,
                  const MergeOptions& options) {
  if (result.status != CaptureStatus::kCaptured || !result.canonical || !result.materialized)
    throw std::invalid_argument("only captured results can be merged (status " +
                                std::string(to_string(result.status)) + ")");
  const std::string key =
      hex(fnv1a(result.source + "\n" + rdf::serialize_turtle(*result.canonical, {}))).substr(0, 12);
  const Graph incoming_base = scope_blanks(*result.canonical, key);
  const Graph incoming = scope_blanks(*result.materialized, key);

  const Graph base = store.asserted();
  Graph new_base = union_of(base, incoming_base);
  MergeReport report;
  report.conflicts = onto::validate(new_base, schema).violations;
  if (!report.conflicts.empty()) {
    switch (options.policy) {
      case MergePolicy::kRejectConflicts:
        throw PolicyViolation(std::move(report));
      case MergePolicy::kKeepExisting:
        new_base = add_compatible(base, incoming_base, schema);
        break;
      case MergePolicy::kKeepNew:
        new_base = add_compatible(incoming_base, base, schema);
        break;
    }
  }
  const Graph new_graph = onto::close_under_rules(new_base, schema);

  for (const auto& t : incoming) {
    if (store.graph.contains(t))
      ++report.duplicates;
    else if (new_graph.contains(t))
      ++report.added;
    else
      ++report.dropped;
  }
  for (const auto& t : store.graph) report.removed += new_graph.contains(t) ? 0 : 1;

  const std::string timestamp = options.timestamp.empty() ? now_utc() : options.timestamp;
  auto provenance = std::move(store.provenance);
  std::erase_if(provenance, [&](const auto& entry) { return !new_graph.contains(entry.first); });
  for (const auto& t : base) {
    if (new_base.contains(t)) continue;
    // displaced from the base but still derivable from what remains
    if (const auto it = provenance.find(t); it != provenance.end())
      for (auto& e : it->second) e.asserted = false;
  }
  for (const auto& t : incoming)
    if (new_graph.contains(t)) provenance[t].push_back({result.source, timestamp, incoming_base.contains(t)});

  store.graph = new_graph;
  store.provenance = std::move(provenance);
  return report;
}

std::filesystem::path provenance_path(const std::filesystem::path& store_path) {
  std::filesystem::path p = store_path;
  p += ".provenance.jsonl";
  return p;
}

void save_store(const Store& store, const std::filesystem::path& path) {
  std::string lines;
  for (const auto& [triple, entries] : store.provenance)
    for (const auto& e : entries)
      lines += json{{"triple", rdf::to_ntriples(triple)},
                    {"source", e.source},
                    {"timestamp", e.timestamp},
                    {"asserted", e.asserted}}
                   .dump() +
               "\n";
  write_atomically(path, rdf::serialize_turtle(store.graph, rdf::default_prefixes()));
  write_atomically(provenance_path(path), lines);
}

Store load_store(const std::filesystem::path& path, const onto::OntologySchema& schema) {
  Store store;
  if (!std::filesystem::exists(path)) {
    if (std::filesystem::exists(provenance_path(path)))
      throw IoError(provenance_path(path).string() + " exists but " + path.string() + " does not");
    return store;
  }
  Graph parsed;
  try {
    parsed = rdf::parse_turtle(read_file(path));
  } catch (const SyntaxError& e) {
    throw SyntaxError(e.line(), e.column(), path.string() + ": " + e.detail());
  }
  const auto report = onto::validate(parsed, schema);
  if (!report.ok()) throw onto::InvalidInput(report);
  store.graph = onto::close_under_rules(parsed, schema);

  const auto prov = provenance_path(path);
  if (!std::filesystem::exists(prov)) return store;
  std::istringstream in(read_file(prov));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = prov.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      const Graph one = rdf::parse_turtle(j.at("triple").get<std::string>());
      if (one.size() != 1) throw IoError(where + ": expected exactly one triple");
      const Triple& t = *one.begin();
      if (!store.graph.contains(t)) throw IoError(where + ": provenance for a triple not in the store");
      store.provenance[t].push_back(
          {j.at("source").get<std::string>(), j.at("timestamp").get<std::string>(), j.at("asserted").get<bool>()});
    } catch (const json::exception& e) {
      throw IoError(where + ": " + e.what());
    } catch (const SyntaxError& e) {
      throw IoError(where + ": " + e.what());
    }
  }
  return store;
}

}  // namespace kc::capture
