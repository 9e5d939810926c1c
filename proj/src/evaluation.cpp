#include "kc/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "kc/graph_ops.hpp"
#include "kc/turtle.hpp"

namespace kc::eval {

using nlohmann::json;
using nlohmann::ordered_json;
using rdf::Graph;
using rdf::Term;
using rdf::Triple;

std::string_view to_string(CompareMode mode) {
  return mode == CompareMode::kIsomorphism ? "isomorphism" : "name-keyed";
}

CompareMode parse_compare_mode(std::string_view text) {
  if (text == "name-keyed") return CompareMode::kNameKeyed;
  if (text == "iso" || text == "isomorphism") return CompareMode::kIsomorphism;
  throw std::invalid_argument("unknown comparison mode '" + std::string(text) + "' (name-keyed or iso)");
}

std::string_view to_string(FailMode mode) { return mode == FailMode::kScoreZero ? "score-zero" : "abort"; }

FailMode parse_fail_mode(std::string_view text) {
  if (text == "abort") return FailMode::kAbort;
  if (text == "score-zero") return FailMode::kScoreZero;
  throw std::invalid_argument("unknown fail mode '" + std::string(text) + "' (abort or score-zero)");
}

Metrics Metrics::from_counts(const Counts& c) {
  Metrics m;
  const auto tp = static_cast<double>(c.tp);
  m.precision = c.tp + c.fp == 0 ? (c.fn == 0 ? 1.0 : 0.0) : tp / static_cast<double>(c.tp + c.fp);
  m.recall = c.tp + c.fn == 0 ? (c.fp == 0 ? 1.0 : 0.0) : tp / static_cast<double>(c.tp + c.fn);
  m.f1 = m.precision + m.recall == 0 ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

Graph trim_literals(const Graph& g) {
  Graph out;
  for (const auto& t : g) {
    if (t.object.is_literal())
      out.insert(Triple(t.subject, t.predicate,
                        Term::literal(trim(t.object.value()), t.object.language(), t.object.datatype())));
    else
      out.insert(t);
  }
  return out;
}

Graph prepare_gold(const Graph& gold, const onto::OntologySchema& schema, CompareMode mode) {
  Graph g = trim_literals(gold);
  if (mode == CompareMode::kNameKeyed) {
    try {
      return onto::canonicalize(g, schema, rdf::CanonicalMode::kNameKeyed);
    } catch (const AmbiguousName&) {
      // gold is validated before scoring, so this only happens for ad-hoc use
    }
  }
  return g;
}

void count_misses(const Graph& gold, const onto::OntologySchema& schema, SampleScore& s) {
  s.counts = {0, 0, gold.size()};
  for (const auto& t : gold) ++s.per_concept[onto::concept_of(t, schema)].fn;
}

}  // namespace

SampleScore failed_sample(const Graph& gold, const onto::OntologySchema& schema, std::string sample_id,
                          std::string error) {
  SampleScore s;
  s.sample_id = std::move(sample_id);
  s.parse_failed = true;
  s.error = std::move(error);
  count_misses(prepare_gold(gold, schema, CompareMode::kNameKeyed), schema, s);
  return s;
}

SampleScore score_sample(std::string_view response_text, const Graph& gold, const onto::OntologySchema& schema,
                         CompareMode mode, std::string sample_id) {
  SampleScore s;
  s.sample_id = std::move(sample_id);
  const Graph g = prepare_gold(gold, schema, mode);
  Graph predicted;
  try {
    predicted = trim_literals(rdf::parse_turtle(response_text, rdf::default_prefixes()));
    if (mode == CompareMode::kNameKeyed)
      predicted = onto::canonicalize(predicted, schema, rdf::CanonicalMode::kNameKeyed);
  } catch (const std::exception& e) {
    s.parse_failed = true;
    s.error = e.what();
    count_misses(g, schema, s);
    return s;
  }
  if (mode == CompareMode::kIsomorphism) {
    try {
      const auto alignment = rdf::best_alignment(predicted, g);
      predicted = rdf::relabel_blanks(predicted, alignment.mapping, g.blank_labels());
      if (!alignment.exhaustive) s.error = "alignment search budget exhausted; best mapping found was used";
    } catch (const TooLarge& e) {
      predicted = rdf::relabel_blanks(predicted, {}, g.blank_labels());
      s.error = std::string("blank nodes not aligned: ") + e.what();
    }
  }
  const auto diff = rdf::graph_diff(predicted, g);
  s.counts = {diff.common.size(), diff.only_a.size(), diff.only_b.size()};
  for (const auto& t : diff.common) ++s.per_concept[onto::concept_of(t, schema)].tp;
  for (const auto& t : diff.only_a) ++s.per_concept[onto::concept_of(t, schema)].fp;
  for (const auto& t : diff.only_b) ++s.per_concept[onto::concept_of(t, schema)].fn;
  return s;
}

EvalReport aggregate(const std::vector<SampleScore>& scores, const AggregateOptions& options) {
  if (scores.empty()) throw EmptyInput("nothing to aggregate: no sample scores");
  EvalReport r;
  for (const auto& s : scores) {
    r.totals += s.counts;
    for (const auto& [tag, c] : s.per_concept) r.per_concept_counts[tag] += c;
    r.parse_failures += s.parse_failed ? 1 : 0;
  }
  r.micro = Metrics::from_counts(r.totals);
  for (const auto& [tag, c] : r.per_concept_counts) r.per_concept[tag] = Metrics::from_counts(c);
  if (options.macro) {
    Metrics m;
    for (const auto& [tag, pm] : r.per_concept) {
      m.precision += pm.precision;
      m.recall += pm.recall;
      m.f1 += pm.f1;
    }
    if (const auto n = static_cast<double>(r.per_concept.size()); n > 0) {
      m.precision /= n;
      m.recall /= n;
      m.f1 /= n;
    } else {
      m = Metrics::from_counts({});
    }
    r.macro = m;
  }
  r.samples = scores;
  return r;
}

namespace {

ordered_json metrics_json(const Metrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

ordered_json counts_json(const Counts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; }

}  // namespace

ordered_json EvalReport::to_json() const {
  ordered_json j;
  j["label"] = label;
  j["mode"] = to_string(mode);
  j["schema_hash"] = schema_hash;
  j["config"] = config;
  j["micro"] = metrics_json(micro);
  j["totals"] = counts_json(totals);
  if (macro) j["macro"] = metrics_json(*macro);
  ordered_json concepts = ordered_json::object();
  for (const auto& [tag, c] : per_concept_counts) {
    ordered_json entry = counts_json(c);
    entry.update(metrics_json(per_concept.at(tag)));
    concepts[tag] = entry;
  }
  j["per_concept"] = concepts;
  j["parse_failures"] = parse_failures;
  ordered_json samples_json = ordered_json::array();
  for (const auto& s : samples) {
    ordered_json e;
    e["sample_id"] = s.sample_id;
    e.update(counts_json(s.counts));
    e["parse_failed"] = s.parse_failed;
    if (!s.error.empty()) e["error"] = s.error;
    samples_json.push_back(e);
  }
  j["samples"] = samples_json;
  return j;
}

SampleFailed::SampleFailed(std::string sample_id, std::string kind, const std::string& message)
    : Error("sample '" + sample_id + "' failed (" + kind + "): " + message),
      sample_id_(std::move(sample_id)),
      kind_(std::move(kind)) {}

EvalReport run_eval(const dataset::Corpus& test, const model::Backend& backend, const onto::OntologySchema& schema,
                    const EvalOptions& options) {
  std::vector<model::Request> requests;
  requests.reserve(test.size());
  for (const auto& s : test.samples) requests.push_back({s.id, s.prompt, s.expected});
  const std::string& system =
      options.system_prompt.empty() ? dataset::default_system_prompt() : options.system_prompt;
  const auto records = model::batch_complete(backend, requests, system, options.max_parallel);

  std::vector<SampleScore> scores;
  scores.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const auto& sample = test.samples[i];
    if (!rec.ok()) {
      if (rec.error_kind == "missing-recording") throw model::MissingRecording(rec.sample_id);
      if (options.fail_mode == FailMode::kAbort) throw SampleFailed(rec.sample_id, rec.error_kind, *rec.error);
      scores.push_back(failed_sample(sample.expected, schema, rec.sample_id, *rec.error));
      continue;
    }
    scores.push_back(score_sample(rec.response_text, sample.expected, schema, options.mode, sample.id));
  }
  EvalReport report = aggregate(scores, {options.macro});
  report.label = options.label;
  report.mode = options.mode;
  report.schema_hash = schema.hash();
  report.config = {
      {"backend", to_string(backend.kind())},
      {"fail_mode", to_string(options.fail_mode)},
      {"samples", test.size()},
      {"system_prompt", system},
  };
  return report;
}

EvalReport run_eval(const dataset::Corpus& test, const model::ClientConfig& config,
                    const onto::OntologySchema& schema, const EvalOptions& options) {
  model::ClientConfig c = config;
  c.oracle_entities =
      options.mode == CompareMode::kNameKeyed ? rdf::CanonicalMode::kNameKeyed : rdf::CanonicalMode::kStrict;
  const auto backend = model::make_backend(c, schema);
  EvalReport report = run_eval(test, *backend, schema, options);
  switch (c.backend) {
    case model::BackendKind::kEndpoint:
      report.config["endpoint_url"] = c.endpoint_url;
      report.config["model"] = c.model_name;
      report.config["temperature"] = c.temperature;
      break;
    case model::BackendKind::kReplay:
      report.config["responses"] = c.replay_path.string();
      break;
    case model::BackendKind::kOracle:
      report.config["noise"] = {{"drop_rate", c.noise.drop_rate},
                                {"spurious_rate", c.noise.spurious_rate},
                                {"seed", c.noise.seed}};
      break;
  }
  return report;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

model::ClientConfig run_config(const json& r, const std::filesystem::path& base_dir) {
  model::ClientConfig c;
  c.backend = model::parse_backend_kind(r.at("backend").get<std::string>());
  switch (c.backend) {
    case model::BackendKind::kOracle:
      if (r.contains("noise")) {
        const auto& n = r.at("noise");
        c.noise.drop_rate = n.value("drop_rate", 0.0);
        c.noise.spurious_rate = n.value("spurious_rate", 0.0);
        c.noise.seed = n.value("seed", std::uint64_t{0});
      }
      break;
    case model::BackendKind::kReplay:
      c.replay_path = resolve(base_dir, r.at("responses").get<std::string>());
      break;
    case model::BackendKind::kEndpoint:
      c.endpoint_url = r.at("endpoint_url").get<std::string>();
      c.model_name = r.value("model", c.model_name);
      c.temperature = r.value("temperature", c.temperature);
      c.max_tokens = r.value("max_tokens", c.max_tokens);
      c.timeout = std::chrono::milliseconds(r.value("timeout_ms", static_cast<long long>(c.timeout.count())));
      break;
  }
  return c;
}

}  // namespace

SweepManifest SweepManifest::from_json(const json& j, const std::filesystem::path& base_dir) {
  SweepManifest m;
  try {
    m.test_corpus = resolve(base_dir, j.at("test_corpus").get<std::string>());
    if (j.contains("split")) {
      const auto& s = j.at("split");
      m.split = dataset::SplitSpec{s.value("seed", std::uint64_t{0}), s.at("test_count").get<std::size_t>(),
                                   s.value("validation_count", std::size_t{0})};
    }
    m.mode = parse_compare_mode(j.value("mode", std::string("name-keyed")));
    m.fail_mode = parse_fail_mode(j.value("fail_mode", std::string("abort")));
    m.max_parallel = j.value("max_parallel", m.max_parallel);
    m.system_prompt = j.value("system_prompt", std::string());
    std::set<std::string> labels;
    for (const auto& r : j.at("runs")) {
      SweepRun run{r.at("label").get<std::string>(), run_config(r, base_dir)};
      if (run.label.empty()) throw ManifestError("sweep run with an empty label");
      if (!labels.insert(run.label).second) throw ManifestError("duplicate sweep label '" + run.label + "'");
      run.client.max_parallel = m.max_parallel;
      run.client.check();
      m.runs.push_back(std::move(run));
    }
  } catch (const json::exception& e) {
    throw ManifestError(std::string("bad sweep manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ManifestError(std::string("bad sweep manifest: ") + e.what());
  }
  if (m.runs.empty()) throw ManifestError("sweep manifest has no runs");
  return m;
}

SweepManifest SweepManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read sweep manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::vector<SweepEntry> sweep(const SweepManifest& manifest, const onto::OntologySchema& schema) {
  dataset::Corpus test = dataset::load_corpus(manifest.test_corpus, schema);
  if (manifest.split) test = dataset::split(test, *manifest.split).test;
  std::vector<SweepEntry> entries;
  for (const auto& run : manifest.runs) {
    SweepEntry entry{run.label, std::nullopt, {}};
    EvalOptions options;
    options.label = run.label;
    options.mode = manifest.mode;
    options.fail_mode = manifest.fail_mode;
    options.system_prompt = manifest.system_prompt;
    options.max_parallel = manifest.max_parallel;
    try {
      entry.report = run_eval(test, run.client, schema, options);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default:
        // XML 1.0 forbids most control characters outright
        if (static_cast<unsigned char>(c) >= 0x20 || c == '\t' || c == '\n') out += c;
    }
  }
  return out;
}

}  // namespace

void write_csv(const std::vector<SweepEntry>& entries, std::ostream& out) {
  out << "label,precision,recall,f1,tp,fp,fn\r\n";
  for (const auto& e : entries) {
    out << csv_field(e.label);
    if (e.report) {
      const auto& r = *e.report;
      out << ',' << fixed(r.micro.precision, 6) << ',' << fixed(r.micro.recall, 6) << ',' << fixed(r.micro.f1, 6)
          << ',' << r.totals.tp << ',' << r.totals.fp << ',' << r.totals.fn;
    } else {
      out << ",,,,,,";
    }
    out << "\r\n";
  }
}

std::string render_svg(const std::vector<SweepEntry>& entries) {
  constexpr int kBar = 22, kGap = 30, kLeft = 60, kTop = 40, kPlot = 220, kBottom = 60;
  const char* colors[] = {"#4c72b0", "#dd8452", "#55a868"};
  const char* names[] = {"precision", "recall", "f1"};
  const int groups = static_cast<int>(entries.size());
  const int width = kLeft + std::max(1, groups) * (3 * kBar + kGap) + kGap + 110;
  const int height = kTop + kPlot + kBottom;
  const int base = kTop + kPlot;

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "  <rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" fill=\"white\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const int y = base - i * kPlot / 4;
    svg += "  <line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(y) + "\" x2=\"" +
           std::to_string(width - 110) + "\" y2=\"" + std::to_string(y) + "\" stroke=\"#dddddd\"/>\n";
    svg += "  <text x=\"" + std::to_string(kLeft - 8) + "\" y=\"" + std::to_string(y + 4) +
           "\" text-anchor=\"end\">" + fixed(i / 4.0, 2) + "</text>\n";
  }
  svg += "  <line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kTop) + "\" x2=\"" +
         std::to_string(kLeft) + "\" y2=\"" + std::to_string(base) + "\" stroke=\"black\"/>\n";

  for (int g = 0; g < groups; ++g) {
    const auto& e = entries[static_cast<std::size_t>(g)];
    const int x0 = kLeft + kGap + g * (3 * kBar + kGap);
    svg += "  <g class=\"group\">\n";
    if (e.report) {
      const double values[] = {e.report->micro.precision, e.report->micro.recall, e.report->micro.f1};
      for (int b = 0; b < 3; ++b) {
        const double v = std::clamp(values[b], 0.0, 1.0);
        const int h = static_cast<int>(v * kPlot + 0.5);
        svg += "    <rect x=\"" + std::to_string(x0 + b * kBar) + "\" y=\"" + std::to_string(base - h) +
               "\" width=\"" + std::to_string(kBar - 2) + "\" height=\"" + std::to_string(h) + "\" fill=\"" +
               colors[b] + "\"><title>" + names[b] + " " + fixed(values[b], 3) + "</title></rect>\n";
      }
    } else {
      svg += "    <text x=\"" + std::to_string(x0 + 3 * kBar / 2) + "\" y=\"" + std::to_string(base - 8) +
             "\" text-anchor=\"middle\" fill=\"#aa0000\">failed</text>\n";
    }
    svg += "    <text x=\"" + std::to_string(x0 + 3 * kBar / 2) + "\" y=\"" + std::to_string(base + 18) +
           "\" text-anchor=\"middle\">" + xml_escape(e.label) + "</text>\n";
    svg += "  </g>\n";
  }
  for (int b = 0; b < 3; ++b) {
    const int y = kTop + b * 18;
    svg += "  <rect x=\"" + std::to_string(width - 100) + "\" y=\"" + std::to_string(y) +
           "\" width=\"12\" height=\"12\" fill=\"" + colors[b] + "\"/>\n";
    svg += "  <text x=\"" + std::to_string(width - 82) + "\" y=\"" + std::to_string(y + 10) + "\">" + names[b] +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace kc::eval
