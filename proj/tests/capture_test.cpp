#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "kc/capture.hpp"
#include "kc/turtle.hpp"
#include "support/generators.hpp"

namespace kc::capture {
namespace {

namespace fs = std::filesystem;
using rdf::Graph;
using rdf::Term;
using rdf::Triple;

const onto::OntologySchema& schema() { return onto::default_schema(); }
const std::string kKnow(rdf::vocab::kKnow);

Graph ttl(const std::string& text) { return rdf::parse_turtle(text, rdf::default_prefixes()); }
Term person(const std::string& slug) { return Term::iri("urn:kc:person:" + slug); }
Triple T(const Term& s, const std::string& p, const Term& o) { return Triple(s, Term::iri(kKnow + p), o); }

void expect_status_invariants(const CaptureResult& r) {
  EXPECT_EQ(r.status == CaptureStatus::kEmpty, r.parsed && r.parsed->empty());
  EXPECT_EQ(r.status == CaptureStatus::kRejected, !r.parsed || !r.validation.ok());
  if (r.status == CaptureStatus::kCaptured) {
    ASSERT_TRUE(r.materialized);
    EXPECT_TRUE(onto::validate(*r.materialized, schema()).ok());
  } else {
    EXPECT_FALSE(r.materialized);
  }
  EXPECT_FALSE(r.diagnostic().empty());
}

TEST(Capture, FatherPromptThroughZeroNoiseOracle) {
  const model::OracleBackend oracle({}, schema(), rdf::CanonicalMode::kStrict);
  const model::Request request{"f1", "My father is Robert.",
                               ttl("_:me know:father _:r . _:r a know:Person ; know:name \"Robert\" .")};
  const CaptureResult r = capture(request, oracle, "sys", schema());
  ASSERT_EQ(r.status, CaptureStatus::kCaptured) << r.diagnostic();
  EXPECT_EQ(r.source, "f1");
  const Graph& m = *r.materialized;
  // By hand: father is a subproperty of parent, parent is the inverse of
  // child, and a father is male.
  EXPECT_TRUE(m.contains(T(person("me"), "father", person("robert"))));
  EXPECT_TRUE(m.contains(T(person("robert"), "child", person("me"))));
  EXPECT_TRUE(m.contains(T(person("me"), "parent", person("robert"))));
  EXPECT_TRUE(m.contains(T(person("robert"), "sex", Term::iri(kKnow + "Male"))));
  EXPECT_EQ(m.size(), 6u);
  expect_status_invariants(r);
}

TEST(Capture, GenericPromptIsEmpty) {
  const model::OracleBackend oracle({}, schema());
  const CaptureResult r = capture({"", "What's the weather?", Graph{}}, oracle, "sys", schema());
  EXPECT_EQ(r.status, CaptureStatus::kEmpty);
  EXPECT_EQ(r.parsed->size(), 0u);
  EXPECT_TRUE(r.source.starts_with("prompt:"));
  EXPECT_EQ(r.source, prompt_source("What's the weather?"));
  expect_status_invariants(r);
  EXPECT_EQ(capture_text("# no facts here\n", schema()).status, CaptureStatus::kEmpty);
}

TEST(Capture, BrokenTurtleIsRejectedWithSyntaxDiagnostic) {
  const CaptureResult r = capture_text("not turtle at all {", schema());
  EXPECT_EQ(r.status, CaptureStatus::kRejected);
  EXPECT_FALSE(r.parsed);
  EXPECT_NE(r.diagnostic().find("syntax error at 1:"), std::string::npos) << r.diagnostic();
  expect_status_invariants(r);
}

TEST(Capture, SchemaViolationsAreRejected) {
  const CaptureResult two_fathers = capture_text(
      "_:me know:father _:a , _:b . _:a know:name \"A\" . _:b know:name \"B\" .", schema());
  EXPECT_EQ(two_fathers.status, CaptureStatus::kRejected);
  EXPECT_EQ(two_fathers.validation.count(onto::ViolationKind::kFunctionalViolation), 1u);
  expect_status_invariants(two_fathers);

  const CaptureResult unknown = capture_text("_:me know:uncle _:u .", schema());
  EXPECT_EQ(unknown.validation.count(onto::ViolationKind::kUnknownPredicate), 1u);
  EXPECT_NE(unknown.diagnostic().find("unknown-predicate"), std::string::npos);

  const CaptureResult ambiguous = capture_text("_:a know:name \"Jo\" . _:b know:name \"Jo\" .", schema());
  EXPECT_EQ(ambiguous.status, CaptureStatus::kRejected);
  EXPECT_EQ(ambiguous.validation.count(onto::ViolationKind::kAmbiguousName), 1u);
  expect_status_invariants(ambiguous);
}

TEST(Capture, StatusInvariantsOnRandomResponses) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> fragments = {"_:me", "know:father", "know:knows", "know:name", "\"Ann\"",
                                              "\"Bo\"", "_:x", "_:y", ".", ";", ",", "a", "know:Person",
                                              "know:sex", "know:Male", "know:Female", "[", "]", "foo:bar"};
  for (int i = 0; i < 2000; ++i) {
    std::string text;
    const std::size_t n = kc::testing::pick(rng, 14);
    for (std::size_t j = 0; j < n; ++j) text += fragments[kc::testing::pick(rng, fragments.size())] + " ";
    expect_status_invariants(capture_text(text, schema()));
  }
}

CaptureResult captured(const std::string& text, const std::string& source) {
  CaptureResult r = capture_text(text, schema(), source);
  EXPECT_EQ(r.status, CaptureStatus::kCaptured) << r.diagnostic();
  return r;
}

void expect_store_invariants(const Store& s) {
  EXPECT_TRUE(onto::validate(s.graph, schema()).ok()) << onto::validate(s.graph, schema()).summary();
  EXPECT_EQ(onto::materialize(s.graph, schema()), s.graph);
  for (const auto& [t, entries] : s.provenance) EXPECT_TRUE(s.graph.contains(t));
}

TEST(Merge, EmptyStoreThenSameResultAgain) {
  Store store;
  const auto r = captured("_:me know:sister _:s . _:s know:name \"Sue\" .", "a");
  const auto first = merge(store, r, schema());
  EXPECT_EQ(first.added, r.materialized->size());
  EXPECT_EQ(first.duplicates, 0u);
  const Store snapshot = store;
  const auto second = merge(store, r, schema());
  EXPECT_EQ(second.added, 0u);
  EXPECT_EQ(second.duplicates, r.materialized->size());
  EXPECT_EQ(store.graph, snapshot.graph);
  expect_store_invariants(store);
}

TEST(Merge, RejectConflictsLeavesStoreUntouched) {
  Store store;
  merge(store, captured("_:me know:father _:r . _:r know:name \"Robert\" .", "a"), schema());
  const Store before = store;
  try {
    merge(store, captured("_:me know:father _:j . _:j know:name \"James\" .", "b"), schema());
    FAIL();
  } catch (const PolicyViolation& e) {
    bool functional = false;
    for (const auto& v : e.report().conflicts) functional |= v.kind == onto::ViolationKind::kFunctionalViolation;
    EXPECT_TRUE(functional);
  }
  EXPECT_EQ(store, before);
  EXPECT_TRUE(onto::validate(store.graph, schema()).ok());
}

TEST(Merge, KeepExistingAndKeepNew) {
  Store base;
  merge(base, captured("_:me know:father _:r . _:r know:name \"Robert\" .", "a"), schema(), {.timestamp = "t1"});
  const auto incoming = captured("_:me know:father _:j . _:j know:name \"James\" ; know:knows _:me .", "b");

  Store keep_existing = base;
  const auto r1 = merge(keep_existing, incoming, schema(), {MergePolicy::kKeepExisting, "t2"});
  EXPECT_TRUE(keep_existing.graph.contains(T(person("me"), "father", person("robert"))));
  EXPECT_FALSE(keep_existing.graph.contains(T(person("me"), "father", person("james"))));
  EXPECT_TRUE(keep_existing.graph.contains(T(person("james"), "knows", person("me"))));
  EXPECT_GT(r1.dropped, 0u);
  EXPECT_EQ(r1.added + r1.duplicates + r1.dropped, incoming.materialized->size());
  EXPECT_EQ(r1.removed, 0u);
  expect_store_invariants(keep_existing);

  Store keep_new = base;
  const auto r2 = merge(keep_new, incoming, schema(), {MergePolicy::kKeepNew, "t2"});
  EXPECT_TRUE(keep_new.graph.contains(T(person("me"), "father", person("james"))));
  EXPECT_FALSE(keep_new.graph.contains(T(person("me"), "father", person("robert"))));
  // consequences of the displaced triple go with it
  EXPECT_FALSE(keep_new.graph.contains(T(person("robert"), "child", person("me"))));
  EXPECT_TRUE(keep_new.graph.contains(T(person("robert"), "name", Term::literal("Robert"))));
  EXPECT_EQ(r2.added + r2.duplicates, incoming.materialized->size());
  EXPECT_GT(r2.removed, 0u);
  expect_store_invariants(keep_new);
}

TEST(Merge, AnonymousNodesStayApartAcrossCaptures) {
  Store store;
  merge(store, captured("_:me know:knows _:x .", "a"), schema());
  merge(store, captured("_:me know:knows _:x .", "b"), schema());
  std::size_t knows = 0;
  for (const auto& t : store.graph) knows += t.predicate.value() == kKnow + "knows" ? 1 : 0;
  EXPECT_EQ(knows, 2u);
}

TEST(Merge, ProvenanceRecordsEveryOccurrence) {
  Store store;
  const auto r = captured("_:me know:brother _:b . _:b know:name \"Ben\" .", "s1");
  merge(store, r, schema(), {.timestamp = "2024-01-01T00:00:00Z"});
  merge(store, captured("_:me know:brother _:b . _:b know:name \"Ben\" ; a know:Person .", "s2"), schema(),
        {.timestamp = "2024-01-02T00:00:00Z"});
  const auto& entries = store.provenance.at(T(person("me"), "brother", person("ben")));
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0], (ProvenanceEntry{"s1", "2024-01-01T00:00:00Z", true}));
  EXPECT_EQ(entries[1].source, "s2");
  const auto& inferred = store.provenance.at(T(person("me"), "sibling", person("ben")));
  EXPECT_FALSE(inferred[0].asserted);
  EXPECT_EQ(store.asserted().size(), 3u);
}

TEST(Merge, RandomSequencesKeepTheStoreClosedAndValid) {
  for (MergePolicy policy : {MergePolicy::kRejectConflicts, MergePolicy::kKeepExisting, MergePolicy::kKeepNew}) {
    std::mt19937_64 rng(31);
    Store store;
    std::size_t conflicts = 0;
    for (int i = 0; i < 60; ++i) {
      const Graph g = kc::testing::random_valid_graph(rng, 6);
      const auto r = capture_text(rdf::serialize_turtle(g, rdf::default_prefixes()), schema(), "r" + std::to_string(i));
      if (r.status != CaptureStatus::kCaptured) continue;
      const Store before = store;
      try {
        const auto report = merge(store, r, schema(), {policy, "t"});
        EXPECT_EQ(report.added + report.duplicates + report.dropped, r.materialized->size());
        conflicts += report.conflicts.empty() ? 0 : 1;
      } catch (const PolicyViolation&) {
        EXPECT_EQ(policy, MergePolicy::kRejectConflicts);
        EXPECT_EQ(store, before);
        ++conflicts;
      }
      expect_store_invariants(store);
      // merging again never adds anything
      if (policy == MergePolicy::kRejectConflicts && !(store == before)) {
        EXPECT_EQ(merge(store, r, schema(), {policy, "t"}).added, 0u);
      }
    }
    EXPECT_GT(conflicts, 0u) << "the sequence should exercise the conflict path";
  }
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / "kc_capture_test";
  TempDir() {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

TEST(Persistence, SaveLoadRoundTrip) {
  TempDir dir;
  Store store;
  merge(store, captured("_:me know:mother _:m . _:m know:name \"Mía \\\"Q\\\"\" .", "s1"), schema(),
        {.timestamp = "t1"});
  merge(store, captured("_:me know:knows _:x . _:x know:knows _:me .", "s2"), schema(), {.timestamp = "t2"});
  const fs::path path = dir.path / "kg.ttl";
  save_store(store, path);
  EXPECT_TRUE(fs::exists(provenance_path(path)));
  EXPECT_FALSE(fs::exists(dir.path / "kg.ttl.tmp"));
  const Store loaded = load_store(path, schema());
  EXPECT_EQ(loaded.graph, store.graph);
  ASSERT_EQ(loaded.provenance.size(), store.provenance.size());
  for (const auto& [t, entries] : store.provenance) {
    const auto& other = loaded.provenance.at(t);
    ASSERT_EQ(other.size(), entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      EXPECT_EQ(other[i].source, entries[i].source);
      EXPECT_EQ(other[i].timestamp, entries[i].timestamp);
      EXPECT_EQ(other[i].asserted, entries[i].asserted);
    }
  }
  // the file itself is canonical: saving again is byte-identical
  const fs::path again = dir.path / "kg2.ttl";
  save_store(loaded, again);
  std::ifstream a(path), b(again);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Persistence, MissingFileIsEmptyStore) {
  TempDir dir;
  EXPECT_EQ(load_store(dir.path / "none.ttl", schema()), Store{});
}

TEST(Persistence, HandEditedViolationsAreReported) {
  TempDir dir;
  const fs::path path = dir.path / "bad.ttl";
  std::ofstream(path) << "@prefix know: <https://know.dev/> .\n"
                         "<urn:kc:person:me> know:father <urn:kc:person:a>, <urn:kc:person:b> .\n";
  try {
    load_store(path, schema());
    FAIL();
  } catch (const onto::InvalidInput& e) {
    EXPECT_EQ(e.report().count(onto::ViolationKind::kFunctionalViolation), 1u);
    EXPECT_NE(std::string(e.what()).find("urn:kc:person:b"), std::string::npos);
  }
}

TEST(Persistence, StrayProvenanceIsAnError) {
  TempDir dir;
  const fs::path path = dir.path / "kg.ttl";
  std::ofstream(path) << "<urn:kc:person:me> <https://know.dev/knows> <urn:kc:person:x> .\n";
  std::ofstream(provenance_path(path))
      << R"({"triple":"<urn:kc:person:me> <https://know.dev/knows> <urn:kc:person:y> .","source":"s","timestamp":"t","asserted":true})"
      << "\n";
  EXPECT_THROW(load_store(path, schema()), IoError);
}

}  // namespace
}  // namespace kc::capture
