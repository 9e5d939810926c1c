#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kc/error.hpp"
#include "kc/graph_ops.hpp"
#include "kc/rdf.hpp"

namespace kc::onto {

struct ObjectPropertyDef {
  std::string iri;
  std::string domain;  // empty = unconstrained
  std::string range;   // empty = unconstrained
  bool symmetric = false;
  bool functional = false;
  std::optional<std::string> inverse_of;
  std::optional<std::string> subproperty_of;
};

struct DataPropertyDef {
  std::string iri;
  std::string domain;
  std::string datatype{"http://www.w3.org/2001/XMLSchema#string"};
  bool functional = false;
};

enum class RuleFocus { kSubject, kObject };

/// Whenever `(x on_predicate y)` holds, the focus node (x or y) receives
/// `(focus implies_predicate implies_object)`. Without a fixed object the
/// other end of the matched triple is used.
struct ImplicationRule {
  std::string on_predicate;
  RuleFocus focus = RuleFocus::kSubject;
  std::string implies_predicate;
  std::optional<rdf::Term> implies_object;
};

struct SchemaOptions {
  bool allow_functional_symmetric = false;
};

class OntologySchema {
 public:
  const std::set<std::string>& classes() const { return classes_; }
  const std::map<std::string, ObjectPropertyDef>& object_properties() const { return object_properties_; }
  const std::map<std::string, DataPropertyDef>& data_properties() const { return data_properties_; }
  const std::map<std::string, std::string>& individuals() const { return individuals_; }
  const std::vector<ImplicationRule>& rules() const { return rules_; }
  const std::string& name_property() const { return name_property_; }
  // Schema triples outside the axiom vocabulary.
  const std::vector<rdf::Triple>& ignored() const { return ignored_; }
  const rdf::Graph& source() const { return source_; }

  const ObjectPropertyDef* object_property(std::string_view iri) const;
  const DataPropertyDef* data_property(std::string_view iri) const;
  bool has_property(std::string_view iri) const;

  // Reflexive-transitive subclass test.
  bool is_subclass_of(const std::string& sub, const std::string& super) const;
  // Transitive superproperties of `iri`, nearest first.
  std::vector<std::string> superproperties(const std::string& iri) const;

  /// Concept tags in display order: classes used as a property domain, then
  /// data properties, then object properties. `none` is not included.
  std::vector<std::string> concept_tags() const;

  // Hex FNV-1a of the canonical serialization of the source graph.
  std::string hash() const;

 private:
  friend OntologySchema load_schema(const rdf::Graph&, const SchemaOptions&);

  std::set<std::string> classes_;
  std::map<std::string, std::set<std::string>> superclasses_;  // transitive, excludes self
  std::map<std::string, ObjectPropertyDef> object_properties_;
  std::map<std::string, DataPropertyDef> data_properties_;
  std::map<std::string, std::string> individuals_;
  std::vector<ImplicationRule> rules_;
  std::string name_property_;
  std::vector<rdf::Triple> ignored_;
  rdf::Graph source_;
};

/// Reads a schema from the OWL-lite axiom vocabulary: owl:Class,
/// owl:ObjectProperty, owl:DatatypeProperty, owl:SymmetricProperty,
/// owl:FunctionalProperty, owl:NamedIndividual, rdfs:domain, rdfs:range,
/// rdfs:subPropertyOf, rdfs:subClassOf, owl:inverseOf, plus kc:NameProperty
/// and kc:ImplicationRule nodes (kc:onPredicate, kc:focus,
/// kc:impliesPredicate, kc:impliesObject).
///
/// Throws SchemaError for cyclic hierarchies, dangling domain/range
/// references, inconsistent inverses and malformed rules.
OntologySchema load_schema(const rdf::Graph& schema_graph, const SchemaOptions& options = {});
OntologySchema load_schema_file(const std::filesystem::path& path, const SchemaOptions& options = {});

// The bundled core-family schema.
const std::string& default_schema_turtle();
const OntologySchema& default_schema();

enum class ViolationKind {
  kUnknownPredicate,
  kUnknownClass,
  kDomainViolation,
  kRangeViolation,
  kLiteralWhereIriExpected,
  kFunctionalViolation,
  kAmbiguousName,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::vector<rdf::Triple> triples;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
  std::string summary() const;
};

/// Checks every triple against the schema. Domain, range and functional
/// checks run over the rule closure of the graph, so a clean report
/// guarantees the materialized graph is clean too.
ValidationReport validate(const rdf::Graph& graph, const OntologySchema& schema);

class InvalidInput : public Error {
 public:
  explicit InvalidInput(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Least fixpoint of the symmetric, inverse, subproperty and implication
/// rules. No precondition; triples a rule cannot form (literal subjects) are
/// skipped.
rdf::Graph close_under_rules(const rdf::Graph& graph, const OntologySchema& schema);

/// close_under_rules for graphs that validate cleanly; throws InvalidInput
/// otherwise.
rdf::Graph materialize(const rdf::Graph& graph, const OntologySchema& schema);

inline constexpr std::string_view kNoConcept = "none";

std::string concept_of(const rdf::Triple& triple, const OntologySchema& schema);

inline rdf::Graph canonicalize(const rdf::Graph& graph, const OntologySchema& schema,
                               rdf::CanonicalMode mode) {
  return rdf::canonicalize(graph, schema.name_property(), mode);
}

}  // namespace kc::onto
