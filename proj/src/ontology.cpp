#include "kc/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <deque>
#include <fstream>
#include <sstream>

#include "kc/bundled_data.hpp"
#include "kc/turtle.hpp"

namespace kc::onto {

namespace {

using rdf::Graph;
using rdf::Term;
using rdf::Triple;

std::string rdfs(std::string_view local) { return std::string(rdf::vocab::kRdfs) + std::string(local); }
std::string owl(std::string_view local) { return std::string(rdf::vocab::kOwl) + std::string(local); }
std::string xsd(std::string_view local) { return std::string(rdf::vocab::kXsd) + std::string(local); }
std::string kcv(std::string_view local) { return std::string(rdf::vocab::kKc) + std::string(local); }

const std::string& type_iri() {
  static const std::string iri(rdf::vocab::kRdfType);
  return iri;
}

bool is_known_datatype(const std::string& iri) {
  static const std::set<std::string> known = {
      xsd("string"),  xsd("integer"), xsd("decimal"), xsd("double"),   xsd("float"),
      xsd("boolean"), xsd("date"),    xsd("dateTime"), xsd("gYear"),  xsd("anyURI"),
      xsd("nonNegativeInteger"), xsd("positiveInteger"), xsd("time"),
  };
  return known.contains(iri);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string short_form(const std::string& iri) { return std::string(rdf::local_name(iri)); }

std::string show(const Triple& t) { return rdf::to_ntriples(t); }

// Rejects p -> q -> ... -> p chains in a single-parent hierarchy.
void check_acyclic(const std::map<std::string, std::optional<std::string>>& parent,
                   std::string_view what) {
  for (const auto& [start, _] : parent) {
    std::set<std::string> seen{start};
    std::string path = short_form(start);
    auto it = parent.find(start);
    while (it != parent.end() && it->second) {
      const std::string& next = *it->second;
      path += " -> " + short_form(next);
      if (!seen.insert(next).second)
        throw SchemaError(std::string(what) + " cycle: " + path);
      it = parent.find(next);
    }
  }
}

}  // namespace

const ObjectPropertyDef* OntologySchema::object_property(std::string_view iri) const {
  const auto it = object_properties_.find(std::string(iri));
  return it == object_properties_.end() ? nullptr : &it->second;
}

const DataPropertyDef* OntologySchema::data_property(std::string_view iri) const {
  const auto it = data_properties_.find(std::string(iri));
  return it == data_properties_.end() ? nullptr : &it->second;
}

bool OntologySchema::has_property(std::string_view iri) const {
  return object_property(iri) != nullptr || data_property(iri) != nullptr;
}

bool OntologySchema::is_subclass_of(const std::string& sub, const std::string& super) const {
  if (sub == super) return true;
  const auto it = superclasses_.find(sub);
  return it != superclasses_.end() && it->second.contains(super);
}

std::vector<std::string> OntologySchema::superproperties(const std::string& iri) const {
  std::vector<std::string> out;
  const ObjectPropertyDef* p = object_property(iri);
  while (p && p->subproperty_of) {
    out.push_back(*p->subproperty_of);
    p = object_property(*p->subproperty_of);
  }
  return out;
}

std::vector<std::string> OntologySchema::concept_tags() const {
  std::set<std::string> domain_classes;
  for (const auto& [iri, def] : object_properties_)
    if (!def.domain.empty()) domain_classes.insert(def.domain);
  for (const auto& [iri, def] : data_properties_)
    if (!def.domain.empty()) domain_classes.insert(def.domain);

  std::vector<std::string> tags;
  auto add = [&](const std::string& iri) {
    std::string tag = lower(rdf::local_name(iri));
    if (std::find(tags.begin(), tags.end(), tag) == tags.end()) tags.push_back(std::move(tag));
  };
  for (const auto& c : domain_classes) add(c);
  for (const auto& [iri, def] : data_properties_) add(iri);
  for (const auto& [iri, def] : object_properties_) add(iri);
  return tags;
}

std::string OntologySchema::hash() const {
  const std::string text = rdf::serialize_turtle(source_, {});
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

OntologySchema load_schema(const Graph& graph, const SchemaOptions& options) {
  OntologySchema schema;
  schema.source_ = graph;

  std::set<Triple> consumed;
  std::map<std::string, std::set<std::string>> types;  // subject -> rdf:type objects
  for (const auto& t : graph)
    if (t.predicate.value() == type_iri() && t.object.is_iri() && !t.subject.is_literal())
      types[t.subject.is_blank() ? "_:" + t.subject.value() : t.subject.value()].insert(t.object.value());
  auto node_key = [](const Term& t) { return t.is_blank() ? "_:" + t.value() : t.value(); };

  // Declarations
  for (const auto& t : graph) {
    if (t.predicate.value() != type_iri() || !t.object.is_iri()) continue;
    const std::string& type = t.object.value();
    const std::string subject = node_key(t.subject);
    bool used = true;
    if (type == owl("Class") && t.subject.is_iri()) {
      schema.classes_.insert(subject);
    } else if (type == owl("ObjectProperty") && t.subject.is_iri()) {
      schema.object_properties_[subject].iri = subject;
    } else if (type == owl("DatatypeProperty") && t.subject.is_iri()) {
      schema.data_properties_[subject].iri = subject;
    } else if (type == owl("SymmetricProperty") || type == owl("FunctionalProperty") ||
               type == owl("NamedIndividual") || type == kcv("NameProperty") ||
               type == kcv("ImplicationRule")) {
      // handled below once every declaration is known
    } else {
      used = false;
    }
    if (used) consumed.insert(t);
  }

  for (const auto& [iri, def] : schema.object_properties_)
    if (schema.data_properties_.contains(iri))
      throw SchemaError(short_form(iri) + " is declared both object and datatype property");

  for (const auto& t : graph) {
    if (t.predicate.value() != type_iri() || !t.object.is_iri()) continue;
    const std::string& type = t.object.value();
    const std::string subject = node_key(t.subject);
    if (type == owl("SymmetricProperty")) {
      auto it = schema.object_properties_.find(subject);
      if (it == schema.object_properties_.end())
        throw SchemaError(short_form(subject) + " is symmetric but not an object property");
      it->second.symmetric = true;
    } else if (type == owl("FunctionalProperty")) {
      if (auto it = schema.object_properties_.find(subject); it != schema.object_properties_.end())
        it->second.functional = true;
      else if (auto dt = schema.data_properties_.find(subject); dt != schema.data_properties_.end())
        dt->second.functional = true;
      else
        throw SchemaError(short_form(subject) + " is functional but not a declared property");
    } else if (type == owl("NamedIndividual")) {
      std::string klass;
      for (const auto& other : types[subject]) {
        if (schema.classes_.contains(other)) {
          if (!klass.empty() && klass != other)
            throw SchemaError("individual " + short_form(subject) + " has several classes");
          klass = other;
        }
      }
      schema.individuals_[subject] = klass;
    } else if (type == kcv("NameProperty")) {
      if (!schema.data_properties_.contains(subject))
        throw SchemaError(short_form(subject) + " is marked as the name property but is not a datatype property");
      if (!schema.name_property_.empty() && schema.name_property_ != subject)
        throw SchemaError("more than one name property declared");
      schema.name_property_ = subject;
    }
  }
  // rdf:type triples naming an individual's class
  for (const auto& t : graph)
    if (t.predicate.value() == type_iri() && t.object.is_iri() &&
        schema.individuals_.contains(node_key(t.subject)) && schema.classes_.contains(t.object.value()))
      consumed.insert(t);

  auto object_def = [&](const std::string& iri) -> ObjectPropertyDef* {
    const auto it = schema.object_properties_.find(iri);
    return it == schema.object_properties_.end() ? nullptr : &it->second;
  };
  auto data_def = [&](const std::string& iri) -> DataPropertyDef* {
    const auto it = schema.data_properties_.find(iri);
    return it == schema.data_properties_.end() ? nullptr : &it->second;
  };

  // Axioms
  std::map<std::string, std::optional<std::string>> super_property;
  std::map<std::string, std::set<std::string>> direct_superclasses;
  std::map<std::string, std::string> declared_inverse;
  for (const auto& t : graph) {
    const std::string& p = t.predicate.value();
    const std::string subject = node_key(t.subject);
    if (!t.object.is_iri()) continue;
    const std::string& object = t.object.value();
    if (p == rdfs("domain")) {
      if (auto* op = object_def(subject)) op->domain = object;
      else if (auto* dp = data_def(subject)) dp->domain = object;
      else throw SchemaError("rdfs:domain on undeclared property " + short_form(subject));
    } else if (p == rdfs("range")) {
      if (auto* op = object_def(subject)) op->range = object;
      else if (auto* dp = data_def(subject)) dp->datatype = object;
      else throw SchemaError("rdfs:range on undeclared property " + short_form(subject));
    } else if (p == rdfs("subPropertyOf")) {
      auto* op = object_def(subject);
      if (!op || !object_def(object))
        throw SchemaError("rdfs:subPropertyOf must relate two object properties: " + show(t));
      if (op->subproperty_of && *op->subproperty_of != object)
        throw SchemaError(short_form(subject) + " has more than one superproperty");
      op->subproperty_of = object;
      super_property[subject] = object;
    } else if (p == rdfs("subClassOf")) {
      if (!schema.classes_.contains(subject) || !schema.classes_.contains(object))
        throw SchemaError("rdfs:subClassOf must relate two declared classes: " + show(t));
      direct_superclasses[subject].insert(object);
    } else if (p == owl("inverseOf")) {
      if (!schema.object_property(subject) || !schema.object_property(object))
        throw SchemaError("owl:inverseOf must relate two object properties: " + show(t));
      if (auto [it, fresh] = declared_inverse.emplace(subject, object); !fresh && it->second != object)
        throw SchemaError("inconsistent inverse: " + short_form(subject) + " is declared inverse of both " +
                          short_form(it->second) + " and " + short_form(object));
    } else {
      continue;
    }
    consumed.insert(t);
  }

  // inverse(inverse(p)) == p
  for (const auto& [p, q] : declared_inverse) {
    const auto back = declared_inverse.find(q);
    if (back != declared_inverse.end() && back->second != p)
      throw SchemaError("inconsistent inverse: inverse(" + short_form(p) + ") = " + short_form(q) +
                        " but inverse(" + short_form(q) + ") = " + short_form(back->second));
  }
  for (const auto& [p, q] : declared_inverse) {
    object_def(p)->inverse_of = q;
    object_def(q)->inverse_of = p;
  }

  check_acyclic(super_property, "subproperty");

  // Transitive superclasses, with cycle detection by depth-first walk.
  for (const auto& c : schema.classes_) {
    std::set<std::string> reach;
    std::vector<std::string> stack(direct_superclasses[c].begin(), direct_superclasses[c].end());
    while (!stack.empty()) {
      std::string next = stack.back();
      stack.pop_back();
      if (next == c) throw SchemaError("subclass cycle through " + short_form(c));
      if (!reach.insert(next).second) continue;
      for (const auto& s : direct_superclasses[next]) stack.push_back(s);
    }
    if (!reach.empty()) schema.superclasses_[c] = std::move(reach);
  }

  for (const auto& [iri, def] : schema.object_properties_) {
    if (!def.domain.empty() && !schema.classes_.contains(def.domain))
      throw SchemaError("domain of " + short_form(iri) + " is not a declared class: " + def.domain);
    if (!def.range.empty() && !schema.classes_.contains(def.range))
      throw SchemaError("range of " + short_form(iri) + " is not a declared class: " + def.range);
    if (def.functional && def.symmetric && !options.allow_functional_symmetric)
      throw SchemaError(short_form(iri) + " is both functional and symmetric");
  }
  for (const auto& [iri, def] : schema.data_properties_) {
    if (!def.domain.empty() && !schema.classes_.contains(def.domain))
      throw SchemaError("domain of " + short_form(iri) + " is not a declared class: " + def.domain);
    if (!is_known_datatype(def.datatype))
      throw SchemaError("datatype of " + short_form(iri) + " is not a recognized XSD type: " + def.datatype);
  }

  if (schema.name_property_.empty() && schema.data_properties_.size() == 1)
    schema.name_property_ = schema.data_properties_.begin()->first;

  // Implication rules
  std::map<std::string, ImplicationRule> rules;
  std::set<std::string> rule_nodes;
  for (const auto& [node, node_types] : types)
    if (node_types.contains(kcv("ImplicationRule"))) rule_nodes.insert(node);
  std::map<std::string, std::set<std::string>> seen_fields;
  for (const auto& t : graph) {
    const std::string subject = node_key(t.subject);
    if (!rule_nodes.contains(subject)) continue;
    const std::string& p = t.predicate.value();
    ImplicationRule& rule = rules[subject];
    if (p != type_iri() && !seen_fields[subject].insert(p).second)
      throw SchemaError("implication rule repeats " + short_form(p));
    if (p == kcv("onPredicate") && t.object.is_iri()) {
      rule.on_predicate = t.object.value();
    } else if (p == kcv("focus") && t.object.is_iri()) {
      if (t.object.value() == kcv("subject")) rule.focus = RuleFocus::kSubject;
      else if (t.object.value() == kcv("object")) rule.focus = RuleFocus::kObject;
      else throw SchemaError("kc:focus must be kc:subject or kc:object");
    } else if (p == kcv("impliesPredicate") && t.object.is_iri()) {
      rule.implies_predicate = t.object.value();
    } else if (p == kcv("impliesObject")) {
      rule.implies_object = t.object;
    } else if (p != type_iri()) {
      continue;
    }
    consumed.insert(t);
  }
  for (auto& [node, rule] : rules) {
    auto known = [&](const std::string& iri) { return schema.has_property(iri) || iri == type_iri(); };
    if (rule.on_predicate.empty() || rule.implies_predicate.empty())
      throw SchemaError("implication rule " + node + " needs kc:onPredicate and kc:impliesPredicate");
    if (!known(rule.on_predicate) || !known(rule.implies_predicate))
      throw SchemaError("implication rule " + node + " refers to an undeclared property");
    schema.rules_.push_back(std::move(rule));
  }

  for (const auto& t : graph)
    if (!consumed.contains(t)) schema.ignored_.push_back(t);
  return schema;
}

OntologySchema load_schema_file(const std::filesystem::path& path, const SchemaOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read schema file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return load_schema(rdf::parse_turtle(text.str(), rdf::default_prefixes()), options);
  } catch (const SyntaxError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const UnknownPrefix& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

const std::string& default_schema_turtle() {
  static const std::string text(bundled::kSchemaTurtle);
  return text;
}

const OntologySchema& default_schema() {
  static const OntologySchema schema =
      load_schema(rdf::parse_turtle(default_schema_turtle(), rdf::default_prefixes()));
  return schema;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kUnknownPredicate: return "unknown-predicate";
    case ViolationKind::kUnknownClass: return "unknown-class";
    case ViolationKind::kDomainViolation: return "domain-violation";
    case ViolationKind::kRangeViolation: return "range-violation";
    case ViolationKind::kLiteralWhereIriExpected: return "literal-where-iri-expected";
    case ViolationKind::kFunctionalViolation: return "functional-violation";
    case ViolationKind::kAmbiguousName: return "ambiguous-name";
  }
  return "unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                [&](const Violation& v) { return v.kind == kind; }));
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& v : violations) {
    out += std::string(to_string(v.kind)) + ": " + v.message + "\n";
    for (const auto& t : v.triples) out += "    " + rdf::to_ntriples(t) + "\n";
  }
  return out;
}

InvalidInput::InvalidInput(ValidationReport report)
    : Error("graph does not validate against the schema:\n" + report.summary()),
      report_(std::move(report)) {}

namespace {

// Consequences of a single triple under every single-premise rule.
void consequences(const Triple& t, const OntologySchema& schema, std::vector<Triple>& out) {
  const std::string& p = t.predicate.value();
  if (const ObjectPropertyDef* op = schema.object_property(p); op && !t.object.is_literal()) {
    if (op->symmetric) out.emplace_back(t.object, t.predicate, t.subject);
    if (op->inverse_of) out.emplace_back(t.object, Term::iri(*op->inverse_of), t.subject);
    if (op->subproperty_of) out.emplace_back(t.subject, Term::iri(*op->subproperty_of), t.object);
  }
  for (const auto& rule : schema.rules()) {
    if (rule.on_predicate != p) continue;
    const Term& focus = rule.focus == RuleFocus::kSubject ? t.subject : t.object;
    const Term& other = rule.focus == RuleFocus::kSubject ? t.object : t.subject;
    if (focus.is_literal()) continue;
    out.emplace_back(focus, Term::iri(rule.implies_predicate), rule.implies_object.value_or(other));
  }
}

}  // namespace

Graph close_under_rules(const Graph& graph, const OntologySchema& schema) {
  Graph out = graph;
  std::deque<Triple> pending(graph.begin(), graph.end());
  std::vector<Triple> derived;
  while (!pending.empty()) {
    const Triple t = std::move(pending.front());
    pending.pop_front();
    derived.clear();
    consequences(t, schema, derived);
    for (auto& d : derived)
      if (out.insert(d)) pending.push_back(std::move(d));
  }
  return out;
}

ValidationReport validate(const Graph& graph, const OntologySchema& schema) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::vector<Triple> triples, std::string message) {
    report.violations.push_back({kind, std::move(triples), std::move(message)});
  };

  for (const auto& t : graph) {
    const std::string& p = t.predicate.value();
    if (p == type_iri()) {
      if (!t.object.is_iri() || !schema.classes().contains(t.object.value()))
        add(ViolationKind::kUnknownClass, {t}, "type is not a schema class");
    } else if (schema.object_property(p)) {
      if (t.object.is_literal())
        add(ViolationKind::kLiteralWhereIriExpected, {t},
            short_form(p) + " is an object property but the object is a literal");
    } else if (const DataPropertyDef* dp = schema.data_property(p)) {
      if (!t.object.is_literal()) {
        add(ViolationKind::kRangeViolation, {t}, short_form(p) + " expects a literal");
      } else {
        const std::string dt = t.object.datatype().empty() ? xsd("string") : t.object.datatype();
        if (dt != dp->datatype)
          add(ViolationKind::kRangeViolation, {t},
              short_form(p) + " expects " + short_form(dp->datatype) + " literals");
      }
    } else {
      add(ViolationKind::kUnknownPredicate, {t}, "predicate " + short_form(p) + " is not in the schema");
    }
  }

  const Graph closure = close_under_rules(graph, schema);

  std::map<Term, std::set<std::string>> node_types;
  for (const auto& t : closure)
    if (t.predicate.value() == type_iri() && t.object.is_iri() && schema.classes().contains(t.object.value()))
      node_types[t.subject].insert(t.object.value());
  for (const auto& [iri, klass] : schema.individuals())
    if (!klass.empty()) node_types[Term::iri(iri)].insert(klass);

  auto violates = [&](const Term& node, const std::string& expected) {
    if (expected.empty() || node.is_literal()) return false;
    const auto it = node_types.find(node);
    if (it == node_types.end()) return false;  // open world: untyped nodes are fine
    return std::none_of(it->second.begin(), it->second.end(),
                        [&](const std::string& c) { return schema.is_subclass_of(c, expected); });
  };

  std::map<std::pair<Term, std::string>, std::vector<Triple>> functional_uses;
  for (const auto& t : closure) {
    const std::string& p = t.predicate.value();
    const std::string suffix = graph.contains(t) ? "" : " (inferred)";
    std::string domain;
    bool functional = false;
    if (const ObjectPropertyDef* op = schema.object_property(p)) {
      domain = op->domain;
      functional = op->functional;
      if (!t.object.is_literal() && violates(t.object, op->range))
        add(ViolationKind::kRangeViolation, {t},
            "object of " + short_form(p) + " is not a " + short_form(op->range) + suffix);
    } else if (const DataPropertyDef* dp = schema.data_property(p)) {
      domain = dp->domain;
      functional = dp->functional;
    } else {
      continue;
    }
    if (violates(t.subject, domain))
      add(ViolationKind::kDomainViolation, {t},
          "subject of " + short_form(p) + " is not a " + short_form(domain) + suffix);
    if (functional) functional_uses[{t.subject, p}].push_back(t);
  }
  for (auto& [key, triples] : functional_uses) {
    if (triples.size() < 2) continue;
    add(ViolationKind::kFunctionalViolation, triples,
        short_form(key.second) + " is functional but " + rdf::to_ntriples(key.first) + " has " +
            std::to_string(triples.size()) + " distinct values");
  }
  return report;
}

Graph materialize(const Graph& graph, const OntologySchema& schema) {
  ValidationReport report = validate(graph, schema);
  if (!report.ok()) throw InvalidInput(std::move(report));
  return close_under_rules(graph, schema);
}

std::string concept_of(const Triple& triple, const OntologySchema& schema) {
  const std::string& p = triple.predicate.value();
  if (p == type_iri()) {
    if (!triple.object.is_iri()) return std::string(kNoConcept);
    const std::string& klass = triple.object.value();
    const auto is_domain = [&](const auto& defs) {
      return std::any_of(defs.begin(), defs.end(), [&](const auto& d) { return d.second.domain == klass; });
    };
    const bool tagged = schema.classes().contains(klass) &&
                        (is_domain(schema.object_properties()) || is_domain(schema.data_properties()));
    return tagged ? lower(rdf::local_name(klass)) : std::string(kNoConcept);
  }
  if (schema.has_property(p)) return lower(rdf::local_name(p));
  return std::string(kNoConcept);
}

}  // namespace kc::onto
