#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace kc::rdf {

namespace vocab {
inline constexpr std::string_view kRdf = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
inline constexpr std::string_view kRdfs = "http://www.w3.org/2000/01/rdf-schema#";
inline constexpr std::string_view kOwl = "http://www.w3.org/2002/07/owl#";
inline constexpr std::string_view kXsd = "http://www.w3.org/2001/XMLSchema#";
inline constexpr std::string_view kKnow = "https://know.dev/";
inline constexpr std::string_view kKc = "urn:kc:vocab:";

inline constexpr std::string_view kRdfType = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
inline constexpr std::string_view kXsdString = "http://www.w3.org/2001/XMLSchema#string";
}  // namespace vocab

enum class TermKind { kIri, kBlank, kLiteral };

/// An RDF term. Prefixed names are expanded to IRIs before a Term exists, so
/// the value of an IRI term is always the full IRI.
///
/// Literals typed `xsd:string` are stored without a datatype; RDF 1.1 treats
/// `"x"` and `"x"^^xsd:string` as the same term.
class Term {
 public:
  Term() = default;

  static Term iri(std::string value);
  static Term blank(std::string label);
  static Term literal(std::string lexical, std::string language = {},
                      std::string datatype = {});

  TermKind kind() const { return kind_; }
  bool is_iri() const { return kind_ == TermKind::kIri; }
  bool is_blank() const { return kind_ == TermKind::kBlank; }
  bool is_literal() const { return kind_ == TermKind::kLiteral; }

  // IRI string, blank node label, or literal lexical form.
  const std::string& value() const { return value_; }
  const std::string& language() const { return language_; }
  const std::string& datatype() const { return datatype_; }

  friend auto operator<=>(const Term&, const Term&) = default;
  friend bool operator==(const Term&, const Term&) = default;

 private:
  TermKind kind_ = TermKind::kIri;
  std::string value_;
  std::string language_;
  std::string datatype_;
};

bool is_valid_iri(std::string_view iri);
bool is_valid_blank_label(std::string_view label);

/// N-Triples form of a term: `<iri>`, `_:label` or a quoted literal.
std::string to_ntriples(const Term& term);

struct Triple {
  Term subject;
  Term predicate;
  Term object;

  Triple() = default;
  // Throws std::invalid_argument if the subject is a literal or the
  // predicate is not an IRI.
  Triple(Term s, Term p, Term o);

  friend auto operator<=>(const Triple&, const Triple&) = default;
  friend bool operator==(const Triple&, const Triple&) = default;
};

std::string to_ntriples(const Triple& triple);

using PrefixMap = std::map<std::string, std::string>;

/// A set of triples plus prefix metadata. Equality ignores the prefixes.
class Graph {
 public:
  using const_iterator = std::set<Triple>::const_iterator;

  Graph() = default;
  explicit Graph(std::set<Triple> triples, PrefixMap prefixes = {})
      : triples_(std::move(triples)), prefixes_(std::move(prefixes)) {}

  // Returns false when the triple was already present.
  bool insert(Triple triple) { return triples_.insert(std::move(triple)).second; }
  bool erase(const Triple& triple) { return triples_.erase(triple) > 0; }
  bool contains(const Triple& triple) const { return triples_.contains(triple); }

  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }
  const_iterator begin() const { return triples_.begin(); }
  const_iterator end() const { return triples_.end(); }

  const std::set<Triple>& triples() const { return triples_; }
  const PrefixMap& prefixes() const { return prefixes_; }
  PrefixMap& prefixes() { return prefixes_; }

  // Blank node labels in subject or object position.
  std::set<std::string> blank_labels() const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.triples_ == b.triples_; }

 private:
  std::set<Triple> triples_;
  PrefixMap prefixes_;
};

/// rdf, rdfs, owl, xsd, know and kc, the prefixes every module assumes are
/// available when parsing model output or corpus records.
const PrefixMap& default_prefixes();

// Local part of an IRI: the text after the last '#', '/' or ':'.
std::string_view local_name(std::string_view iri);

}  // namespace kc::rdf
