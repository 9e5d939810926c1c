#include "kc/rdf.hpp"

#include <cstdio>
#include <stdexcept>

namespace kc::rdf {

namespace {

bool is_blank_char(char c, bool first) {
  const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
  if (first) return alnum || c == '_';
  return alnum || c == '_' || c == '.' || c == '-';
}

}  // namespace

Term Term::iri(std::string value) {
  if (!is_valid_iri(value)) throw std::invalid_argument("invalid IRI: '" + value + "'");
  Term t;
  t.kind_ = TermKind::kIri;
  t.value_ = std::move(value);
  return t;
}

Term Term::blank(std::string label) {
  if (!is_valid_blank_label(label))
    throw std::invalid_argument("invalid blank node label: '" + label + "'");
  Term t;
  t.kind_ = TermKind::kBlank;
  t.value_ = std::move(label);
  return t;
}

Term Term::literal(std::string lexical, std::string language, std::string datatype) {
  if (!language.empty() && !datatype.empty())
    throw std::invalid_argument("literal cannot carry both a language tag and a datatype");
  if (datatype == vocab::kXsdString) datatype.clear();
  if (!datatype.empty() && !is_valid_iri(datatype))
    throw std::invalid_argument("invalid datatype IRI: '" + datatype + "'");
  Term t;
  t.kind_ = TermKind::kLiteral;
  t.value_ = std::move(lexical);
  t.language_ = std::move(language);
  t.datatype_ = std::move(datatype);
  return t;
}

bool is_valid_iri(std::string_view iri) {
  // Absolute only: a scheme followed by ':'.
  const auto colon = iri.find(':');
  if (colon == std::string_view::npos || colon == 0) return false;
  const auto scheme_char = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' ||
           c == '.' || c == '-';
  };
  if (!((iri[0] >= 'A' && iri[0] <= 'Z') || (iri[0] >= 'a' && iri[0] <= 'z'))) return false;
  for (char c : iri.substr(0, colon))
    if (!scheme_char(c)) return false;
  for (unsigned char c : iri) {
    if (c <= 0x20) return false;
    switch (c) {
      case '<': case '>': case '"': case '{': case '}': case '|': case '^': case '`': case '\\':
        return false;
      default:
        break;
    }
  }
  return true;
}

bool is_valid_blank_label(std::string_view label) {
  if (label.empty() || !is_blank_char(label.front(), true)) return false;
  for (char c : label.substr(1))
    if (!is_blank_char(c, false)) return false;
  // A trailing '.' would be read back as the statement terminator.
  return label.back() != '.';
}

std::string to_ntriples(const Term& term) {
  switch (term.kind()) {
    case TermKind::kIri:
      return "<" + term.value() + ">";
    case TermKind::kBlank:
      return "_:" + term.value();
    case TermKind::kLiteral:
      break;
  }
  std::string out = "\"";
  for (unsigned char c : term.value()) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20 || c == 0x7f) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04X", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += '"';
  if (!term.language().empty()) out += "@" + term.language();
  if (!term.datatype().empty()) out += "^^<" + term.datatype() + ">";
  return out;
}

Triple::Triple(Term s, Term p, Term o)
    : subject(std::move(s)), predicate(std::move(p)), object(std::move(o)) {
  if (subject.is_literal()) throw std::invalid_argument("triple subject cannot be a literal");
  if (!predicate.is_iri()) throw std::invalid_argument("triple predicate must be an IRI");
}

std::string to_ntriples(const Triple& triple) {
  return to_ntriples(triple.subject) + " " + to_ntriples(triple.predicate) + " " +
         to_ntriples(triple.object) + " .";
}

std::set<std::string> Graph::blank_labels() const {
  std::set<std::string> labels;
  for (const auto& t : triples_) {
    if (t.subject.is_blank()) labels.insert(t.subject.value());
    if (t.object.is_blank()) labels.insert(t.object.value());
  }
  return labels;
}

const PrefixMap& default_prefixes() {
  static const PrefixMap prefixes = {
      {"rdf", std::string(vocab::kRdf)},   {"rdfs", std::string(vocab::kRdfs)},
      {"owl", std::string(vocab::kOwl)},   {"xsd", std::string(vocab::kXsd)},
      {"know", std::string(vocab::kKnow)}, {"kc", std::string(vocab::kKc)},
  };
  return prefixes;
}

std::string_view local_name(std::string_view iri) {
  const auto pos = iri.find_last_of("#/:");
  return pos == std::string_view::npos ? iri : iri.substr(pos + 1);
}

}  // namespace kc::rdf
