#pragma once

#include <string>
#include <string_view>

#include "kc/rdf.hpp"

namespace kc::rdf {

/// Parses the Turtle subset used for captured knowledge:
///   - `@prefix` directives, `<absolute-iri>`, prefixed names, `a`
///   - `_:label` blank nodes and `[ p o ; ... ]` property lists
///   - `;` predicate lists and `,` object lists
///   - single-line string literals with `@lang` or `^^datatype`
///   - `#` comments
/// Collections, numeric/boolean shorthand, `"""` strings and `@base` are
/// rejected with a SyntaxError instead of being skipped.
///
/// Whitespace- or comment-only input yields an empty graph. The returned
/// graph's prefixes are the document's directives layered over
/// `base_prefixes`. Anonymous blank nodes are labelled b0, b1, ... skipping
/// any label the document itself uses.
///
/// Throws SyntaxError or UnknownPrefix. Never crashes on arbitrary bytes.
Graph parse_turtle(std::string_view text, const PrefixMap& base_prefixes = {});

/// Canonical Turtle: used `@prefix` lines sorted by label, then one block per
/// subject sorted by its serialized form, `a` first among predicates, other
/// predicates and objects sorted. Equal graphs give byte-identical output and
/// the empty graph gives "".
std::string serialize_turtle(const Graph& graph, const PrefixMap& prefix_map);

}  // namespace kc::rdf
