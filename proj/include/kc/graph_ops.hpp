#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "kc/rdf.hpp"

namespace kc::rdf {

enum class CanonicalMode { kNameKeyed, kStrict };

inline constexpr std::string_view kPersonNamespace = "urn:kc:person:";
inline constexpr std::string_view kSelfIri = "urn:kc:person:me";

/// Lowercase, spaces to '-', everything outside [a-z0-9-] dropped.
std::string slug(std::string_view name);

/// Name-keyed mode rewrites every node carrying a `name_property` literal "N"
/// to `urn:kc:person:<slug(N)>`; an unnamed node labelled me/i/myself/self/user
/// (blank label or IRI local name, any case) becomes `urn:kc:person:me`. A
/// node with several names is keyed by the smallest. Strict mode returns the
/// graph unchanged.
///
/// Throws AmbiguousName when two distinct nodes would receive the same key.
Graph canonicalize(const Graph& graph, std::string_view name_property, CanonicalMode mode);

struct GraphDiff {
  std::set<Triple> common;
  std::set<Triple> only_a;
  std::set<Triple> only_b;
};

GraphDiff graph_diff(const Graph& a, const Graph& b);

using BlankMapping = std::map<std::string, std::string>;

inline constexpr std::size_t kMaxBlankNodes = 32;

/// Bijection between the blank nodes of `a` and `b` under which the triple
/// sets coincide, or nullopt. Throws TooLarge past kMaxBlankNodes.
std::optional<BlankMapping> iso_match(const Graph& a, const Graph& b);

/// Partial injective mapping from blank nodes of `predicted` to blank nodes
/// of `gold` that maximises the number of predicted triples found in `gold`.
struct Alignment {
  BlankMapping mapping;
  std::size_t matched = 0;
  // False when the search budget ran out and `mapping` is the best found.
  bool exhaustive = true;
};

Alignment best_alignment(const Graph& predicted, const Graph& gold);

/// Applies `mapping` to blank nodes; unmapped blanks are renamed to labels
/// that avoid every label in `reserved`.
Graph relabel_blanks(const Graph& graph, const BlankMapping& mapping,
                     const std::set<std::string>& reserved);

}  // namespace kc::rdf
