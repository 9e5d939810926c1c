#include "kc/graph_ops.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <vector>

#include "kc/error.hpp"

namespace kc::rdf {

namespace {

bool is_self_referent(const Term& node) {
  std::string label = node.is_blank() ? node.value() : std::string(local_name(node.value()));
  std::transform(label.begin(), label.end(), label.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return label == "me" || label == "i" || label == "myself" || label == "self" || label == "user";
}

Term map_term(const Term& t, const std::map<Term, Term>& replacement) {
  const auto it = replacement.find(t);
  return it == replacement.end() ? t : it->second;
}

void require_guard(const Graph& g) {
  if (g.blank_labels().size() > kMaxBlankNodes)
    throw TooLarge("graph has more than " + std::to_string(kMaxBlankNodes) + " blank nodes");
}

}  // namespace

std::string slug(std::string_view name) {
  std::string out;
  for (unsigned char c : name) {
    if (c == ' ') {
      out += '-';
    } else if (c < 0x80) {
      const char lower = static_cast<char>(std::tolower(c));
      if ((lower >= 'a' && lower <= 'z') || (lower >= '0' && lower <= '9') || lower == '-')
        out += lower;
    }
  }
  return out;
}

Graph canonicalize(const Graph& graph, std::string_view name_property, CanonicalMode mode) {
  if (mode == CanonicalMode::kStrict) return graph;

  // name -> nodes carrying it, node -> smallest name
  std::map<std::string, std::set<Term>> holders;
  std::map<Term, std::string> node_name;
  for (const auto& t : graph) {
    if (t.predicate.value() != name_property || !t.object.is_literal()) continue;
    holders[t.object.value()].insert(t.subject);
    auto [it, fresh] = node_name.emplace(t.subject, t.object.value());
    if (!fresh && t.object.value() < it->second) it->second = t.object.value();
  }
  for (const auto& [name, nodes] : holders)
    if (nodes.size() > 1) throw AmbiguousName(name);

  std::map<Term, Term> replacement;
  std::map<std::string, std::string> key_owner;  // target IRI -> name that claimed it
  auto claim = [&](const Term& node, const std::string& key, const std::string& name) {
    const std::string iri = std::string(kPersonNamespace) + key;
    if (const auto [it, fresh] = key_owner.emplace(iri, name); !fresh) throw AmbiguousName(name);
    replacement.emplace(node, Term::iri(iri));
  };
  for (const auto& [node, name] : node_name) {
    const std::string key = slug(name);
    if (!key.empty()) claim(node, key, name);
  }

  std::set<Term> unnamed;
  for (const auto& t : graph) {
    for (const Term* node : {&t.subject, &t.object}) {
      if (node->is_literal() || node_name.contains(*node)) continue;
      if (is_self_referent(*node)) unnamed.insert(*node);
    }
  }
  for (const auto& node : unnamed) claim(node, "me", node.value());

  Graph out({}, graph.prefixes());
  for (const auto& t : graph)
    out.insert(Triple(map_term(t.subject, replacement), t.predicate, map_term(t.object, replacement)));
  return out;
}

GraphDiff graph_diff(const Graph& a, const Graph& b) {
  GraphDiff diff;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::inserter(diff.common, diff.common.end()));
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::inserter(diff.only_a, diff.only_a.end()));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(),
                      std::inserter(diff.only_b, diff.only_b.end()));
  return diff;
}

// ---------------------------------------------------------------------------
// Exact isomorphism

namespace {

// Neighbourhood signature of one blank node: what it connects to, with other
// blank nodes abstracted to "*". Isomorphic nodes have equal signatures.
std::map<std::string, std::vector<std::string>> signatures(const Graph& g) {
  std::map<std::string, std::vector<std::string>> sig;
  for (const auto& t : g) {
    if (t.subject.is_blank()) {
      const std::string other = t.object.is_blank()
                                    ? (t.object == t.subject ? std::string("self") : std::string("*"))
                                    : to_ntriples(t.object);
      sig[t.subject.value()].push_back("s " + t.predicate.value() + " " + other);
    }
    if (t.object.is_blank() && !(t.subject == t.object)) {
      const std::string other = t.subject.is_blank() ? "*" : to_ntriples(t.subject);
      sig[t.object.value()].push_back("o " + t.predicate.value() + " " + other);
    }
  }
  for (auto& [label, entries] : sig) std::sort(entries.begin(), entries.end());
  return sig;
}

Term remap_blank(const Term& t, const BlankMapping& m) {
  if (!t.is_blank()) return t;
  const auto it = m.find(t.value());
  return it == m.end() ? t : Term::blank(it->second);
}

}  // namespace

std::optional<BlankMapping> iso_match(const Graph& a, const Graph& b) {
  require_guard(a);
  require_guard(b);
  if (a.size() != b.size()) return std::nullopt;

  const auto sig_a = signatures(a);
  const auto sig_b = signatures(b);
  if (sig_a.size() != sig_b.size()) return std::nullopt;

  // Ground triples must agree outright.
  for (const auto& t : a)
    if (!t.subject.is_blank() && !t.object.is_blank() && !b.contains(t)) return std::nullopt;

  std::map<std::string, std::vector<std::string>> candidates;
  for (const auto& [x, sx] : sig_a) {
    auto& list = candidates[x];
    for (const auto& [y, sy] : sig_b)
      if (sx == sy) list.push_back(y);
    if (list.empty()) return std::nullopt;
  }

  std::vector<std::string> order;
  for (const auto& [x, list] : candidates) order.push_back(x);
  std::stable_sort(order.begin(), order.end(), [&](const auto& l, const auto& r) {
    return candidates[l].size() < candidates[r].size();
  });

  // triples of `a` incident to each blank node
  std::map<std::string, std::vector<const Triple*>> incident;
  for (const auto& t : a) {
    if (t.subject.is_blank()) incident[t.subject.value()].push_back(&t);
    if (t.object.is_blank() && !(t.object == t.subject)) incident[t.object.value()].push_back(&t);
  }

  BlankMapping mapping;
  std::set<std::string> used;
  auto consistent = [&](const std::string& x) {
    for (const Triple* t : incident[x]) {
      const bool s_ready = !t->subject.is_blank() || mapping.contains(t->subject.value());
      const bool o_ready = !t->object.is_blank() || mapping.contains(t->object.value());
      if (s_ready && o_ready &&
          !b.contains(Triple(remap_blank(t->subject, mapping), t->predicate, remap_blank(t->object, mapping))))
        return false;
    }
    return true;
  };
  std::function<bool(std::size_t)> search = [&](std::size_t depth) {
    if (depth == order.size()) return true;
    const std::string& x = order[depth];
    for (const auto& y : candidates[x]) {
      if (used.contains(y)) continue;
      mapping[x] = y;
      used.insert(y);
      if (consistent(x) && search(depth + 1)) return true;
      mapping.erase(x);
      used.erase(y);
    }
    return false;
  };
  if (!search(0)) return std::nullopt;
  return mapping;
}

// ---------------------------------------------------------------------------
// Maximum partial alignment (branch and bound)

namespace {

constexpr std::size_t kSearchBudget = 2'000'000;

struct PatternTriple {
  int subject = -1;  // index into predicted blank list, or -1 when ground
  int object = -1;
  std::vector<const Triple*> candidates;  // structurally compatible gold triples
};

}  // namespace

Alignment best_alignment(const Graph& predicted, const Graph& gold) {
  require_guard(predicted);
  require_guard(gold);

  const auto p_labels = predicted.blank_labels();
  const std::vector<std::string> blanks(p_labels.begin(), p_labels.end());
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < blanks.size(); ++i) index[blanks[i]] = static_cast<int>(i);

  std::size_t ground_matches = 0;
  std::vector<PatternTriple> patterns;
  for (const auto& t : predicted) {
    if (!t.subject.is_blank() && !t.object.is_blank()) {
      if (gold.contains(t)) ++ground_matches;
      continue;
    }
    PatternTriple p;
    if (t.subject.is_blank()) p.subject = index[t.subject.value()];
    if (t.object.is_blank()) p.object = index[t.object.value()];
    for (const auto& g : gold) {
      if (g.predicate != t.predicate) continue;
      if (p.subject >= 0 ? !g.subject.is_blank() : g.subject != t.subject) continue;
      if (p.object >= 0 ? !g.object.is_blank() : g.object != t.object) continue;
      if (p.subject >= 0 && p.subject == p.object && g.subject != g.object) continue;
      p.candidates.push_back(&g);
    }
    patterns.push_back(std::move(p));
  }

  // Blank nodes with more incident patterns are decided first.
  std::vector<int> order(blanks.size());
  std::vector<std::vector<std::size_t>> incident(blanks.size());
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    if (patterns[i].subject >= 0) incident[static_cast<std::size_t>(patterns[i].subject)].push_back(i);
    if (patterns[i].object >= 0 && patterns[i].object != patterns[i].subject)
      incident[static_cast<std::size_t>(patterns[i].object)].push_back(i);
  }
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
    return incident[static_cast<std::size_t>(l)].size() > incident[static_cast<std::size_t>(r)].size();
  });

  // Candidate gold labels per predicted blank, drawn from compatible triples.
  std::vector<std::vector<std::string>> options(blanks.size());
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const auto& p = patterns[i];
    for (const Triple* g : p.candidates) {
      if (p.subject >= 0) options[static_cast<std::size_t>(p.subject)].push_back(g->subject.value());
      if (p.object >= 0) options[static_cast<std::size_t>(p.object)].push_back(g->object.value());
    }
  }
  for (auto& o : options) {
    std::sort(o.begin(), o.end());
    o.erase(std::unique(o.begin(), o.end()), o.end());
  }

  static const std::string kUnmapped;
  std::vector<const std::string*> assigned(blanks.size(), nullptr);  // nullptr = undecided
  std::set<std::string> used;
  std::size_t budget = kSearchBudget;
  bool exhausted = false;

  auto pattern_state = [&](const PatternTriple& p) -> int {  // 1 match, 0 miss, -1 open
    const std::string* s = p.subject >= 0 ? assigned[static_cast<std::size_t>(p.subject)] : nullptr;
    const std::string* o = p.object >= 0 ? assigned[static_cast<std::size_t>(p.object)] : nullptr;
    if ((p.subject >= 0 && s == &kUnmapped) || (p.object >= 0 && o == &kUnmapped)) return 0;
    if ((p.subject >= 0 && !s) || (p.object >= 0 && !o)) return p.candidates.empty() ? 0 : -1;
    for (const Triple* g : p.candidates)
      if ((p.subject < 0 || g->subject.value() == *s) && (p.object < 0 || g->object.value() == *o))
        return 1;
    return 0;
  };
  auto evaluate = [&](std::size_t& decided, std::size_t& open) {
    decided = 0;
    open = 0;
    for (const auto& p : patterns) {
      const int st = pattern_state(p);
      if (st == 1) ++decided;
      if (st == -1) ++open;
    }
  };

  Alignment best;
  best.matched = ground_matches;
  std::function<void(std::size_t)> search = [&](std::size_t depth) {
    if (budget == 0) {
      exhausted = true;
      return;
    }
    --budget;
    std::size_t decided = 0, open = 0;
    evaluate(decided, open);
    if (ground_matches + decided + open <= best.matched) return;
    if (depth == order.size() || open == 0) {
      best.matched = ground_matches + decided;
      best.mapping.clear();
      for (std::size_t i = 0; i < blanks.size(); ++i)
        if (assigned[i] && assigned[i] != &kUnmapped) best.mapping[blanks[i]] = *assigned[i];
      return;
    }
    const auto x = static_cast<std::size_t>(order[depth]);
    for (const auto& y : options[x]) {
      if (used.contains(y)) continue;
      assigned[x] = &y;
      used.insert(y);
      search(depth + 1);
      used.erase(y);
      assigned[x] = nullptr;
      if (exhausted) return;
    }
    assigned[x] = &kUnmapped;
    search(depth + 1);
    assigned[x] = nullptr;
  };
  search(0);
  best.exhaustive = !exhausted;
  return best;
}

Graph relabel_blanks(const Graph& graph, const BlankMapping& mapping,
                     const std::set<std::string>& reserved) {
  std::set<std::string> taken = reserved;
  for (const auto& [from, to] : mapping) taken.insert(to);
  BlankMapping full = mapping;
  for (const auto& label : graph.blank_labels()) {
    if (full.contains(label)) continue;
    std::string fresh = label;
    for (int n = 0; taken.contains(fresh); ++n) fresh = label + "_" + std::to_string(n);
    taken.insert(fresh);
    full[label] = fresh;
  }
  Graph out({}, graph.prefixes());
  for (const auto& t : graph) out.insert(Triple(remap_blank(t.subject, full), t.predicate, remap_blank(t.object, full)));
  return out;
}

}  // namespace kc::rdf
