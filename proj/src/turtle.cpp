#include "kc/turtle.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kc/error.hpp"

namespace kc::rdf {

namespace {

constexpr int kMaxNesting = 64;

bool is_alpha(unsigned char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_alnum(unsigned char c) { return is_alpha(c) || is_digit(c); }
bool is_hex(unsigned char c) {
  return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

bool is_prefix_char(unsigned char c) { return is_alnum(c) || c == '_' || c == '-' || c == '.' || c >= 0x80; }
bool is_local_char(unsigned char c) {
  return is_alnum(c) || c == '_' || c == '-' || c == '.' || c == ':' || c >= 0x80;
}
bool is_local_escape(unsigned char c) {
  static constexpr std::string_view kEscapable = "_~.-!$&'()*+,;=/?#@%";
  return kEscapable.find(static_cast<char>(c)) != std::string_view::npos;
}

bool has_scheme(std::string_view iri) {
  if (iri.empty() || !is_alpha(iri[0])) return false;
  for (std::size_t i = 1; i < iri.size(); ++i) {
    const unsigned char c = iri[i];
    if (c == ':') return true;
    if (!is_alnum(c) && c != '+' && c != '.' && c != '-') return false;
  }
  return false;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Offset of the first byte that is not part of well-formed UTF-8, or npos.
std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = s[i];
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char cc = s[i + k];
      if ((cc & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::string_view::npos;
}

// A term under construction; anonymous blank nodes are renamed once the whole
// document has been read so they never collide with labels the document uses.
struct Node {
  Term term;
  int anon = -1;
};

struct RawTriple {
  Node subject;
  Term predicate;
  Node object;
};

class Parser {
 public:
  Parser(std::string_view text, const PrefixMap& base) : text_(text), prefixes_(base) {}

  Graph run() {
    if (const auto bad = find_invalid_utf8(text_); bad != std::string_view::npos) {
      pos_ = bad;
      fail("invalid UTF-8 byte");
    }
    skip_ws();
    while (!at_end()) {
      statement();
      skip_ws();
    }
    return build();
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  unsigned char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? static_cast<unsigned char>(text_[pos_ + ahead]) : 0;
  }
  bool starts_with(std::string_view s) const { return text_.substr(pos_).starts_with(s); }

  std::pair<std::size_t, std::size_t> location(std::size_t at) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < at && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }

  [[noreturn]] void fail(const std::string& message) const { fail_at(pos_, message); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& message) const {
    const auto [line, col] = location(at);
    throw SyntaxError(line, col, message);
  }

  std::string describe_here() const {
    if (at_end()) return "end of input";
    const unsigned char c = peek();
    if (c >= 0x21 && c < 0x7f) return std::string("'") + static_cast<char>(c) + "'";
    return "byte 0x" + std::string{"0123456789abcdef"[c >> 4]} + "0123456789abcdef"[c & 0xF];
  }

  void skip_ws() {
    while (!at_end()) {
      const unsigned char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '#') {
        while (!at_end() && peek() != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  void expect(char c) {
    skip_ws();
    if (peek() != static_cast<unsigned char>(c) || at_end())
      fail(std::string("expected '") + c + "' but found " + describe_here());
    ++pos_;
  }

  void statement() {
    if (peek() == '@') {
      if (starts_with("@prefix") && !is_alnum(peek(7))) {
        pos_ += 7;
        prefix_directive();
        return;
      }
      if (starts_with("@base")) fail("@base is not supported");
      fail("unknown directive");
    }
    Node subject;
    if (peek() == '[') {
      subject = blank_property_list(0);
      skip_ws();
      if (peek() != '.') predicate_object_list(subject, 0);
    } else {
      subject = subject_term();
      predicate_object_list(subject, 0);
    }
    expect('.');
  }

  void prefix_directive() {
    skip_ws();
    const std::size_t start = pos_;
    std::string label;
    if (is_alpha(peek()) || peek() >= 0x80) {
      while (!at_end() && is_prefix_char(peek())) label += static_cast<char>(text_[pos_++]);
      if (label.back() == '.') fail_at(pos_ - 1, "prefix label cannot end with '.'");
    }
    if (peek() != ':') fail_at(start, "expected prefix label followed by ':'");
    ++pos_;
    skip_ws();
    if (peek() != '<') fail("expected '<' to start the namespace IRI");
    prefixes_[label] = iri_ref();
    expect('.');
  }

  Node subject_term() {
    skip_ws();
    const unsigned char c = peek();
    if (c == '<') return {Term::iri(iri_ref())};
    if (c == '_' && peek(1) == ':') return blank_label();
    if (c == '"' || c == '\'') fail("a literal cannot be a subject");
    if (c == '(') fail("collections are not supported");
    return {Term::iri(prefixed_name())};
  }

  Term verb() {
    skip_ws();
    if (peek() == 'a') {
      const unsigned char next = peek(1);
      if (!is_local_char(next) && next != '\\') {
        ++pos_;
        return Term::iri(std::string(vocab::kRdfType));
      }
    }
    if (peek() == '<') return Term::iri(iri_ref());
    if (peek() == '_' && peek(1) == ':') fail("a blank node cannot be a predicate");
    if (peek() == '"' || peek() == '\'') fail("a literal cannot be a predicate");
    return Term::iri(prefixed_name());
  }

  void predicate_object_list(const Node& subject, int depth) {
    for (;;) {
      Term predicate = verb();
      object_list(subject, predicate, depth);
      skip_ws();
      if (peek() != ';') return;
      while (peek() == ';') {
        ++pos_;
        skip_ws();
      }
      if (peek() == '.' || peek() == ']' || at_end()) return;
    }
  }

  void object_list(const Node& subject, const Term& predicate, int depth) {
    for (;;) {
      Node object = object_term(depth);
      triples_.push_back({subject, predicate, std::move(object)});
      skip_ws();
      if (peek() != ',') return;
      ++pos_;
    }
  }

  Node object_term(int depth) {
    skip_ws();
    const unsigned char c = peek();
    if (at_end()) fail("expected an object but found end of input");
    if (c == '<') return {Term::iri(iri_ref())};
    if (c == '_' && peek(1) == ':') return blank_label();
    if (c == '[') return blank_property_list(depth + 1);
    if (c == '"' || c == '\'') return {literal()};
    if (c == '(') fail("collections are not supported");
    if (is_digit(c) || ((c == '+' || c == '-' || c == '.') && is_digit(peek(1))))
      fail("numeric literals are not supported; quote the value");
    return {Term::iri(prefixed_name())};
  }

  Node blank_property_list(int depth) {
    if (depth > kMaxNesting) fail("blank node property lists nested too deeply");
    ++pos_;  // '['
    Node node{Term{}, anon_count_++};
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return node;
    }
    predicate_object_list(node, depth);
    expect(']');
    return node;
  }

  Node blank_label() {
    pos_ += 2;  // "_:"
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < text_.size()) {
      const unsigned char c = text_[end];
      const bool ok = end == start ? (is_alnum(c) || c == '_')
                                   : (is_alnum(c) || c == '_' || c == '-' || c == '.');
      if (!ok) break;
      ++end;
    }
    while (end > start && text_[end - 1] == '.') --end;
    if (end == start) fail("expected a blank node label after '_:'");
    std::string label(text_.substr(start, end - start));
    pos_ = end;
    used_labels_.insert(label);
    return {Term::blank(std::move(label))};
  }

  std::string iri_ref() {
    const std::size_t start = pos_;
    ++pos_;  // '<'
    std::string iri;
    for (;;) {
      if (at_end()) fail_at(start, "unterminated IRI");
      const unsigned char c = peek();
      if (c == '>') break;
      if (c <= 0x20 || c == '<' || c == '"' || c == '{' || c == '}' || c == '|' || c == '^' ||
          c == '`' || c == '\\')
        fail("illegal character " + describe_here() + " in IRI");
      iri += static_cast<char>(c);
      ++pos_;
    }
    ++pos_;  // '>'
    if (!has_scheme(iri)) fail_at(start, "relative IRI <" + iri + "> (no @base support)");
    return iri;
  }

  std::string prefixed_name() {
    const std::size_t start = pos_;
    std::string prefix;
    if (is_alpha(peek()) || peek() >= 0x80) {
      while (!at_end() && is_prefix_char(peek())) prefix += static_cast<char>(text_[pos_++]);
      while (!prefix.empty() && prefix.back() == '.') {
        prefix.pop_back();
        --pos_;
      }
    }
    if (peek() != ':') {
      pos_ = start;
      if (prefix == "true" || prefix == "false") fail("boolean literals are not supported");
      fail("unexpected " + describe_here());
    }
    ++pos_;
    std::string local;
    std::size_t last_plain_dot_run = 0;  // trailing dots are the statement terminator
    for (;;) {
      const unsigned char c = peek();
      if (at_end()) break;
      if (c == '\\' && is_local_escape(peek(1))) {
        local += static_cast<char>(peek(1));
        pos_ += 2;
        last_plain_dot_run = 0;
      } else if (c == '%' && is_hex(peek(1)) && is_hex(peek(2))) {
        local.append(text_.substr(pos_, 3));
        pos_ += 3;
        last_plain_dot_run = 0;
      } else if (is_local_char(c) && !(local.empty() && c == '-') &&
                 !(local.empty() && c == '.')) {
        local += static_cast<char>(c);
        ++pos_;
        last_plain_dot_run = c == '.' ? last_plain_dot_run + 1 : 0;
      } else {
        break;
      }
    }
    local.resize(local.size() - last_plain_dot_run);
    pos_ -= last_plain_dot_run;

    const auto it = prefixes_.find(prefix);
    if (it == prefixes_.end()) throw UnknownPrefix(prefix, location(start).first);
    std::string iri = it->second + local;
    if (!is_valid_iri(iri)) fail_at(start, "prefixed name expands to an invalid IRI");
    return iri;
  }

  Term literal() {
    const std::size_t start = pos_;
    const unsigned char quote = peek();
    if (peek(1) == quote && peek(2) == quote) fail("long (triple-quoted) literals are not supported");
    ++pos_;
    std::string value;
    for (;;) {
      if (at_end()) fail_at(start, "unterminated string literal");
      const unsigned char c = peek();
      if (c == quote) break;
      if (c == '\n' || c == '\r') fail("newline inside a string literal");
      if (c == '\\') {
        value += escape();
        continue;
      }
      value += static_cast<char>(c);
      ++pos_;
    }
    ++pos_;  // closing quote

    if (peek() == '@') {
      ++pos_;
      std::string tag;
      while (is_alpha(peek())) tag += static_cast<char>(text_[pos_++]);
      if (tag.empty()) fail("expected a language tag after '@'");
      while (peek() == '-' && is_alnum(peek(1))) {
        tag += text_[pos_++];
        while (is_alnum(peek())) tag += static_cast<char>(text_[pos_++]);
      }
      std::transform(tag.begin(), tag.end(), tag.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      return Term::literal(std::move(value), std::move(tag));
    }
    if (peek() == '^' && peek(1) == '^') {
      pos_ += 2;
      std::string datatype = peek() == '<' ? iri_ref() : prefixed_name();
      return Term::literal(std::move(value), {}, std::move(datatype));
    }
    return Term::literal(std::move(value));
  }

  std::string escape() {
    const std::size_t start = pos_;
    ++pos_;  // backslash
    const unsigned char c = peek();
    ++pos_;
    switch (c) {
      case 't': return "\t";
      case 'b': return "\b";
      case 'n': return "\n";
      case 'r': return "\r";
      case 'f': return "\f";
      case '"': return "\"";
      case '\'': return "'";
      case '\\': return "\\";
      case 'u':
      case 'U': {
        const std::size_t digits = c == 'u' ? 4 : 8;
        std::uint32_t cp = 0;
        for (std::size_t i = 0; i < digits; ++i) {
          const unsigned char h = peek();
          if (!is_hex(h)) fail_at(start, "malformed unicode escape");
          cp = cp * 16 + static_cast<std::uint32_t>(is_digit(h) ? h - '0' : (std::tolower(h) - 'a' + 10));
          ++pos_;
        }
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
          fail_at(start, "unicode escape is not a valid code point");
        std::string out;
        append_utf8(out, cp);
        return out;
      }
      default:
        fail_at(start, "unknown escape sequence");
    }
  }

  Graph build() {
    std::vector<std::string> anon_labels(static_cast<std::size_t>(anon_count_));
    std::size_t next = 0;
    for (auto& label : anon_labels) {
      do {
        label = "b" + std::to_string(next++);
      } while (used_labels_.contains(label));
    }
    auto resolve = [&](const Node& n) {
      return n.anon >= 0 ? Term::blank(anon_labels[static_cast<std::size_t>(n.anon)]) : n.term;
    };
    std::set<Triple> triples;
    for (const auto& raw : triples_) {
      Term object = resolve(raw.object);
      triples.insert(Triple(resolve(raw.subject), raw.predicate, std::move(object)));
    }
    return Graph(std::move(triples), std::move(prefixes_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  PrefixMap prefixes_;
  std::vector<RawTriple> triples_;
  std::set<std::string> used_labels_;
  int anon_count_ = 0;
};

// ---------------------------------------------------------------------------

bool is_safe_local(std::string_view local) {
  if (local.empty()) return true;
  auto body = [](unsigned char c) { return is_alnum(c) || c == '_' || c == '-' || c == '.'; };
  if (!is_alnum(local.front()) && local.front() != '_') return false;
  if (local.back() == '.') return false;
  return std::all_of(local.begin(), local.end(), body);
}

bool is_safe_prefix_label(std::string_view label) {
  if (label.empty()) return true;
  if (!is_alpha(label.front()) || label.back() == '.') return false;
  return std::all_of(label.begin(), label.end(), [](unsigned char c) {
    return is_alnum(c) || c == '_' || c == '-' || c == '.';
  });
}

class Writer {
 public:
  explicit Writer(const PrefixMap& prefixes) {
    for (const auto& [label, ns] : prefixes)
      if (is_safe_prefix_label(label) && !ns.empty()) prefixes_.emplace_back(label, ns);
    // Longest namespace wins; ties go to the smaller label.
    std::stable_sort(prefixes_.begin(), prefixes_.end(), [](const auto& a, const auto& b) {
      return a.second.size() > b.second.size();
    });
  }

  std::string iri(const std::string& value) {
    for (const auto& [label, ns] : prefixes_) {
      if (value.size() >= ns.size() && value.compare(0, ns.size(), ns) == 0) {
        const std::string_view local = std::string_view(value).substr(ns.size());
        if (is_safe_local(local)) {
          used_.insert(label);
          return label + ":" + std::string(local);
        }
      }
    }
    return "<" + value + ">";
  }

  std::string term(const Term& t) {
    if (t.is_iri()) return iri(t.value());
    if (t.is_blank()) return "_:" + t.value();
    if (t.datatype().empty()) return to_ntriples(t);
    return to_ntriples(Term::literal(t.value())) + "^^" + iri(t.datatype());
  }

  std::string prefix_block(const PrefixMap& all) const {
    std::string out;
    for (const auto& label : used_) out += "@prefix " + label + ": <" + all.at(label) + "> .\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> prefixes_;
  std::set<std::string> used_;
};

}  // namespace

Graph parse_turtle(std::string_view text, const PrefixMap& base_prefixes) {
  try {
    return Parser(text, base_prefixes).run();
  } catch (const std::invalid_argument& e) {
    // Term constructors reject what the grammar let through (e.g. a prefix
    // namespace that expands to a relative IRI).
    throw SyntaxError(0, 0, e.what());
  }
}

std::string serialize_turtle(const Graph& graph, const PrefixMap& prefix_map) {
  if (graph.empty()) return {};
  Writer writer(prefix_map);
  // (rank, text): rank 0 puts `a` ahead of every other predicate.
  using PredicateKey = std::pair<int, std::string>;
  std::map<std::string, std::map<PredicateKey, std::set<std::string>>> blocks;
  for (const auto& t : graph) {
    const bool is_type = t.predicate.value() == vocab::kRdfType;
    PredicateKey key = is_type ? PredicateKey{0, "a"} : PredicateKey{1, writer.term(t.predicate)};
    blocks[writer.term(t.subject)][std::move(key)].insert(writer.term(t.object));
  }

  std::string body;
  bool first_block = true;
  for (const auto& [subject, predicates] : blocks) {
    if (!first_block) body += "\n";
    first_block = false;
    body += subject;
    bool first_pred = true;
    for (const auto& [key, objects] : predicates) {
      body += first_pred ? " " : " ;\n    ";
      first_pred = false;
      body += key.second;
      bool first_obj = true;
      for (const auto& object : objects) {
        body += first_obj ? " " : ", ";
        first_obj = false;
        body += object;
      }
    }
    body += " .\n";
  }

  std::string head = writer.prefix_block(prefix_map);
  if (!head.empty()) head += "\n";
  return head + body;
}

}  // namespace kc::rdf
