#pragma once

// Synthetic corpora shaped like a real one: ontology samples that each state
// one or two relations of the user to named people, plus generic samples.

#include <random>
#include <string>
#include <vector>

#include "kc/dataset.hpp"
#include "kc/turtle.hpp"
#include "support/generators.hpp"

namespace kc::testing {

inline dataset::Sample synthetic_sample(std::size_t index, std::mt19937_64& rng) {
  const auto& swept = dataset::swept_concepts();
  std::string ttl;
  const std::size_t relations = 1 + pick(rng, 2);
  std::string prompt = "sample " + std::to_string(index) + ":";
  bool has_father = false, has_mother = false;
  for (std::size_t r = 0; r < relations; ++r) {
    std::string rel = swept[pick(rng, swept.size())];
    // father and mother are functional; a second one would not validate
    if ((rel == "father" && has_father) || (rel == "mother" && has_mother)) rel = "knows";
    has_father |= rel == "father";
    has_mother |= rel == "mother";
    const std::string node = "_:p" + std::to_string(r);
    const std::string name = "Person " + std::to_string(index) + "-" + std::to_string(r);
    ttl += "_:me know:" + rel + " " + node + " . " + node + " a know:Person ; know:name \"" + name + "\" . ";
    prompt += " my " + rel + " is " + name + ".";
  }
  dataset::Sample s;
  s.id = "s" + std::to_string(index);
  s.prompt = prompt;
  s.expected = rdf::parse_turtle(ttl, rdf::default_prefixes());
  return s;
}

inline dataset::Corpus synthetic_corpus(std::size_t ontology, std::size_t generic, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<dataset::Sample> samples;
  for (std::size_t i = 0; i < ontology; ++i) samples.push_back(synthetic_sample(i, rng));
  for (std::size_t i = 0; i < generic; ++i) {
    dataset::Sample s;
    s.id = "g" + std::to_string(i);
    s.prompt = "generic question number " + std::to_string(i);
    s.kind = dataset::SampleKind::kGeneric;
    samples.push_back(std::move(s));
  }
  return dataset::make_corpus(std::move(samples), onto::default_schema());
}

}  // namespace kc::testing
