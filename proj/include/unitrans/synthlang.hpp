/*
 * Copyright 2026 The unitrans Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace unitrans {

/// Discrete unit IDs; the system's stand-in for speech.
using UnitSequence = std::vector<int>;

/// Derives an independent 64-bit seed from a base seed and a list of keys.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

struct ConceptSentence {
  std::vector<int> concepts;
  bool operator==(const ConceptSentence&) const = default;
  auto operator<=>(const ConceptSentence&) const = default;
};

struct GrammarConfig {
  int num_concepts = 64;
  int min_length = 4;
  int max_length = 12;
  /// Successors per concept in the seeded bigram table; 0 means every other
  /// concept is an equally likely successor.
  int branching = 3;

  void validate() const;
};

/// Bigram generator: start weights plus a row-stochastic-up-to-scale
/// transition table. Self transitions are always zero so that duplicate
/// collapsing never merges two concepts.
struct Grammar {
  GrammarConfig config;
  std::vector<double> start;
  std::vector<std::vector<double>> transitions;

  static Grammar from_seed(const GrammarConfig& config, std::uint64_t seed);
  static Grammar uniform(const GrammarConfig& config);

  void validate() const;
};

std::vector<ConceptSentence> gen_concepts(const Grammar& grammar, std::uint64_t seed,
                                          std::int64_t n);

/// Concept-level reordering applied before unit mapping: reverse every window
/// of `window` concepts starting at `offset`. window <= 1 is the identity.
struct ReorderRule {
  int window = 1;
  int offset = 0;

  std::vector<int> apply(const std::vector<int>& concepts) const;
  std::vector<int> invert(const std::vector<int>& reordered) const;
  std::string to_string() const;
  static ReorderRule parse(const std::string& text);
  bool operator==(const ReorderRule&) const = default;
};

/// Weights over repeat counts 1..weights.size(); each emitted unit draws its
/// own count.
struct DurationProfile {
  std::vector<double> weights{1.0, 1.0, 1.0};
  bool operator==(const DurationProfile&) const = default;
};

struct SyntheticLanguage {
  std::string id;
  int unit_base = 0;
  int units_per_concept = 2;
  ReorderRule reorder;
  DurationProfile durations;

  int unit_count(int num_concepts) const { return num_concepts * units_per_concept; }
  bool owns(int unit, int num_concepts) const {
    return unit >= unit_base && unit < unit_base + unit_count(num_concepts);
  }
  bool operator==(const SyntheticLanguage&) const = default;
};

UnitSequence realize(const ConceptSentence& sentence, const SyntheticLanguage& lang,
                     int num_concepts, std::uint64_t sentence_seed);

/// Inverse of realize up to durations: recovers the concept sentence from a
/// unit sequence of `lang`.
ConceptSentence recover_concepts(const UnitSequence& units, const SyntheticLanguage& lang,
                                 int num_concepts);

struct CorpusConfig {
  std::uint64_t seed = 17;
  GrammarConfig grammar;
  int units_per_concept = 2;
  std::vector<std::string> languages{"en", "es", "fr"};
  std::int64_t train_per_language = 5000;
  std::int64_t eval_sentences = 500;

  void validate() const;
  /// Language definitions derived from this config: disjoint consecutive unit
  /// ranges; language 0 keeps concept order, language 1 swaps adjacent pairs
  /// at odd positions, language 2 reverses triples, further languages cycle.
  std::vector<SyntheticLanguage> make_languages() const;
};

struct EvalPair {
  std::string src_lang;
  UnitSequence src;
  std::string tgt_lang;
  UnitSequence tgt;
  bool operator==(const EvalPair&) const = default;
};

struct MonolingualRecord {
  std::string lang;
  UnitSequence units;
  bool operator==(const MonolingualRecord&) const = default;
};

struct Corpus {
  CorpusConfig config;
  std::vector<SyntheticLanguage> languages;
  std::vector<MonolingualRecord> train;
  std::vector<EvalPair> eval;

  const SyntheticLanguage& language(const std::string& id) const;
  int num_concepts() const { return config.grammar.num_concepts; }
  int total_units() const;
  /// Training sequences of one language.
  std::vector<UnitSequence> train_for(const std::string& lang) const;
  std::vector<EvalPair> eval_direction(const std::string& src, const std::string& tgt) const;
};

/// Builds the full corpus. Evaluation concept sentences are drawn first and
/// excluded from every training draw; each language's training set comes
/// from its own independent draw, so no sentence pairing exists.
Corpus build_corpus(const CorpusConfig& config);

/// Fails unless no training sequence decodes to an evaluation concept sentence.
void audit_disjointness(const Corpus& corpus);

std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

std::string manifest_text(const Corpus& corpus);
CorpusConfig parse_manifest(const std::string& text);

/// Tab-separated line readers shared with the CLI.
MonolingualRecord parse_train_line(const std::string& line, std::size_t line_no);
EvalPair parse_eval_line(const std::string& line, std::size_t line_no);
UnitSequence parse_units(const std::string& text, std::size_t line_no);
std::string format_units(const UnitSequence& units);

}  // namespace unitrans
