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

#include "unitrans/synthlang.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "unitrans/error.hpp"
#include "unitrans/kvfile.hpp"

namespace unitrans {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int draw(std::mt19937_64& rng, const std::vector<double>& weights) {
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  return dist(rng);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

ConceptSentence draw_sentence(const Grammar& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len_dist(g.config.min_length, g.config.max_length);
  const int len = len_dist(rng);
  ConceptSentence s;
  s.concepts.reserve(static_cast<std::size_t>(len));
  int prev = draw(rng, g.start);
  s.concepts.push_back(prev);
  for (int i = 1; i < len; ++i) {
    prev = draw(rng, g.transitions[static_cast<std::size_t>(prev)]);
    s.concepts.push_back(prev);
  }
  return s;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix(base);
  for (std::uint64_t k : keys) h = splitmix(h ^ splitmix(k + 0x632BE59BD9B4E019ULL));
  return h;
}

///////////////////////////////////////////
// Grammar
///////////////////////////////////////////

void GrammarConfig::validate() const {
  if (num_concepts < 2) {
    fail(ErrorCategory::Config, "num_concepts must be >= 2, got " + std::to_string(num_concepts));
  }
  if (min_length < 1 || max_length < min_length) {
    fail(ErrorCategory::Config, "sentence length bounds invalid: min_length=" +
                                    std::to_string(min_length) +
                                    " max_length=" + std::to_string(max_length));
  }
  if (branching < 0 || branching >= num_concepts) {
    fail(ErrorCategory::Config, "branching must lie in [0, num_concepts), got " +
                                    std::to_string(branching));
  }
}

Grammar Grammar::from_seed(const GrammarConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.branching == 0) return uniform(config);
  const auto c = static_cast<std::size_t>(config.num_concepts);
  Grammar g;
  g.config = config;
  g.start.assign(c, 1.0);
  g.transitions.assign(c, std::vector<double>(c, 0.0));
  std::mt19937_64 rng(derive_seed(seed, {0x67}));
  std::exponential_distribution<double> weight(1.0);
  std::vector<int> others;
  for (std::size_t from = 0; from < c; ++from) {
    others.clear();
    for (std::size_t to = 0; to < c; ++to) {
      if (to != from) others.push_back(static_cast<int>(to));
    }
    std::shuffle(others.begin(), others.end(), rng);
    for (int j = 0; j < config.branching; ++j) {
      g.transitions[from][static_cast<std::size_t>(others[static_cast<std::size_t>(j)])] =
          weight(rng) + 1e-3;
    }
  }
  return g;
}

Grammar Grammar::uniform(const GrammarConfig& config) {
  config.validate();
  const auto c = static_cast<std::size_t>(config.num_concepts);
  Grammar g;
  g.config = config;
  g.start.assign(c, 1.0);
  g.transitions.assign(c, std::vector<double>(c, 1.0));
  for (std::size_t i = 0; i < c; ++i) g.transitions[i][i] = 0.0;
  return g;
}

void Grammar::validate() const {
  config.validate();
  const auto c = static_cast<std::size_t>(config.num_concepts);
  auto positive = [](const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) return false;
      total += x;
    }
    return total > 0.0;
  };
  if (start.size() != c || !positive(start)) {
    fail(ErrorCategory::Config, "grammar start weights are degenerate");
  }
  if (transitions.size() != c) fail(ErrorCategory::Config, "grammar table has wrong row count");
  for (std::size_t i = 0; i < c; ++i) {
    if (transitions[i].size() != c || !positive(transitions[i])) {
      fail(ErrorCategory::Config,
           "grammar transitions from concept " + std::to_string(i) + " are degenerate");
    }
    if (transitions[i][i] != 0.0) {
      fail(ErrorCategory::Config, "grammar allows self transition at concept " + std::to_string(i));
    }
  }
}

std::vector<ConceptSentence> gen_concepts(const Grammar& grammar, std::uint64_t seed,
                                          std::int64_t n) {
  if (n < 1) fail(ErrorCategory::Usage, "gen_concepts needs n >= 1, got " + std::to_string(n));
  grammar.validate();
  std::vector<ConceptSentence> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out.push_back(draw_sentence(grammar, derive_seed(seed, {static_cast<std::uint64_t>(i)})));
  }
  return out;
}

///////////////////////////////////////////
// Languages
///////////////////////////////////////////

std::vector<int> ReorderRule::apply(const std::vector<int>& concepts) const {
  std::vector<int> out = concepts;
  if (window <= 1) return out;
  const auto n = out.size();
  for (std::size_t i = static_cast<std::size_t>(offset); i + static_cast<std::size_t>(window) <= n;
       i += static_cast<std::size_t>(window)) {
    std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i),
                 out.begin() + static_cast<std::ptrdiff_t>(i) + window);
  }
  return out;
}

std::vector<int> ReorderRule::invert(const std::vector<int>& reordered) const {
  // Window reversal is an involution.
  return apply(reordered);
}

std::string ReorderRule::to_string() const {
  if (window <= 1) return "identity";
  return "reverse:" + std::to_string(window) + ":" + std::to_string(offset);
}

ReorderRule ReorderRule::parse(const std::string& text) {
  if (text == "identity") return {};
  const auto parts = split(text, ':');
  if (parts.size() != 3 || parts[0] != "reverse") {
    fail(ErrorCategory::Parse, "bad reorder rule '" + text + "'");
  }
  ReorderRule r;
  try {
    r.window = std::stoi(parts[1]);
    r.offset = std::stoi(parts[2]);
  } catch (const std::exception&) {
    fail(ErrorCategory::Parse, "bad reorder rule '" + text + "'");
  }
  if (r.window < 1 || r.offset < 0) fail(ErrorCategory::Parse, "bad reorder rule '" + text + "'");
  return r;
}

UnitSequence realize(const ConceptSentence& sentence, const SyntheticLanguage& lang,
                     int num_concepts, std::uint64_t sentence_seed) {
  for (int c : sentence.concepts) {
    if (c < 0 || c >= num_concepts) {
      fail(ErrorCategory::Index, "concept " + std::to_string(c) + " outside [0, " +
                                     std::to_string(num_concepts) + ")");
    }
  }
  std::mt19937_64 rng(sentence_seed);
  UnitSequence out;
  for (int c : lang.reorder.apply(sentence.concepts)) {
    for (int j = 0; j < lang.units_per_concept; ++j) {
      const int unit = lang.unit_base + c * lang.units_per_concept + j;
      const int repeats = 1 + draw(rng, lang.durations.weights);
      out.insert(out.end(), static_cast<std::size_t>(repeats), unit);
    }
  }
  return out;
}

ConceptSentence recover_concepts(const UnitSequence& units, const SyntheticLanguage& lang,
                                 int num_concepts) {
  std::vector<int> distinct;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0 && units[i] == units[i - 1]) continue;
    if (!lang.owns(units[i], num_concepts)) {
      fail(ErrorCategory::Contract, "unit " + std::to_string(units[i]) +
                                        " does not belong to language " + lang.id);
    }
    distinct.push_back(units[i] - lang.unit_base);
  }
  const int k = lang.units_per_concept;
  if (distinct.size() % static_cast<std::size_t>(k) != 0) {
    fail(ErrorCategory::Contract, "unit sequence is not a whole number of concepts");
  }
  std::vector<int> reordered;
  for (std::size_t i = 0; i < distinct.size(); i += static_cast<std::size_t>(k)) {
    const int c = distinct[i] / k;
    for (int j = 0; j < k; ++j) {
      if (distinct[i + static_cast<std::size_t>(j)] != c * k + j) {
        fail(ErrorCategory::Contract, "malformed concept realization in language " + lang.id);
      }
    }
    reordered.push_back(c);
  }
  return ConceptSentence{lang.reorder.invert(reordered)};
}

///////////////////////////////////////////
// Corpus
///////////////////////////////////////////

void CorpusConfig::validate() const {
  grammar.validate();
  if (languages.size() < 2) {
    fail(ErrorCategory::Config, "languages: at least two languages are required");
  }
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (l.empty() || l.find_first_of(" \t\n,=") != std::string::npos) {
      fail(ErrorCategory::Config, "languages: invalid language id '" + l + "'");
    }
    if (!seen.insert(l).second) fail(ErrorCategory::Config, "languages: duplicate id '" + l + "'");
  }
  if (units_per_concept < 1) fail(ErrorCategory::Config, "units_per_concept must be >= 1");
  if (train_per_language < 1) fail(ErrorCategory::Config, "train_per_language must be >= 1");
  if (eval_sentences < 1) fail(ErrorCategory::Config, "eval_sentences must be >= 1");
}

std::vector<SyntheticLanguage> CorpusConfig::make_languages() const {
  static const ReorderRule rules[] = {{1, 0}, {2, 1}, {3, 0}};
  std::vector<SyntheticLanguage> out;
  const int span = grammar.num_concepts * units_per_concept;
  for (std::size_t i = 0; i < languages.size(); ++i) {
    SyntheticLanguage l;
    l.id = languages[i];
    l.unit_base = static_cast<int>(i) * span;
    l.units_per_concept = units_per_concept;
    l.reorder = rules[i % 3];
    out.push_back(l);
  }
  return out;
}

const SyntheticLanguage& Corpus::language(const std::string& id) const {
  for (const auto& l : languages) {
    if (l.id == id) return l;
  }
  fail(ErrorCategory::Config, "unknown language '" + id + "'");
}

int Corpus::total_units() const {
  int hi = 0;
  for (const auto& l : languages) hi = std::max(hi, l.unit_base + l.unit_count(num_concepts()));
  return hi;
}

std::vector<UnitSequence> Corpus::train_for(const std::string& lang) const {
  std::vector<UnitSequence> out;
  for (const auto& r : train) {
    if (r.lang == lang) out.push_back(r.units);
  }
  return out;
}

std::vector<EvalPair> Corpus::eval_direction(const std::string& src, const std::string& tgt) const {
  std::vector<EvalPair> out;
  for (const auto& p : eval) {
    if (p.src_lang == src && p.tgt_lang == tgt) out.push_back(p);
  }
  return out;
}

Corpus build_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  corpus.languages = config.make_languages();
  const Grammar grammar = Grammar::from_seed(config.grammar, config.seed);
  const int nc = config.grammar.num_concepts;

  std::set<ConceptSentence> eval_set;
  std::vector<ConceptSentence> eval_sentences;
  const std::int64_t max_draws = 1000 * (config.eval_sentences + config.train_per_language);
  for (std::int64_t i = 0; static_cast<std::int64_t>(eval_sentences.size()) < config.eval_sentences;
       ++i) {
    if (i > max_draws) fail(ErrorCategory::Config, "grammar too small for the requested eval set");
    auto s = draw_sentence(grammar, derive_seed(config.seed, {1, static_cast<std::uint64_t>(i)}));
    if (eval_set.insert(s).second) eval_sentences.push_back(std::move(s));
  }

  for (std::size_t l = 0; l < corpus.languages.size(); ++l) {
    std::int64_t kept = 0;
    for (std::int64_t i = 0; kept < config.train_per_language; ++i) {
      if (i > max_draws) {
        fail(ErrorCategory::Config, "grammar too small to keep train and eval disjoint");
      }
      const auto s = draw_sentence(grammar, derive_seed(config.seed, {2, l, static_cast<std::uint64_t>(i)}));
      if (eval_set.count(s)) continue;
      corpus.train.push_back(
          {corpus.languages[l].id,
           realize(s, corpus.languages[l], nc,
                   derive_seed(config.seed, {3, l, static_cast<std::uint64_t>(i)}))});
      ++kept;
    }
  }

  for (std::size_t j = 0; j < eval_sentences.size(); ++j) {
    std::vector<UnitSequence> forms;
    for (std::size_t l = 0; l < corpus.languages.size(); ++l) {
      forms.push_back(realize(eval_sentences[j], corpus.languages[l], nc,
                              derive_seed(config.seed, {4, l, static_cast<std::uint64_t>(j)})));
    }
    for (std::size_t s = 0; s < forms.size(); ++s) {
      for (std::size_t t = 0; t < forms.size(); ++t) {
        if (s == t) continue;
        corpus.eval.push_back(
            {corpus.languages[s].id, forms[s], corpus.languages[t].id, forms[t]});
      }
    }
  }
  return corpus;
}

void audit_disjointness(const Corpus& corpus) {
  const int nc = corpus.num_concepts();
  std::set<ConceptSentence> eval_set;
  for (const auto& p : corpus.eval) {
    eval_set.insert(recover_concepts(p.src, corpus.language(p.src_lang), nc));
    eval_set.insert(recover_concepts(p.tgt, corpus.language(p.tgt_lang), nc));
  }
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    const auto& r = corpus.train[i];
    if (eval_set.count(recover_concepts(r.units, corpus.language(r.lang), nc))) {
      fail(ErrorCategory::Contract,
           "training record " + std::to_string(i) + " shares its sentence with the eval split");
    }
  }
}

///////////////////////////////////////////
// Files
///////////////////////////////////////////

std::string format_units(const UnitSequence& units) {
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(units[i]);
  }
  return out;
}

UnitSequence parse_units(const std::string& text, std::size_t line_no) {
  UnitSequence out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    int v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && *next != ' ') || v < 0) {
      fail(ErrorCategory::Parse, "line " + std::to_string(line_no) + ": bad unit list '" + text + "'");
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

MonolingualRecord parse_train_line(const std::string& line, std::size_t line_no) {
  const auto fields = split(line, '\t');
  if (fields.size() == 4) {
    fail(ErrorCategory::Contract, "line " + std::to_string(line_no) +
                                      ": paired record found in monolingual training data");
  }
  if (fields.size() != 2 || fields[0].empty()) {
    fail(ErrorCategory::Parse, "line " + std::to_string(line_no) +
                                   ": expected 'lang<TAB>units', got " +
                                   std::to_string(fields.size()) + " fields");
  }
  return {fields[0], parse_units(fields[1], line_no)};
}

EvalPair parse_eval_line(const std::string& line, std::size_t line_no) {
  const auto fields = split(line, '\t');
  if (fields.size() != 4 || fields[0].empty() || fields[2].empty()) {
    fail(ErrorCategory::Parse, "line " + std::to_string(line_no) +
                                   ": expected 'src_lang<TAB>units<TAB>tgt_lang<TAB>units'");
  }
  return {fields[0], parse_units(fields[1], line_no), fields[2], parse_units(fields[3], line_no)};
}

std::string manifest_text(const Corpus& corpus) {
  KeyValues kv;
  const auto& c = corpus.config;
  kv.set("format", "unitrans-corpus-1");
  kv.set("seed", std::to_string(c.seed));
  kv.set("num_concepts", std::to_string(c.grammar.num_concepts));
  kv.set("min_length", std::to_string(c.grammar.min_length));
  kv.set("max_length", std::to_string(c.grammar.max_length));
  kv.set("branching", std::to_string(c.grammar.branching));
  kv.set("units_per_concept", std::to_string(c.units_per_concept));
  kv.set("train_per_language", std::to_string(c.train_per_language));
  kv.set("eval_sentences", std::to_string(c.eval_sentences));
  std::string langs;
  for (std::size_t i = 0; i < c.languages.size(); ++i) {
    if (i) langs.push_back(',');
    langs += c.languages[i];
  }
  kv.set("languages", langs);
  kv.set("train_records", std::to_string(corpus.train.size()));
  kv.set("eval_pairs", std::to_string(corpus.eval.size()));
  for (const auto& l : corpus.languages) {
    const std::string p = "lang." + l.id + ".";
    kv.set(p + "unit_base", std::to_string(l.unit_base));
    kv.set(p + "units_per_concept", std::to_string(l.units_per_concept));
    kv.set(p + "reorder", l.reorder.to_string());
    std::ostringstream w;
    for (std::size_t i = 0; i < l.durations.weights.size(); ++i) {
      if (i) w << ',';
      w << l.durations.weights[i];
    }
    kv.set(p + "durations", w.str());
  }
  return kv.to_string();
}

CorpusConfig parse_manifest(const std::string& text) {
  const KeyValues kv = KeyValues::parse(text);
  if (kv.get_or("format", "") != "unitrans-corpus-1") {
    fail(ErrorCategory::Parse, "manifest: unsupported or missing format tag");
  }
  CorpusConfig c;
  c.seed = kv.get_u64("seed");
  c.grammar.num_concepts = kv.get_int("num_concepts");
  c.grammar.min_length = kv.get_int("min_length");
  c.grammar.max_length = kv.get_int("max_length");
  c.grammar.branching = kv.get_int("branching");
  c.units_per_concept = kv.get_int("units_per_concept");
  c.train_per_language = kv.get_i64("train_per_language");
  c.eval_sentences = kv.get_i64("eval_sentences");
  c.languages = split(kv.get("languages"), ',');
  c.validate();
  return c;
}

std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::Io, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorCategory::Io, "cannot write " + p.string());
    return out;
  };
  {
    auto out = open(dir / "train.tsv");
    for (const auto& r : corpus.train) out << r.lang << '\t' << format_units(r.units) << '\n';
  }
  {
    auto out = open(dir / "eval_pairs.tsv");
    for (const auto& p : corpus.eval) {
      out << p.src_lang << '\t' << format_units(p.src) << '\t' << p.tgt_lang << '\t'
          << format_units(p.tgt) << '\n';
    }
  }
  const auto manifest = dir / "manifest.txt";
  {
    auto out = open(manifest);
    out << manifest_text(corpus);
  }
  return manifest;
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  const std::string manifest = read_text_file(dir / "manifest.txt");
  corpus.config = parse_manifest(manifest);
  const KeyValues kv = KeyValues::parse(manifest);
  for (const auto& id : corpus.config.languages) {
    const std::string p = "lang." + id + ".";
    SyntheticLanguage l;
    l.id = id;
    l.unit_base = kv.get_int(p + "unit_base");
    l.units_per_concept = kv.get_int(p + "units_per_concept");
    l.reorder = ReorderRule::parse(kv.get(p + "reorder"));
    l.durations.weights.clear();
    for (const auto& w : split(kv.get(p + "durations"), ',')) {
      try {
        l.durations.weights.push_back(std::stod(w));
      } catch (const std::exception&) {
        fail(ErrorCategory::Parse, "manifest: bad duration weight '" + w + "' for " + id);
      }
    }
    corpus.languages.push_back(l);
  }

  auto read_lines = [&](const std::filesystem::path& p, auto&& fn) {
    std::ifstream in(p);
    if (!in) fail(ErrorCategory::Io, "cannot read " + p.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        fn(line, n);
      } catch (const Error& e) {
        throw Error(e.category(), p.filename().string() + ": " + e.what());
      }
    }
  };
  read_lines(dir / "train.tsv", [&](const std::string& line, std::size_t n) {
    auto r = parse_train_line(line, n);
    (void)corpus.language(r.lang);
    corpus.train.push_back(std::move(r));
  });
  read_lines(dir / "eval_pairs.tsv", [&](const std::string& line, std::size_t n) {
    corpus.eval.push_back(parse_eval_line(line, n));
  });
  return corpus;
}

}  // namespace unitrans
