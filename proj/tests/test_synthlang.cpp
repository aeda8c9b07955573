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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "unitrans/error.hpp"
#include "unitrans/kvfile.hpp"
#include "unitrans/synthlang.hpp"

using namespace unitrans;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorCategory category_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.category();
  }
  FAIL("expected an error");
  return ErrorCategory::Usage;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("unitrans_synth_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CorpusConfig small_config() {
  CorpusConfig c;
  c.train_per_language = 300;
  c.eval_sentences = 40;
  return c;
}

}  // namespace

TEST_CASE("gen_concepts is deterministic and rejects n=0") {
  const Grammar g = Grammar::from_seed(GrammarConfig{}, 5);
  CHECK(gen_concepts(g, 9, 50) == gen_concepts(g, 9, 50));
  CHECK(gen_concepts(g, 9, 50) != gen_concepts(g, 10, 50));
  CHECK(category_of([&] { gen_concepts(g, 9, 0); }) == ErrorCategory::Usage);
}

TEST_CASE("generated sentences respect length and id bounds") {
  GrammarConfig cfg;
  const Grammar g = Grammar::from_seed(cfg, 1);
  for (const auto& s : gen_concepts(g, 3, 500)) {
    CHECK(static_cast<int>(s.concepts.size()) >= cfg.min_length);
    CHECK(static_cast<int>(s.concepts.size()) <= cfg.max_length);
    for (std::size_t i = 0; i < s.concepts.size(); ++i) {
      CHECK(s.concepts[i] >= 0);
      CHECK(s.concepts[i] < cfg.num_concepts);
      if (i > 0) CHECK(s.concepts[i] != s.concepts[i - 1]);
    }
  }
}

TEST_CASE("uniform grammar yields a uniform unigram distribution") {
  GrammarConfig cfg;
  cfg.branching = 0;
  const Grammar g = Grammar::uniform(cfg);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.num_concepts), 0);
  std::int64_t total = 0;
  std::uint64_t seed = 1;
  while (total < 100000) {
    for (const auto& s : gen_concepts(g, seed++, 1000)) {
      for (int c : s.concepts) {
        ++counts[static_cast<std::size_t>(c)];
        ++total;
      }
    }
  }
  const double p = 1.0 / cfg.num_concepts;
  const double mean = static_cast<double>(total) * p;
  const double sigma = std::sqrt(static_cast<double>(total) * p * (1.0 - p));
  // Aggregate 3-sigma band: Pearson chi-square against its multinomial mean
  // (df) and standard deviation sqrt(2 df).
  double chi2 = 0.0;
  for (auto n : counts) chi2 += (static_cast<double>(n) - mean) * (static_cast<double>(n) - mean) / mean;
  const double df = cfg.num_concepts - 1;
  CHECK(std::abs(chi2 - df) <= 3.0 * std::sqrt(2.0 * df));
  // Per-concept band, widened for 64 simultaneous comparisons (two-sided 0.27% family-wise).
  for (auto n : counts) CHECK(std::abs(static_cast<double>(n) - mean) <= 4.1 * sigma);
}

TEST_CASE("degenerate grammars are config errors") {
  Grammar g = Grammar::uniform(GrammarConfig{});
  for (auto& w : g.transitions[3]) w = 0.0;
  CHECK(category_of([&] { g.validate(); }) == ErrorCategory::Config);
  Grammar h = Grammar::uniform(GrammarConfig{});
  h.transitions[2][2] = 1.0;
  CHECK(category_of([&] { h.validate(); }) == ErrorCategory::Config);
}

TEST_CASE("realize examples") {
  SyntheticLanguage lang{"xx", 100, 1, ReorderRule{}, DurationProfile{{1.0}}};
  const ConceptSentence s{{4, 0, 7}};
  CHECK(realize(s, lang, 8, 1) == UnitSequence{104, 100, 107});
  CHECK(realize(ConceptSentence{}, lang, 8, 1).empty());

  const CorpusConfig cc;
  const auto langs = cc.make_languages();
  const ConceptSentence t{{1, 2, 3, 4, 5}};
  std::set<int> a, b;
  for (int u : realize(t, langs[0], 64, 3)) a.insert(u);
  for (int u : realize(t, langs[1], 64, 3)) b.insert(u);
  for (int u : a) CHECK(b.count(u) == 0);
}

TEST_CASE("realize is pure and durations are in range") {
  const auto langs = CorpusConfig{}.make_languages();
  const ConceptSentence s{{5, 9, 2, 31, 8, 1}};
  CHECK(realize(s, langs[2], 64, 77) == realize(s, langs[2], 64, 77));
  const auto units = realize(s, langs[2], 64, 77);
  std::size_t run = 1;
  for (std::size_t i = 1; i <= units.size(); ++i) {
    if (i < units.size() && units[i] == units[i - 1]) {
      ++run;
    } else {
      CHECK(run >= 1);
      CHECK(run <= 3);
      run = 1;
    }
  }
}

TEST_CASE("reorder rules invert and recover concepts exactly") {
  const auto langs = CorpusConfig{}.make_languages();
  const Grammar g = Grammar::from_seed(GrammarConfig{}, 2);
  for (const auto& s : gen_concepts(g, 4, 200)) {
    for (const auto& l : langs) {
      CHECK(l.reorder.invert(l.reorder.apply(s.concepts)) == s.concepts);
      CHECK(recover_concepts(realize(s, l, 64, 11), l, 64) == s);
    }
  }
  CHECK(ReorderRule::parse("reverse:2:1") == ReorderRule{2, 1});
  CHECK(ReorderRule::parse("identity") == ReorderRule{});
  CHECK(ReorderRule{3, 0}.apply({0, 1, 2, 3, 4, 5, 6}) == std::vector<int>{2, 1, 0, 5, 4, 3, 6});
  CHECK(ReorderRule{2, 1}.apply({0, 1, 2, 3, 4}) == std::vector<int>{0, 2, 1, 4, 3});
}

TEST_CASE("every unit of every sequence belongs to exactly one language") {
  const Corpus corpus = build_corpus(small_config());
  auto owners = [&](int u) {
    int n = 0;
    for (const auto& l : corpus.languages) n += l.owns(u, corpus.num_concepts()) ? 1 : 0;
    return n;
  };
  for (const auto& r : corpus.train) {
    for (int u : r.units) {
      CHECK(owners(u) == 1);
      CHECK(corpus.language(r.lang).owns(u, corpus.num_concepts()));
    }
  }
}

TEST_CASE("corpus shape and train/eval disjointness") {
  const Corpus corpus = build_corpus(small_config());
  CHECK(corpus.train.size() == 3 * 300);
  CHECK(corpus.eval.size() == 40 * 6);
  audit_disjointness(corpus);

  CorpusConfig big;
  big.train_per_language = 10000 / 3 + 1;
  big.eval_sentences = 500;
  audit_disjointness(build_corpus(big));
}

TEST_CASE("disjointness audit catches a leaked sentence") {
  Corpus corpus = build_corpus(small_config());
  const auto& leak = corpus.eval.front();
  corpus.train.push_back({leak.src_lang, leak.src});
  CHECK(category_of([&] { audit_disjointness(corpus); }) == ErrorCategory::Contract);
}

TEST_CASE("corpus files round trip and are byte-stable") {
  const Corpus corpus = build_corpus(small_config());
  const fs::path a = scratch("a");
  const fs::path b = scratch("b");
  write_corpus(corpus, a);
  write_corpus(build_corpus(small_config()), b);
  for (const char* f : {"train.tsv", "eval_pairs.tsv", "manifest.txt"}) {
    CHECK(read_text_file(a / f) == read_text_file(b / f));
  }
  const Corpus back = read_corpus(a);
  CHECK(back.train == corpus.train);
  CHECK(back.eval == corpus.eval);
  CHECK(back.languages == corpus.languages);
}

TEST_CASE("training files carry no pairing and malformed lines name their line") {
  CHECK(category_of([] { parse_train_line("en\t1 2\tes\t3 4", 7); }) == ErrorCategory::Contract);
  try {
    parse_train_line("en\t1 x 2", 12);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("12") != std::string::npos);
  }

  const fs::path dir = scratch("bad");
  write_corpus(build_corpus(small_config()), dir);
  {
    std::ofstream out(dir / "train.tsv", std::ios::app);
    out << "en\tnot-a-unit\n";
  }
  try {
    read_corpus(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("train.tsv") != std::string::npos);
  }
}

TEST_CASE("corpus config validation") {
  CorpusConfig c;
  c.languages = {"en"};
  CHECK(category_of([&] { c.validate(); }) == ErrorCategory::Config);
  CorpusConfig d;
  d.languages = {"en", "en"};
  CHECK(category_of([&] { d.validate(); }) == ErrorCategory::Config);
}
