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

#include <algorithm>
#include <cmath>
#include <random>

#include "unitrans/encoder.hpp"
#include "unitrans/error.hpp"

using namespace unitrans;

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

RowVector row(std::initializer_list<float> v) {
  RowVector r(static_cast<Index>(v.size()));
  Index i = 0;
  for (float x : v) r(i++) = x;
  return r;
}

Corpus tiny_corpus() {
  CorpusConfig c;
  c.train_per_language = 200;
  c.eval_sentences = 20;
  return build_corpus(c);
}

EncoderConfig small_encoder(int vocab) {
  EncoderConfig e;
  e.vocab = vocab;
  e.width = 32;
  e.embed_dim = 16;
  e.ffn = 64;
  return e;
}

}  // namespace

TEST_CASE("cosine examples") {
  const RowVector x = row({0.3f, -1.2f, 2.0f});
  CHECK(cosine(x, x) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(cosine(row({1, 0}), row({0, 1})) == 0.0);
  const double oracle = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
  CHECK(cosine(row({1, 2, 3}), row({4, 5, 6})) == doctest::Approx(oracle).epsilon(1e-7));
  CHECK(std::abs(oracle - 0.97463) < 1e-5);
  CHECK(category_of([&] { cosine(row({0, 0}), row({1, 0})); }) == ErrorCategory::UndefinedSimilarity);
  CHECK(category_of([&] { cosine(row({1, 0, 0}), row({1, 0})); }) == ErrorCategory::Dimension);
}

TEST_CASE("without self-attention the embedding ignores frame order") {
  EncoderConfig cfg = small_encoder(384);
  cfg.layers = 0;
  const SentenceEncoder enc(cfg, 4);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    UnitSequence u(12);
    for (auto& x : u) x = std::uniform_int_distribution<int>(0, 383)(rng);
    UnitSequence p = u;
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(enc.encode(u).values == enc.encode(p).values);
  }
}

TEST_CASE("embedding size is fixed and inputs are validated") {
  const SentenceEncoder enc(small_encoder(384), 1);
  CHECK(enc.encode(UnitSequence{5}).dim() == 16);
  UnitSequence longer(500);
  for (std::size_t i = 0; i < longer.size(); ++i) longer[i] = static_cast<int>(i % 384);
  const auto e = enc.encode(longer);
  CHECK(e.dim() == 16);
  CHECK(e.values.allFinite());
  CHECK(e.values.norm() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(category_of([&] { enc.encode(UnitSequence{}); }) == ErrorCategory::EmptyInput);
  CHECK(category_of([&] { enc.encode(UnitSequence{1, 384}); }) == ErrorCategory::Index);
}

TEST_CASE("batched and single encodes agree") {
  const SentenceEncoder enc(small_encoder(384), 2);
  const std::vector<UnitSequence> seqs{{1, 2, 3}, {7}, {100, 100, 5, 9, 44}};
  const auto all = enc.encode_all(seqs, 2);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    CHECK((all[i].values - enc.encode(seqs[i]).values).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("teacher anchor depends only on the concept multiset") {
  const TeacherAnchor anchor(64, 16, 7);
  const RowVector a = anchor(ConceptSentence{{3, 9, 3, 12}});
  const RowVector b = anchor(ConceptSentence{{12, 3, 9, 3}});
  CHECK(a == b);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a != anchor(ConceptSentence{{3, 9, 12}}));
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  const Corpus corpus = tiny_corpus();
  SentenceEncoder enc(small_encoder(corpus.total_units()), 3);
  std::vector<Matrix> before;
  for (const auto& [name, t] : enc.named_parameters()) before.push_back(t.value());
  EncoderTrainConfig cfg;
  cfg.epochs = 1;
  cfg.adam.schedule = {0.0, 0.0, 1};
  train_encoder(enc, corpus, cfg);
  std::size_t i = 0;
  for (const auto& [name, t] : enc.named_parameters()) CHECK(t.value() == before[i++]);
}

TEST_CASE("training lowers the anchor regression loss") {
  const Corpus corpus = tiny_corpus();
  SentenceEncoder enc(small_encoder(corpus.total_units()), 3);
  EncoderTrainConfig cfg;
  cfg.epochs = 3;
  cfg.adam.schedule = {1e-7, 2e-3, 20};
  const auto report = train_encoder(enc, corpus, cfg);
  REQUIRE(report.epoch_loss.size() == 3);
  CHECK(report.epoch_loss.back() < report.epoch_loss.front());
  CHECK(report.epoch_loss.back() < report.initial_loss);
  CHECK(report.steps > 0);
}

TEST_CASE("freezing clears gradient tracking") {
  SentenceEncoder enc(small_encoder(384), 1);
  enc.freeze();
  CHECK(enc.frozen());
  for (const auto& [name, t] : enc.named_parameters()) {
    CHECK_FALSE(t.requires_grad());
    CHECK(name.rfind("encoder.", 0) == 0);
  }
}
