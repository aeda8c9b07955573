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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "unitrans/encoder.hpp"
#include "unitrans/synthlang.hpp"

namespace unitrans {

struct BleuReport {
  double score = 0.0;  // [0, 100]
  std::vector<double> precisions;
  double brevity_penalty = 0.0;
  std::int64_t hyp_length = 0;
  std::int64_t ref_length = 0;
};

/// Corpus BLEU with clipped n-gram counts pooled over all pairs. Tokens are
/// unit IDs. Add-one smoothing applies to orders above 1 when enabled.
BleuReport corpus_bleu(std::span<const UnitSequence> hypotheses,
                       std::span<const UnitSequence> references, int max_n = 4,
                       bool smoothing = false);

struct SimilarityReport {
  double mean = 0.0;
  std::vector<double> per_pair;
  std::size_t count = 0;
};

/// Per-pair cosine between encoder embeddings of translated and reference
/// sequences.
SimilarityReport similarity_eval(const SentenceEncoder& encoder,
                                 std::span<const UnitSequence> translated,
                                 std::span<const UnitSequence> reference);

struct RetrievalReport {
  double accuracy = 0.0;           // partner ranked above every distractor
  double parallel_cosine = 0.0;    // mean cosine of true pairs
  double mismatched_cosine = 0.0;  // mean cosine against distractors
  std::size_t pairs = 0;
};

/// Cross-lingual retrieval: for each pair the source embedding must be closer
/// to its own target than to `distractors` targets of other pairs in the same
/// target language.
RetrievalReport retrieval_eval(const SentenceEncoder& encoder, std::span<const EvalPair> pairs,
                               int distractors = 9, std::uint64_t seed = 5);

struct PurityResult {
  std::string lang;  // majority language or "MIXED"
  double out_of_range = 0.0;
  bool empty = false;
};

inline constexpr const char* kMixed = "MIXED";

/// Majority language by unit range and the fraction of tokens outside it.
/// Ties between languages report MIXED.
PurityResult language_purity(const UnitSequence& units,
                             std::span<const SyntheticLanguage> languages, int num_concepts);

struct Projection {
  std::vector<std::array<double, 2>> points;
  std::array<double, 2> variances{};  // variance along each component
  double total_variance = 0.0;
  double explained_ratio() const {
    return total_variance > 0 ? (variances[0] + variances[1]) / total_variance : 0.0;
  }
};

/// Mean-centered projection onto the two leading principal directions found
/// by power iteration with deflation.
Projection project_2d(std::span<const RowVector> embeddings, int iterations = 500,
                      std::uint64_t seed = 11);

nlohmann::json to_json(const BleuReport& r);
nlohmann::json to_json(const SimilarityReport& r, bool include_pairs = false);
nlohmann::json to_json(const RetrievalReport& r);

}  // namespace unitrans
