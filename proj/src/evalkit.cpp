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

#include "unitrans/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace unitrans {

namespace {

using Ngram = std::vector<int>;

std::map<Ngram, std::int64_t> count_ngrams(const UnitSequence& seq, int n) {
  std::map<Ngram, std::int64_t> counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seq.size(); ++i) {
    ++counts[Ngram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                   seq.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return counts;
}

}  // namespace

BleuReport corpus_bleu(std::span<const UnitSequence> hypotheses,
                       std::span<const UnitSequence> references, int max_n, bool smoothing) {
  if (hypotheses.empty()) fail(ErrorCategory::Usage, "corpus_bleu: empty hypothesis list");
  if (hypotheses.size() != references.size()) {
    fail(ErrorCategory::Usage, "corpus_bleu: " + std::to_string(hypotheses.size()) +
                                   " hypotheses vs " + std::to_string(references.size()) +
                                   " references");
  }
  if (max_n < 1) fail(ErrorCategory::Config, "corpus_bleu: max_n must be >= 1");

  std::vector<std::int64_t> matches(static_cast<std::size_t>(max_n), 0);
  std::vector<std::int64_t> totals(static_cast<std::size_t>(max_n), 0);
  BleuReport report;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    report.hyp_length += static_cast<std::int64_t>(hypotheses[i].size());
    report.ref_length += static_cast<std::int64_t>(references[i].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto hyp = count_ngrams(hypotheses[i], n);
      const auto ref = count_ngrams(references[i], n);
      for (const auto& [gram, c] : hyp) {
        auto it = ref.find(gram);
        if (it != ref.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
        totals[static_cast<std::size_t>(n - 1)] += c;
      }
    }
  }

  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < max_n; ++n) {
    double num = static_cast<double>(matches[static_cast<std::size_t>(n)]);
    double den = static_cast<double>(totals[static_cast<std::size_t>(n)]);
    if (smoothing && n > 0) {
      num += 1.0;
      den += 1.0;
    }
    const double p = den > 0.0 ? num / den : 0.0;
    report.precisions.push_back(p);
    if (p <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  if (report.hyp_length == 0) {
    report.brevity_penalty = 0.0;
  } else if (report.hyp_length >= report.ref_length) {
    report.brevity_penalty = 1.0;
  } else {
    report.brevity_penalty = std::exp(1.0 - static_cast<double>(report.ref_length) /
                                                static_cast<double>(report.hyp_length));
  }
  report.score = zero ? 0.0
                      : 100.0 * report.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  return report;
}

SimilarityReport similarity_eval(const SentenceEncoder& encoder,
                                 std::span<const UnitSequence> translated,
                                 std::span<const UnitSequence> reference) {
  if (translated.size() != reference.size()) {
    fail(ErrorCategory::Usage, "similarity_eval: list lengths differ");
  }
  for (std::size_t i = 0; i < translated.size(); ++i) {
    if (translated[i].empty()) {
      fail(ErrorCategory::EmptyInput, "similarity_eval: translated sequence " + std::to_string(i) + " is empty");
    }
    if (reference[i].empty()) {
      fail(ErrorCategory::EmptyInput, "similarity_eval: reference sequence " + std::to_string(i) + " is empty");
    }
  }
  const auto a = encoder.encode_all(translated);
  const auto b = encoder.encode_all(reference);
  SimilarityReport report;
  report.count = a.size();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    report.per_pair.push_back(cosine(a[i], b[i]));
    total += report.per_pair.back();
  }
  report.mean = report.count ? total / static_cast<double>(report.count) : 0.0;
  return report;
}

RetrievalReport retrieval_eval(const SentenceEncoder& encoder, std::span<const EvalPair> pairs,
                               int distractors, std::uint64_t seed) {
  if (distractors < 1) fail(ErrorCategory::Config, "retrieval_eval: distractors must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_target;
  std::vector<UnitSequence> src, tgt;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    by_target[pairs[i].tgt_lang].push_back(i);
    src.push_back(pairs[i].src);
    tgt.push_back(pairs[i].tgt);
  }
  for (const auto& [lang, members] : by_target) {
    if (members.size() <= static_cast<std::size_t>(distractors)) {
      fail(ErrorCategory::Usage, "retrieval_eval: too few pairs into '" + lang + "' for " +
                                     std::to_string(distractors) + " distractors");
    }
  }
  const auto a = encoder.encode_all(src);
  const auto b = encoder.encode_all(tgt);
  std::mt19937_64 rng(seed);
  RetrievalReport r;
  r.pairs = pairs.size();
  std::size_t hits = 0, mismatched = 0;
  double parallel_sum = 0.0, mismatched_sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& members = by_target[pairs[i].tgt_lang];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const double own = cosine(a[i], b[i]);
    parallel_sum += own;
    bool best = true;
    std::vector<std::size_t> chosen;
    for (int d = 0; d < distractors;) {
      const std::size_t j = members[pick(rng)];
      if (j == i || std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
      chosen.push_back(j);
      const double other = cosine(a[i], b[j]);
      mismatched_sum += other;
      ++mismatched;
      if (other >= own) best = false;
      ++d;
    }
    if (best) ++hits;
  }
  if (r.pairs) {
    r.accuracy = static_cast<double>(hits) / static_cast<double>(r.pairs);
    r.parallel_cosine = parallel_sum / static_cast<double>(r.pairs);
    r.mismatched_cosine = mismatched_sum / static_cast<double>(mismatched);
  }
  return r;
}

PurityResult language_purity(const UnitSequence& units,
                             std::span<const SyntheticLanguage> languages, int num_concepts) {
  PurityResult r;
  if (units.empty()) {
    r.lang = kMixed;
    r.empty = true;
    return r;
  }
  std::vector<std::size_t> counts(languages.size(), 0);
  for (int u : units) {
    for (std::size_t l = 0; l < languages.size(); ++l) {
      if (languages[l].owns(u, num_concepts)) {
        ++counts[l];
        break;
      }
    }
  }
  std::size_t best = 0;
  bool tie = false;
  for (std::size_t l = 1; l < counts.size(); ++l) {
    if (counts[l] > counts[best]) {
      best = l;
      tie = false;
    } else if (counts[l] == counts[best]) {
      tie = true;
    }
  }
  const std::size_t in_range = counts.empty() ? 0 : counts[best];
  r.out_of_range = 1.0 - static_cast<double>(in_range) / static_cast<double>(units.size());
  r.lang = (tie || counts.empty() || in_range == 0) ? kMixed : languages[best].id;
  return r;
}

Projection project_2d(std::span<const RowVector> embeddings, int iterations, std::uint64_t seed) {
  if (embeddings.size() < 3) {
    fail(ErrorCategory::Usage, "project_2d needs at least 3 embeddings, got " +
                                   std::to_string(embeddings.size()));
  }
  const Index n = static_cast<Index>(embeddings.size());
  const Index d = embeddings[0].size();
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i) {
    if (embeddings[static_cast<std::size_t>(i)].size() != d) {
      fail(ErrorCategory::Dimension, "project_2d: embeddings differ in dimension");
    }
    x.row(i) = embeddings[static_cast<std::size_t>(i)].cast<double>();
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Projection p;
  p.total_variance = cov.trace();
  if (!(p.total_variance > 1e-12)) {
    fail(ErrorCategory::DegenerateProjection, "project_2d: all embeddings are identical");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd components(d, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v(d);
    for (Index i = 0; i < d; ++i) v(i) = dist(rng);
    if (c == 1) v -= components.col(0) * components.col(0).dot(v);
    v.normalize();
    for (int it = 0; it < iterations; ++it) {
      Eigen::VectorXd w = cov * v;
      if (c == 1) w -= components.col(0) * components.col(0).dot(w);
      const double norm = w.norm();
      if (norm < 1e-300) break;  // remaining spectrum is zero
      v = w / norm;
    }
    components.col(c) = v;
    p.variances[static_cast<std::size_t>(c)] = v.dot(cov * v);
  }
  // Fix signs so the largest-magnitude loading is positive.
  for (int c = 0; c < 2; ++c) {
    Index arg = 0;
    components.col(c).cwiseAbs().maxCoeff(&arg);
    if (components(arg, c) < 0) components.col(c) *= -1.0;
  }
  const Eigen::MatrixXd coords = x * components;
  for (Index i = 0; i < n; ++i) p.points.push_back({coords(i, 0), coords(i, 1)});
  return p;
}

nlohmann::json to_json(const BleuReport& r) {
  return {{"score", r.score},
          {"precisions", r.precisions},
          {"brevity_penalty", r.brevity_penalty},
          {"hyp_length", r.hyp_length},
          {"ref_length", r.ref_length}};
}

nlohmann::json to_json(const SimilarityReport& r, bool include_pairs) {
  nlohmann::json j = {{"mean", r.mean}, {"count", r.count}};
  if (include_pairs) j["per_pair"] = r.per_pair;
  return j;
}

nlohmann::json to_json(const RetrievalReport& r) {
  return {{"accuracy", r.accuracy},
          {"parallel_cosine", r.parallel_cosine},
          {"mismatched_cosine", r.mismatched_cosine},
          {"pairs", r.pairs}};
}

}  // namespace unitrans
