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

// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr, all measured values in acceptance_metrics.json. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "support/gradcheck.hpp"
#include "unitrans/checkpoint.hpp"
#include "unitrans/numerics/ops.hpp"
#include "unitrans/pipeline.hpp"

using namespace unitrans;
using namespace unitrans::testing;

namespace {

// Pinned thresholds.
constexpr int kGradCases = 100;
constexpr double kLsceTolerance = 1e-5;
constexpr int kRoundTrips = 10000;
constexpr double kRetrievalAccuracy = 0.95;
constexpr double kCosineMargin = 0.3;
constexpr double kMannWhitneyAlpha = 0.01;
constexpr double kBleuOverUntrained = 40.0;
constexpr double kTeacherForcedAccuracy = 0.90;
constexpr double kPurity = 0.99;
constexpr double kMultilingualBleuGap = 3.0;
constexpr double kShuffleMargin = 0.2;
constexpr std::size_t kPairs = 500;
constexpr std::size_t kCorruptionPairs = 100;
constexpr int kAblationSeeds = 3;
constexpr double kEncoderMinutes = 10.0;
constexpr double kTranslationMinutes = 20.0;
constexpr double kFastSeconds = 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << detail << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// One-sided Mann-Whitney U test with tie-corrected normal approximation:
// p-value for "x tends to exceed y".
double mann_whitney_p(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::pair<double, int>> all;
  for (double v : x) all.emplace_back(v, 0);
  for (double v : y) all.emplace_back(v, 1);
  std::sort(all.begin(), all.end());
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  const double n = n1 + n2;
  double rank_sum = 0.0;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 0) rank_sum += avg;
    }
    i = j;
  }
  const double u = rank_sum - n1 * (n1 + 1.0) / 2.0;
  const double mean = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  const double z = (u - mean - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

std::vector<double> cosines(const SentenceEncoder& enc, std::span<const UnitSequence> a,
                            std::span<const UnitSequence> b) {
  return similarity_eval(enc, a, b).per_pair;
}

std::vector<UnitSequence> sources(std::span<const EvalPair> pairs) {
  std::vector<UnitSequence> out;
  for (const auto& p : pairs) out.push_back(p.src);
  return out;
}

std::vector<UnitSequence> targets(std::span<const EvalPair> pairs) {
  std::vector<UnitSequence> out;
  for (const auto& p : pairs) out.push_back(p.tgt);
  return out;
}

ExperimentConfig with_targets(ExperimentConfig c, std::vector<std::string> langs) {
  c.translator.target_languages = std::move(langs);
  return c;
}

// Everything criteria 3-6 measure.
struct SuiteResult {
  json c3, c4, c5, c6;
  double c3_seconds = 0, c4_seconds = 0, c5_seconds = 0, c6_seconds = 0;
  std::vector<double> parallel, mismatched;
  double teacher_forced = 0.0;
  TranslationEval translation;
  BleuReport untrained, copy, reconstruction;
  AblationTable ablation;
  std::map<std::string, TranslationEval> multi, single;
};

SuiteResult run_suite(const ExperimentConfig& base, const Corpus& corpus, SentenceEncoder* keep_encoder,
                      TranslatorModel* keep_translator) {
  SuiteResult r;
  std::ostream* log = &std::cerr;
  const int c = corpus.num_concepts();

  // Criterion 3: encoder.
  auto t0 = Clock::now();
  EncoderTrainReport enc_report;
  SentenceEncoder encoder = fit_encoder(base, corpus, &enc_report, log);
  const auto cross = cross_lingual_pairs(corpus, kPairs);
  const RetrievalReport retrieval = retrieval_eval(encoder, cross);
  const auto src = sources(cross);
  const auto tgt = targets(cross);
  r.parallel = cosines(encoder, src, tgt);
  std::vector<UnitSequence> rotated(tgt.size());
  for (std::size_t i = 0; i < tgt.size(); ++i) rotated[i] = tgt[(i + 1) % tgt.size()];
  r.mismatched = cosines(encoder, src, rotated);
  r.c3 = to_json(retrieval);
  r.c3["final_loss"] = enc_report.epoch_loss.back();
  r.c3_seconds = seconds_since(t0);

  // Criterion 4: single-target translator, target-language monolingual data only.
  t0 = Clock::now();
  const ExperimentConfig en_cfg = with_targets(base, {"en"});
  TranslatorModel model = fit_translator(en_cfg, encoder, corpus, nullptr, log);
  const auto into_en = pairs_into(corpus, "en", kPairs);
  r.translation = evaluate_translation(model, encoder, corpus.languages, c, into_en);
  const TranslatorModel untrained(en_cfg.translator, en_cfg.translator_init_seed());
  r.untrained = evaluate_translation(untrained, encoder, corpus.languages, c, into_en).bleu;
  r.copy = copy_source_bleu(into_en);
  r.reconstruction = reconstruction_bleu(model, encoder, into_en);
  const auto held_in_seqs = corpus.train_for("en");
  const std::span<const UnitSequence> held_in(held_in_seqs.data(), std::min<std::size_t>(kPairs, held_in_seqs.size()));
  r.teacher_forced = teacher_forced_accuracy(model, make_examples(encoder, "en", held_in));
  r.c4 = {{"translation", metrics_json(r.translation)},
          {"untrained_bleu", r.untrained.score},
          {"copy_source_bleu", r.copy.score},
          {"reconstruction_bleu", r.reconstruction.score},
          {"teacher_forced_accuracy", r.teacher_forced}};
  r.c4_seconds = seconds_since(t0);

  // Criterion 5: ablation.
  t0 = Clock::now();
  ExperimentConfig abl = en_cfg;
  abl.ablate_seeds = kAblationSeeds;
  abl.ablate_n_sub = {1, base.translator.n_sub};
  abl.eval_pairs = static_cast<int>(kPairs);
  r.ablation = run_ablation(abl, encoder, corpus, log);
  r.c5 = r.ablation.to_json();
  r.c5_seconds = seconds_since(t0);

  // Criterion 6: one model for three targets against single-target models.
  t0 = Clock::now();
  const auto& langs = base.corpus.languages;
  const TranslatorModel multi = fit_translator(with_targets(base, langs), encoder, corpus, nullptr, log);
  json c6 = json::object();
  for (const auto& lang : langs) {
    const auto pairs = pairs_into(corpus, lang, kPairs);
    r.multi[lang] = evaluate_translation(multi, encoder, corpus.languages, c, pairs);
    if (lang == "en") {
      r.single[lang] = r.translation;
    } else {
      const TranslatorModel one = fit_translator(with_targets(base, {lang}), encoder, corpus, nullptr, log);
      r.single[lang] = evaluate_translation(one, encoder, corpus.languages, c, pairs);
    }
    c6[lang] = {{"multi", metrics_json(r.multi[lang])}, {"single_bleu", r.single[lang].bleu.score}};
  }
  r.c6 = c6;
  r.c6_seconds = seconds_since(t0);

  if (keep_encoder) *keep_encoder = std::move(encoder);
  if (keep_translator) *keep_translator = std::move(model);
  return r;
}

}  // namespace

int main() {
  json metrics = json::object();

  // Criterion 1: gradient checks and the label-smoothing oracle.
  {
    const auto t0 = Clock::now();
    const auto suite = run_gradient_suite(kGradCases);
    double worst = 0.0;
    std::string worst_op;
    bool ok = true;
    int fewest = kGradCases;
    json ops = json::object();
    for (const auto& g : suite) {
      ops[g.op] = g.worst;
      fewest = std::min(fewest, g.cases);
      if (g.worst >= worst) {
        worst = g.worst;
        worst_op = g.op;
      }
      ok = ok && g.passed() && g.cases >= kGradCases;
    }
    const DTensor logits = DTensor::from_rows({{std::log(0.7), std::log(0.1), std::log(0.1), std::log(0.1)}});
    const double hand = 0.8 * (-std::log(0.7)) + 0.2 * (-0.25 * (std::log(0.7) + 3.0 * std::log(0.1)));
    const double lsce = label_smoothed_ce(logits, std::vector<int>{0}, 0.2).item();
    const double secs = seconds_since(t0);
    metrics["criterion_1"] = {{"worst_relative_error", ops}, {"lsce", lsce}, {"lsce_oracle", hand}, {"seconds", secs}};
    ok = ok && std::abs(lsce - hand) < kLsceTolerance && secs < kFastSeconds;
    verdict(1, "numerics", ok,
            std::to_string(suite.size()) + " ops x " + std::to_string(fewest) + " cases, worst rel err " +
                fmt("%.2e", worst) + " (" + worst_op + ") < 1e-3; label_smoothed_ce " + fmt("%.7f", lsce) +
                " vs oracle " + fmt("%.7f", hand) + " within 1e-5; " + fmt("%.1fs", secs) + " < 60s");
  }

  // Criterion 2: exact inverses.
  {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    int bad_units = 0;
    for (int i = 0; i < kRoundTrips; ++i) {
      UnitSequence u(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 80)(rng)));
      for (auto& x : u) x = std::uniform_int_distribution<int>(0, 7)(rng);
      if (expand_units(reduce_units(u)) != u) ++bad_units;
    }
    int bad_frames = 0;
    for (int i = 0; i < kRoundTrips; ++i) {
      SentenceEmbedding e;
      e.values = RowVector::NullaryExpr(64, [&] { return std::normal_distribution<float>()(rng); });
      const int n = 1 << std::uniform_int_distribution<int>(0, 6)(rng);
      if (expand_features(e, n).flatten() != e.values) ++bad_frames;
    }
    ExperimentConfig cfg;
    const TranslatorModel model(cfg.translator, 3);
    Adam opt([&] {
      std::vector<Tensor> p;
      for (const auto& [n, t] : model.named_parameters()) p.push_back(t);
      return p;
    }(), AdamConfig{});
    for (auto& m : opt.first_moments()) m.setConstant(0.25f);
    for (auto& v : opt.second_moments()) v.setConstant(1e-3f);
    opt.set_steps(41);
    const Checkpoint ckpt = make_checkpoint(ModelKind::Translator, model.named_parameters(), cfg.to_string(), &opt);
    const fs::path path = fs::temp_directory_path() / "unitrans_acceptance.ckpt";
    save_checkpoint(ckpt, path);
    const std::string bytes = serialize(ckpt);
    const Checkpoint back = load_checkpoint(path, ModelKind::Translator);
    TranslatorModel fresh(cfg.translator, 99);
    back.restore(fresh.named_parameters());
    bool bit_exact = serialize(back) == bytes;
    const auto a = model.named_parameters();
    const auto b = fresh.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      bit_exact = bit_exact && std::memcmp(a[i].second.value().data(), b[i].second.value().data(),
                                           sizeof(float) * static_cast<std::size_t>(a[i].second.value().size())) == 0;
    }
    std::string wrong_version = bytes;
    wrong_version[8] = static_cast<char>(kCheckpointVersion + 1);
    bool rejected = false;
    try {
      deserialize(wrong_version);
    } catch (const Error& e) {
      rejected = e.category() == ErrorCategory::Checkpoint;
    }
    fs::remove(path);
    const double secs = seconds_since(t0);
    metrics["criterion_2"] = {{"unit_failures", bad_units}, {"frame_failures", bad_frames},
                              {"checkpoint_bit_exact", bit_exact}, {"version_rejected", rejected},
                              {"seconds", secs}};
    verdict(2, "exact inverses", bad_units == 0 && bad_frames == 0 && bit_exact && rejected && secs < kFastSeconds,
            "reduce/expand " + std::to_string(kRoundTrips - bad_units) + "/" + std::to_string(kRoundTrips) +
                ", expand_features/flatten " + std::to_string(kRoundTrips - bad_frames) + "/" +
                std::to_string(kRoundTrips) + ", checkpoint bit-exact=" + (bit_exact ? "yes" : "no") +
                ", version mismatch rejected=" + (rejected ? "yes" : "no") + "; " + fmt("%.1fs", secs) + " < 60s");
  }

  // Criteria 3-7 on the default desk-scale configuration.
  const ExperimentConfig base;
  std::cerr << "config:\n" << base.to_string();
  const Corpus corpus = build_corpus(base.corpus);
  audit_disjointness(corpus);

  SentenceEncoder encoder(base.encoder, 0);
  TranslatorModel translator(base.translator, 0);
  const SuiteResult r = run_suite(base, corpus, &encoder, &translator);

  {
    const double acc = r.c3.at("accuracy");
    const double pc = r.c3.at("parallel_cosine");
    const double mc = r.c3.at("mismatched_cosine");
    const double p = mann_whitney_p(r.parallel, r.mismatched);
    metrics["criterion_3"] = r.c3;
    metrics["criterion_3"]["mann_whitney_p"] = p;
    metrics["criterion_3"]["seconds"] = r.c3_seconds;
    const bool ok = acc >= kRetrievalAccuracy && pc - mc >= kCosineMargin && p < kMannWhitneyAlpha &&
                    r.c3_seconds < kEncoderMinutes * 60.0;
    verdict(3, "encoder language-agnosticism", ok,
            "retrieval@10 " + fmt("%.4f", acc) + " >= 0.95 on 500 pairs; parallel cos " + fmt("%.4f", pc) +
                " - mismatched " + fmt("%.4f", mc) + " = " + fmt("%.4f", pc - mc) + " >= 0.3; Mann-Whitney p " +
                fmt("%.3g", p) + " < 0.01; " + fmt("%.0fs", r.c3_seconds) + " <= 600s");
  }

  {
    const double bleu = r.translation.bleu.score;
    metrics["criterion_4"] = r.c4;
    metrics["criterion_4"]["seconds"] = r.c4_seconds;
    const bool ok = bleu - r.untrained.score >= kBleuOverUntrained && bleu > r.copy.score &&
                    r.reconstruction.score >= bleu && r.teacher_forced > kTeacherForcedAccuracy &&
                    r.c4_seconds <= kTranslationMinutes * 60.0;
    verdict(4, "translation without parallel data", ok,
            "BLEU " + fmt("%.2f", bleu) + " vs untrained " + fmt("%.2f", r.untrained.score) + " (+" +
                fmt("%.2f", bleu - r.untrained.score) + " >= 40), copy-source " + fmt("%.2f", r.copy.score) +
                " < BLEU, reconstruction " + fmt("%.2f", r.reconstruction.score) +
                " >= BLEU, teacher-forced accuracy " + fmt("%.4f", r.teacher_forced) + " > 0.90; " +
                fmt("%.0fs", r.c4_seconds) + " <= 1200s");
  }

  {
    const auto& one = r.ablation.find(1, true);
    const auto& best = r.ablation.find(base.translator.n_sub, true);
    const auto& bypass = r.ablation.find(base.translator.n_sub, false);
    const double sd_sub = std::max(one.stddev, best.stddev);
    const double sd_sem = std::max(bypass.stddev, best.stddev);
    const bool sub_ok = best.mean - one.mean > sd_sub;
    const bool sem_ok = best.mean - bypass.mean > sd_sem;
    metrics["criterion_5"] = r.c5;
    metrics["criterion_5"]["seconds"] = r.c5_seconds;
    const std::string d = std::to_string(base.translator.n_sub);
    verdict(5, "ablation ordering", sub_ok && sem_ok,
            "BLEU(N_sub=1) " + fmt("%.2f", one.mean) + "±" + fmt("%.2f", one.stddev) + " < BLEU(N_sub=" + d + ") " +
                fmt("%.2f", best.mean) + "±" + fmt("%.2f", best.stddev) + " by > max sd: " +
                (sub_ok ? "yes" : "no") + "; BLEU(w/o semantic encoder) " + fmt("%.2f", bypass.mean) + "±" +
                fmt("%.2f", bypass.stddev) + " < with by > max sd: " + (sem_ok ? "yes" : "no") + "; " +
                std::to_string(kAblationSeeds) + " seeds, " + fmt("%.0fs", r.c5_seconds));
  }

  {
    bool ok = true;
    std::string detail;
    for (const auto& [lang, e] : r.multi) {
      const double gap = std::abs(e.bleu.score - r.single.at(lang).bleu.score);
      ok = ok && e.purity >= kPurity && gap <= kMultilingualBleuGap;
      detail += "->" + lang + " purity " + fmt("%.4f", e.purity) + " BLEU " + fmt("%.2f", e.bleu.score) + " vs single " +
                fmt("%.2f", r.single.at(lang).bleu.score) + "; ";
    }
    metrics["criterion_6"] = r.c6;
    metrics["criterion_6"]["seconds"] = r.c6_seconds;
    verdict(6, "multilingual steering", ok, detail + "purity >= 0.99, |gap| <= 3");
  }

  // Criterion 7: similarity against shuffled pairings and under corruption.
  {
    const auto into_en = pairs_into(corpus, "en", kPairs);
    std::vector<UnitSequence> hyp, ref;
    for (std::size_t i = 0; i < into_en.size(); ++i) {
      if (r.translation.hypotheses[i].empty()) continue;
      hyp.push_back(r.translation.hypotheses[i]);
      ref.push_back(reduce_units(into_en[i].tgt).units);  // hypotheses are reduced
    }
    std::mt19937_64 rng(base.seed);
    std::vector<std::size_t> perm(ref.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<UnitSequence> shuffled;
    for (auto i : perm) shuffled.push_back(ref[i]);
    const double model_mean = similarity_eval(encoder, hyp, ref).mean;
    const double shuffled_mean = similarity_eval(encoder, hyp, shuffled).mean;

    const SyntheticLanguage& en = corpus.language("en");
    const int lo = en.unit_base;
    const int hi = en.unit_base + en.unit_count(corpus.num_concepts()) - 1;
    const std::size_t m = std::min(kCorruptionPairs, hyp.size());
    std::vector<double> curve;
    for (int k : {0, 25, 50, 100}) {
      std::vector<UnitSequence> corrupted(hyp.begin(), hyp.begin() + static_cast<std::ptrdiff_t>(m));
      for (auto& s : corrupted) {
        for (auto& u : s) {
          if (std::uniform_int_distribution<int>(0, 99)(rng) < k) u = std::uniform_int_distribution<int>(lo, hi)(rng);
        }
      }
      curve.push_back(similarity_eval(encoder, corrupted, std::span(ref).first(m)).mean);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < curve.size(); ++i) monotone = monotone && curve[i] < curve[i - 1];
    metrics["criterion_7"] = {{"model_similarity", model_mean}, {"shuffled_similarity", shuffled_mean},
                              {"pairs", hyp.size()}, {"corruption_curve", curve}};
    verdict(7, "similarity metric sanity", model_mean - shuffled_mean >= kShuffleMargin && monotone,
            "model " + fmt("%.4f", model_mean) + " - shuffled " + fmt("%.4f", shuffled_mean) + " = " +
                fmt("%.4f", model_mean - shuffled_mean) + " >= 0.2 on " + std::to_string(hyp.size()) +
                " pairs; corruption 0/25/50/100% " + fmt("%.4f", curve[0]) + "/" + fmt("%.4f", curve[1]) + "/" +
                fmt("%.4f", curve[2]) + "/" + fmt("%.4f", curve[3]) + (monotone ? " decreasing" : " NOT decreasing"));
  }

  // Criterion 8: the same seed reproduces byte-identical metrics JSON.
  {
    const auto t0 = Clock::now();
    const SuiteResult again = run_suite(base, corpus, nullptr, nullptr);
    const bool c3 = again.c3.dump() == r.c3.dump();
    const bool c4 = again.c4.dump() == r.c4.dump();
    const bool c5 = again.c5.dump() == r.c5.dump();
    const bool c6 = again.c6.dump() == r.c6.dump();
    const double secs = seconds_since(t0);
    metrics["criterion_8"] = {{"c3", c3}, {"c4", c4}, {"c5", c5}, {"c6", c6}, {"seconds", secs}};
    verdict(8, "determinism", c3 && c4 && c5 && c6,
            std::string("byte-identical metrics JSON on rerun: retrieval ") + (c3 ? "yes" : "no") + ", translation " +
                (c4 ? "yes" : "no") + ", ablation " + (c5 ? "yes" : "no") + ", multilingual " + (c6 ? "yes" : "no") + "; " + fmt("%.0fs", secs));
  }

  std::ofstream("acceptance_metrics.json") << metrics.dump(2) << "\n";
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL") << std::endl;
  return failures;
}
