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

#include "unitrans/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "unitrans/error.hpp"

namespace unitrans {

namespace {

std::size_t directions_per_sentence(const Corpus& corpus) {
  const std::size_t l = corpus.languages.size();
  const std::size_t block = l * (l - 1);
  if (block == 0 || corpus.eval.size() % block != 0) {
    fail(ErrorCategory::Contract, "eval pairs are not grouped by sentence");
  }
  return block;
}

json config_json(const ExperimentConfig& config) {
  json j = json::object();
  const KeyValues kv = config.to_key_values();
  for (const auto& [k, v] : kv.entries()) j[k] = v;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCategory::Io, "failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const fs::path& path, const std::string& command, const ExperimentConfig& config,
                    const std::vector<fs::path>& artifacts) {
  json a = json::array();
  for (const auto& p : artifacts) a.push_back(p.filename().string());
  write_json(path, {{"command", command}, {"config", config_json(config)}, {"artifacts", a}});
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::Io, "cannot create " + dir.string() + ": " + ec.message());
}

Corpus load_corpus(const fs::path& dir, const ExperimentConfig& config) {
  Corpus corpus = read_corpus(dir);
  for (const auto& l : config.translator.target_languages) corpus.language(l);
  const int total = corpus.total_units();
  if (total != config.encoder.vocab) {
    fail(ErrorCategory::Config, "corpus in " + dir.string() + " has " + std::to_string(total) +
                                    " units but the config implies " +
                                    std::to_string(config.encoder.vocab));
  }
  return corpus;
}

std::vector<UnitSequence> read_unit_lines(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<UnitSequence> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_units(line, n));
    } catch (const Error& e) {
      fail(e.category(), path.filename().string() + ": " + e.what());
    }
  }
  if (out.empty()) fail(ErrorCategory::EmptyInput, path.string() + " holds no unit sequences");
  return out;
}

}  // namespace

///////////////////////////////////////////
// Held-out selections
///////////////////////////////////////////

std::vector<EvalPair> cross_lingual_pairs(const Corpus& corpus, std::size_t n) {
  const std::size_t block = directions_per_sentence(corpus);
  const std::size_t sentences = corpus.eval.size() / block;
  std::vector<EvalPair> out;
  for (std::size_t j = 0; j < std::min(n, sentences); ++j) out.push_back(corpus.eval[j * block + j % block]);
  return out;
}

std::vector<EvalPair> pairs_into(const Corpus& corpus, const std::string& tgt, std::size_t n) {
  corpus.language(tgt);
  const std::size_t block = directions_per_sentence(corpus);
  const std::size_t sentences = corpus.eval.size() / block;
  std::vector<EvalPair> out;
  for (std::size_t j = 0; j < std::min(n, sentences); ++j) {
    std::vector<const EvalPair*> into;
    for (std::size_t k = 0; k < block; ++k) {
      const auto& p = corpus.eval[j * block + k];
      if (p.tgt_lang == tgt) into.push_back(&p);
    }
    out.push_back(*into[j % into.size()]);
  }
  return out;
}

///////////////////////////////////////////
// In-process training and evaluation
///////////////////////////////////////////

SentenceEncoder fit_encoder(const ExperimentConfig& config, const Corpus& corpus,
                            EncoderTrainReport* report, std::ostream* log) {
  config.validate();
  SentenceEncoder encoder(config.encoder, config.encoder_init_seed());
  EncoderTrainConfig train = config.encoder_train();
  if (log) {
    train.on_epoch = [log](int epoch, double loss) {
      *log << "encoder epoch " << epoch + 1 << " loss " << loss << std::endl;
    };
  }
  auto r = train_encoder(encoder, corpus, train);
  encoder.freeze();
  if (report) *report = std::move(r);
  return encoder;
}

TranslatorModel fit_translator(const ExperimentConfig& config, const SentenceEncoder& encoder,
                               const Corpus& corpus, TranslatorTrainReport* report,
                               std::ostream* log) {
  config.validate();
  TranslatorModel model(config.translator, config.translator_init_seed());
  MonolingualData data;
  for (const auto& l : config.translator.target_languages) data.by_language[l] = corpus.train_for(l);
  TranslatorTrainConfig train = config.translator_train();
  if (log) {
    train.on_epoch = [log](int epoch, double tok, double dur) {
      *log << "translator epoch " << epoch + 1 << " token " << tok << " duration " << dur << std::endl;
    };
  }
  auto r = train_translator(model, encoder, data, corpus, train);
  if (report) *report = std::move(r);
  return model;
}

TranslationEval evaluate_translation(const TranslatorModel& model, const SentenceEncoder& encoder,
                                     std::span<const SyntheticLanguage> languages, int num_concepts,
                                     std::span<const EvalPair> pairs) {
  if (pairs.empty()) fail(ErrorCategory::EmptyInput, "no evaluation pairs");
  TranslationEval e;
  e.pairs = pairs.size();
  std::vector<UnitSequence> refs;
  std::vector<UnitSequence> full_hyps, full_refs;
  std::size_t in_range = 0, emitted = 0, majority = 0;
  for (const auto& p : pairs) {
    const auto target = std::find_if(languages.begin(), languages.end(),
                                     [&](const SyntheticLanguage& l) { return l.id == p.tgt_lang; });
    if (target == languages.end()) fail(ErrorCategory::Contract, "unknown language '" + p.tgt_lang + "'");
    const auto result = translate(model, encoder, p.src, p.tgt_lang);
    e.hypotheses.push_back(result.reduced.units);
    refs.push_back(reduce_units(p.tgt).units);
    if (result.truncated) ++e.truncated;
    if (result.units.empty()) {
      ++e.empty;
    } else {
      full_hyps.push_back(result.units);
      full_refs.push_back(p.tgt);
    }
    for (int u : result.units) in_range += target->owns(u, num_concepts) ? 1 : 0;
    emitted += result.units.size();
    if (language_purity(result.units, languages, num_concepts).lang == p.tgt_lang) ++majority;
  }
  e.bleu = corpus_bleu(e.hypotheses, refs);
  if (!full_hyps.empty()) {
    const auto sim = similarity_eval(encoder, full_hyps, full_refs);
    e.similarity = sim.mean * static_cast<double>(sim.count) / static_cast<double>(e.pairs);
  }
  e.purity = emitted ? static_cast<double>(in_range) / static_cast<double>(emitted) : 0.0;
  e.majority_match = static_cast<double>(majority) / static_cast<double>(e.pairs);
  return e;
}

BleuReport copy_source_bleu(std::span<const EvalPair> pairs) {
  std::vector<UnitSequence> hyps, refs;
  for (const auto& p : pairs) {
    hyps.push_back(reduce_units(p.src).units);
    refs.push_back(reduce_units(p.tgt).units);
  }
  return corpus_bleu(hyps, refs);
}

BleuReport reconstruction_bleu(const TranslatorModel& model, const SentenceEncoder& encoder,
                               std::span<const EvalPair> pairs) {
  std::vector<UnitSequence> hyps, refs;
  for (const auto& p : pairs) {
    hyps.push_back(translate(model, encoder, p.tgt, p.tgt_lang).reduced.units);
    refs.push_back(reduce_units(p.tgt).units);
  }
  return corpus_bleu(hyps, refs);
}

json metrics_json(const TranslationEval& e) {
  return {{"bleu", to_json(e.bleu)},
          {"similarity", {{"mean", e.similarity}, {"count", e.pairs}}},
          {"purity", {{"in_range", e.purity}, {"majority_match", e.majority_match}}},
          {"pairs", e.pairs},
          {"empty", e.empty},
          {"truncated", e.truncated}};
}

///////////////////////////////////////////
// Ablation
///////////////////////////////////////////

std::string AblationTable::csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "variant,n_sub,semantic_encoder,seed,bleu\n";
  for (const auto& r : rows) {
    out << r.variant << "," << r.n_sub << "," << (r.semantic_encoder ? 1 : 0) << "," << r.seed << ","
        << r.bleu << "\n";
  }
  return out.str();
}

json AblationTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    rs.push_back({{"variant", r.variant},
                  {"n_sub", r.n_sub},
                  {"semantic_encoder", r.semantic_encoder},
                  {"seed", r.seed},
                  {"bleu", r.bleu}});
  }
  json ss = json::array();
  for (const auto& s : summary) {
    ss.push_back({{"variant", s.variant},
                  {"n_sub", s.n_sub},
                  {"semantic_encoder", s.semantic_encoder},
                  {"bleu_mean", s.mean},
                  {"bleu_std", s.stddev},
                  {"seeds", s.seeds}});
  }
  return {{"rows", rs}, {"summary", ss}};
}

const AblationSummary& AblationTable::find(int n_sub, bool semantic_encoder) const {
  for (const auto& s : summary) {
    if (s.n_sub == n_sub && s.semantic_encoder == semantic_encoder) return s;
  }
  fail(ErrorCategory::Usage, "ablation has no row for n_sub=" + std::to_string(n_sub));
}

AblationTable run_ablation(const ExperimentConfig& config, const SentenceEncoder& encoder,
                           const Corpus& corpus, std::ostream* log) {
  config.validate();
  struct Variant {
    int n_sub;
    bool sem;
  };
  std::vector<Variant> variants;
  for (int n : config.ablate_n_sub) variants.push_back({n, true});
  variants.push_back({config.translator.n_sub, false});

  std::vector<EvalPair> pairs;
  for (const auto& t : config.translator.target_languages) {
    auto p = pairs_into(corpus, t, static_cast<std::size_t>(config.eval_pairs));
    pairs.insert(pairs.end(), p.begin(), p.end());
  }

  AblationTable table;
  for (const auto& v : variants) {
    AblationSummary s;
    s.n_sub = v.n_sub;
    s.semantic_encoder = v.sem;
    s.variant = v.sem ? "n_sub=" + std::to_string(v.n_sub) : "w/o semantic encoder";
    std::vector<double> scores;
    for (int k = 0; k < config.ablate_seeds; ++k) {
      ExperimentConfig c = config;
      c.translator.n_sub = v.n_sub;
      c.translator.semantic_encoder = v.sem;
      c.seed = config.seed + static_cast<std::uint64_t>(k);
      if (log) *log << "ablate " << s.variant << " seed " << c.seed << std::endl;
      const TranslatorModel model = fit_translator(c, encoder, corpus, nullptr, nullptr);
      const auto e = evaluate_translation(model, encoder, corpus.languages, corpus.num_concepts(), pairs);
      table.rows.push_back({s.variant, v.n_sub, v.sem, c.seed, e.bleu.score});
      scores.push_back(e.bleu.score);
      if (log) *log << "ablate " << s.variant << " seed " << c.seed << " bleu " << e.bleu.score << std::endl;
    }
    s.seeds = static_cast<int>(scores.size());
    for (double x : scores) s.mean += x;
    s.mean /= static_cast<double>(scores.size());
    if (scores.size() > 1) {
      double ss = 0.0;
      for (double x : scores) ss += (x - s.mean) * (x - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(scores.size() - 1));
    }
    table.summary.push_back(s);
  }
  return table;
}

///////////////////////////////////////////
// Checkpoint helpers
///////////////////////////////////////////

LoadedEncoder load_encoder(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path, ModelKind::Encoder);
  LoadedEncoder out;
  out.config = ExperimentConfig::from_string(ckpt.config);
  out.model = std::make_unique<SentenceEncoder>(out.config.encoder, out.config.encoder_init_seed());
  ckpt.restore(out.model->named_parameters());
  out.model->freeze();
  return out;
}

LoadedTranslator load_translator(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path, ModelKind::Translator);
  LoadedTranslator out;
  out.config = ExperimentConfig::from_string(ckpt.config);
  out.model = std::make_unique<TranslatorModel>(out.config.translator, out.config.translator_init_seed());
  ckpt.restore(out.model->named_parameters());
  return out;
}

///////////////////////////////////////////
// Commands
///////////////////////////////////////////

fs::path cmd_gen_corpus(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  const Corpus corpus = build_corpus(config.corpus);
  audit_disjointness(corpus);
  const fs::path manifest = write_corpus(corpus, out_dir);
  write_manifest(out_dir / "manifest.json", "gen-corpus", config,
                 {manifest, out_dir / "train.tsv", out_dir / "eval_pairs.tsv"});
  return manifest;
}

json cmd_train_encoder(const ExperimentConfig& config, const fs::path& corpus_dir,
                       const fs::path& out_dir, std::ostream* log) {
  config.validate();
  const Corpus corpus = load_corpus(corpus_dir, config);
  ensure_dir(out_dir);
  EncoderTrainReport report;
  const SentenceEncoder encoder = fit_encoder(config, corpus, &report, log);
  const auto pairs = cross_lingual_pairs(corpus, static_cast<std::size_t>(config.eval_pairs));
  const json metrics = {{"retrieval", to_json(retrieval_eval(encoder, pairs))},
                        {"initial_loss", report.initial_loss},
                        {"epoch_loss", report.epoch_loss},
                        {"steps", report.steps}};
  const fs::path ckpt = out_dir / "encoder.ckpt";
  save_checkpoint(make_checkpoint(ModelKind::Encoder, encoder.named_parameters(), config.to_string()), ckpt);
  write_json(out_dir / "metrics.json", metrics);
  write_manifest(out_dir / "manifest.json", "train-encoder", config, {ckpt, out_dir / "metrics.json"});
  return metrics;
}

json cmd_train_translator(const ExperimentConfig& config, const fs::path& corpus_dir,
                          const fs::path& encoder_ckpt, const fs::path& out_dir, std::ostream* log) {
  config.validate();
  const Corpus corpus = load_corpus(corpus_dir, config);
  const LoadedEncoder enc = load_encoder(encoder_ckpt);
  if (enc.config.encoder.embed_dim != config.encoder.embed_dim) {
    fail(ErrorCategory::Config, "embed_dim: encoder checkpoint has " +
                                    std::to_string(enc.config.encoder.embed_dim) + ", config has " +
                                    std::to_string(config.encoder.embed_dim));
  }
  ensure_dir(out_dir);
  TranslatorTrainReport report;
  const TranslatorModel model = fit_translator(config, *enc.model, corpus, &report, log);
  json per_lang = json::object();
  std::vector<EvalPair> all;
  for (const auto& t : config.translator.target_languages) {
    const auto pairs = pairs_into(corpus, t, static_cast<std::size_t>(config.eval_pairs));
    const auto e = evaluate_translation(model, *enc.model, corpus.languages, corpus.num_concepts(), pairs);
    per_lang[t] = metrics_json(e);
    per_lang[t]["reconstruction_bleu"] = reconstruction_bleu(model, *enc.model, pairs).score;
    all.insert(all.end(), pairs.begin(), pairs.end());
  }
  json metrics = metrics_json(
      evaluate_translation(model, *enc.model, corpus.languages, corpus.num_concepts(), all));
  metrics["targets"] = per_lang;
  metrics["training"] = {{"initial_loss", report.initial_loss},
                         {"epoch_token_loss", report.epoch_token_loss},
                         {"epoch_duration_loss", report.epoch_duration_loss},
                         {"steps", report.steps}};
  const fs::path ckpt = out_dir / "translator.ckpt";
  save_checkpoint(make_checkpoint(ModelKind::Translator, model.named_parameters(), config.to_string()), ckpt);
  write_json(out_dir / "metrics.json", metrics);
  write_manifest(out_dir / "manifest.json", "train-translator", config, {ckpt, out_dir / "metrics.json"});
  return metrics;
}

fs::path cmd_translate(const fs::path& translator_ckpt, const fs::path& encoder_ckpt,
                       const fs::path& input, const std::string& target_lang, const fs::path& out_file) {
  const LoadedTranslator tr = load_translator(translator_ckpt);
  const LoadedEncoder enc = load_encoder(encoder_ckpt);
  const auto& targets = tr.config.translator.target_languages;
  if (std::find(targets.begin(), targets.end(), target_lang) == targets.end()) {
    fail(ErrorCategory::Config, "target_lang: '" + target_lang + "' is not a target of this translator");
  }
  const auto sources = read_unit_lines(input);
  std::string out;
  for (const auto& s : sources) out += format_units(translate(*tr.model, *enc.model, s, target_lang).units) + "\n";
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  write_text(out_file, out);
  fs::path manifest = out_file;
  manifest += ".manifest.json";
  write_manifest(manifest, "translate", tr.config, {out_file});
  return out_file;
}

json cmd_evaluate(const fs::path& translator_ckpt, const fs::path& encoder_ckpt,
                  const fs::path& pairs_file, const fs::path& out_dir) {
  const LoadedTranslator tr = load_translator(translator_ckpt);
  const LoadedEncoder enc = load_encoder(encoder_ckpt);
  const ExperimentConfig& config = tr.config;
  const auto languages = config.corpus.make_languages();
  const auto& targets = config.translator.target_languages;

  std::istringstream in(read_text_file(pairs_file));
  std::vector<EvalPair> pairs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    EvalPair p;
    try {
      p = parse_eval_line(line, n);
    } catch (const Error& e) {
      fail(e.category(), pairs_file.filename().string() + ": " + e.what());
    }
    if (p.src_lang == p.tgt_lang) continue;
    if (std::find(targets.begin(), targets.end(), p.tgt_lang) == targets.end()) continue;
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) fail(ErrorCategory::EmptyInput, pairs_file.string() + " holds no pairs into a target language");

  json metrics = metrics_json(
      evaluate_translation(*tr.model, *enc.model, languages, config.corpus.grammar.num_concepts, pairs));
  json directions = json::object();
  std::map<std::string, std::vector<EvalPair>> split;
  for (const auto& p : pairs) split[p.src_lang + "-" + p.tgt_lang].push_back(p);
  for (const auto& [name, subset] : split) {
    directions[name] = metrics_json(
        evaluate_translation(*tr.model, *enc.model, languages, config.corpus.grammar.num_concepts, subset));
  }
  metrics["directions"] = directions;
  ensure_dir(out_dir);
  write_json(out_dir / "metrics.json", metrics);
  write_manifest(out_dir / "manifest.json", "evaluate", config, {out_dir / "metrics.json"});
  return metrics;
}

json cmd_ablate(const ExperimentConfig& config, const fs::path& corpus_dir, const fs::path& out_dir,
                const fs::path& encoder_ckpt, std::ostream* log) {
  config.validate();
  const Corpus corpus = load_corpus(corpus_dir, config);
  ensure_dir(out_dir);
  std::unique_ptr<SentenceEncoder> encoder;
  if (encoder_ckpt.empty()) {
    encoder = std::make_unique<SentenceEncoder>(fit_encoder(config, corpus, nullptr, log));
  } else {
    encoder = std::move(load_encoder(encoder_ckpt).model);
  }
  const AblationTable table = run_ablation(config, *encoder, corpus, log);
  write_text(out_dir / "ablation.csv", table.csv());
  const json j = table.to_json();
  write_json(out_dir / "ablation.json", j);
  write_manifest(out_dir / "manifest.json", "ablate", config,
                 {out_dir / "ablation.csv", out_dir / "ablation.json"});
  return j;
}

json cmd_export_embeddings(const fs::path& encoder_ckpt, const fs::path& corpus_dir,
                           const fs::path& out_dir) {
  const LoadedEncoder enc = load_encoder(encoder_ckpt);
  const Corpus corpus = load_corpus(corpus_dir, enc.config);
  ensure_dir(out_dir);
  // Every held-out sentence once per language, in corpus order.
  struct Item {
    std::size_t sentence;
    std::string lang;
    UnitSequence units;
  };
  const std::size_t block = directions_per_sentence(corpus);
  std::vector<Item> items;
  for (std::size_t j = 0; j * block < corpus.eval.size(); ++j) {
    std::set<std::string> seen;
    for (std::size_t k = 0; k < block; ++k) {
      const auto& p = corpus.eval[j * block + k];
      if (seen.insert(p.src_lang).second) items.push_back({j, p.src_lang, p.src});
    }
  }
  std::vector<UnitSequence> seqs;
  for (const auto& it : items) seqs.push_back(it.units);
  const auto embeddings = enc.model->encode_all(seqs);
  std::vector<RowVector> rows;
  for (const auto& e : embeddings) rows.push_back(e.values);
  const Projection proj = project_2d(rows);

  std::ostringstream emb, pts;
  emb << std::setprecision(9);
  pts << std::setprecision(17);
  emb << "sentence,lang";
  for (Index d = 0; d < rows[0].size(); ++d) emb << ",e" << d;
  emb << "\n";
  pts << "sentence,lang,x,y\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    emb << items[i].sentence << "," << items[i].lang;
    for (Index d = 0; d < rows[i].size(); ++d) emb << "," << rows[i](d);
    emb << "\n";
    pts << items[i].sentence << "," << items[i].lang << "," << proj.points[i][0] << ","
        << proj.points[i][1] << "\n";
  }
  write_text(out_dir / "embeddings.csv", emb.str());
  write_text(out_dir / "projection.csv", pts.str());
  const json summary = {{"points", items.size()},
                        {"variances", proj.variances},
                        {"total_variance", proj.total_variance},
                        {"explained_ratio", proj.explained_ratio()}};
  write_json(out_dir / "projection.json", summary);
  write_manifest(out_dir / "manifest.json", "export-embeddings", enc.config,
                 {out_dir / "embeddings.csv", out_dir / "projection.csv", out_dir / "projection.json"});
  return summary;
}

}  // namespace unitrans
