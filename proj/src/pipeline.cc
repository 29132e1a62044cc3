// Copyright 2026 The NoiseLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "noiselab/pipeline.h"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "json.hpp"
#include "noiselab/errors.h"
#include "noiselab/rng.h"

namespace noiselab {

namespace fs = std::filesystem;

namespace {

std::mutex g_log_mutex;

void log_line(const StageContext& ctx, const std::string& line) {
  if (ctx.quiet) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::ostream& out = ctx.log ? *ctx.log : std::cerr;
  out << line << "\n";
  out.flush();
}

std::string fmt(const char* pattern, double a, double b, double c) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

Corpus load_split(const fs::path& path, Split split) { return read_conll(path, split); }

void require_inputs(const std::vector<fs::path>& paths, const std::string& stage) {
  std::vector<std::string> missing;
  for (const auto& p : paths) {
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (missing.empty()) return;
  std::string msg = stage + ": missing input(s): ";
  for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
  throw ConfigError(msg);
}

// Every regular file below `root`, recursively, keyed by relative path.
void hash_tree(const fs::path& root, const fs::path& rel_base, nlohmann::ordered_json& out) {
  if (fs::is_regular_file(root)) {
    out[fs::relative(root, rel_base).generic_string()] = git_blob_sha1(read_file(root));
    return;
  }
  if (!fs::is_directory(root)) return;
  std::vector<fs::path> entries;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) out[fs::relative(p, rel_base).generic_string()] = git_blob_sha1(read_file(p));
}

void write_manifest(const RunConfig& config, const std::string& stage, const fs::path& stage_dir,
                    const std::vector<fs::path>& inputs) {
  const fs::path out_root = config.output_path();
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["config_hash"] = config.hash();
  j["seed"] = config.seed;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& p : inputs) {
    const fs::path base = p.string().rfind(out_root.string(), 0) == 0 ? out_root : p.parent_path();
    hash_tree(p, base, in);
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  hash_tree(stage_dir, out_root, out);
  j["inputs"] = in;
  j["outputs"] = out;
  write_file(stage_dir / "manifest.json", j.dump(2) + "\n");
}

std::uint64_t test_seed(std::uint64_t data_seed) { return Rng(data_seed, "test-split").next_u64(); }

EvalReport stamp(EvalReport report, const RunConfig& config, const AblationFlags& flags) {
  report.seed = config.seed;
  report.config_hash = config.hash();
  report.flags = flags;
  return report;
}

struct StagePaths {
  fs::path root, data, perturb, pretrain, finetune, eval, ablate;
  explicit StagePaths(const RunConfig& c)
      : root(c.output_path()),
        data(root / "data"),
        perturb(root / "perturb"),
        pretrain(root / "pretrain"),
        finetune(root / "finetune"),
        eval(root / "eval"),
        ablate(root / "ablate") {}
};

// Everything the training stages need, read back from the stage outputs.
PreparedData load_prepared(const RunConfig& config, const std::string& stage) {
  StagePaths p(config);
  require_inputs({p.data / "train.conll", p.data / "test.conll", p.perturb / "train_aug.conll",
                  p.perturb / "vocab.txt", p.perturb / "tags.txt", p.perturb / "suites" / "single",
                  p.perturb / "suites" / "mixed"},
                 stage);
  PreparedData d;
  d.train = load_split(p.data / "train.conll", Split::kTrain);
  d.test = load_split(p.data / "test.conll", Split::kTest);
  d.train_aug = load_split(p.perturb / "train_aug.conll", Split::kTrain);
  d.vocab = Vocab::load(p.perturb / "vocab.txt");
  d.tagset = TagSet::load(p.perturb / "tags.txt");
  d.single = read_suites(p.perturb / "suites" / "single");
  d.mixed = read_suites(p.perturb / "suites" / "mixed");
  return d;
}

void write_reports(const fs::path& dir, const EvalReport& single, const EvalReport& mixed) {
  write_file(dir / "report.json", single.to_json());
  write_file(dir / "report.txt", single.to_table());
  write_file(dir / "report_mixed.json", mixed.to_json());
  write_file(dir / "report_mixed.txt", mixed.to_table());
}

}  // namespace

std::size_t threads_from_env() {
  const char* v = std::getenv("NOISELAB_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) {
    throw ConfigError(std::string("NOISELAB_THREADS must be a positive integer, got '") + v + "'");
  }
  return static_cast<std::size_t>(n);
}

Vocab vocab_for(const Corpus& train, const Corpus& train_aug, std::size_t min_freq) {
  return build_vocab(std::vector<const Corpus*>{&train, &train_aug}, min_freq);
}

TagSet tagset_for(const Corpus& train, const Corpus& test) {
  std::set<std::string> types;
  for (const Corpus* c : {&train, &test}) {
    for (const auto& s : c->sentences) {
      for (const auto& span : extract_spans(s)) types.insert(span.label);
    }
  }
  return TagSet(types);
}

PreparedData prepare_data(const RunConfig& config) {
  const TemplateBank templates = read_templates(config.data_path(config.templates));
  const ValueBank values = read_values(config.data_path(config.values));
  const Lexicons lex = load_lexicons(config.lexicon_paths());
  PreparedData d;
  d.train = generate_synthetic(config.train_size, templates, values, config.data_seed, Split::kTrain);
  d.test = generate_synthetic(config.test_size, templates, values, test_seed(config.data_seed), Split::kTest);
  d.train_aug = augment_corpus(d.train, resolve_plan(config.augment, config.perturb_seed, "augment"), lex,
                               config.perturb_seed);
  d.single = build_suite(d.test, resolve_plan(config.single, config.perturb_seed, "single"), lex);
  d.mixed = build_suite(d.test, resolve_plan(config.mixed, config.perturb_seed, "mixed"), lex);
  d.vocab = vocab_for(d.train, d.train_aug, config.min_freq);
  d.tagset = tagset_for(d.train, d.test);
  return d;
}

EncoderConfig encoder_config_for(const RunConfig& config, const PreparedData& data) {
  EncoderConfig enc = config.encoder;
  enc.vocab_size = data.vocab.size();
  enc.num_tags = data.tagset.size();
  return enc;
}

EncoderModel pretrain_model(const RunConfig& config, const PreparedData& data, bool use_smp,
                            bool use_snd, std::vector<PretrainEpoch>* trace,
                            const StageContext& ctx) {
  EncoderModel model(encoder_config_for(config, data), config.seed);
  PretrainConfig pc = config.pretrain;
  pc.use_smp = use_smp;
  pc.use_snd = use_snd;
  const std::string tag = std::string("pretrain") + (use_smp ? "" : "[-smp]") + (use_snd ? "" : "[-snd]");
  auto epochs = run_pretraining(model, data.train, data.train_aug, data.vocab, pc, [&](const PretrainEpoch& e) {
    log_line(ctx, tag + " epoch " + std::to_string(e.epoch) + "/" + std::to_string(pc.epochs) +
                      fmt(" l_smp=%.4f l_snd=%.4f joint=%.4f", e.l_smp, e.l_snd, e.joint));
  });
  if (trace) *trace = std::move(epochs);
  return model;
}

EncoderModel finetune_model(const RunConfig& config, const PreparedData& data,
                            const AblationFlags& flags, const EncoderModel* pretrained,
                            std::vector<FinetuneEpoch>* trace, const StageContext& ctx) {
  EncoderModel model = pretrained ? pretrained->clone() : EncoderModel(encoder_config_for(config, data), config.seed);
  FinetuneConfig fc = config.finetune;
  fc.flags = flags;
  auto epochs = run_finetuning(model, data.train, data.train_aug, data.vocab, data.tagset, fc,
                               [&](const FinetuneEpoch& e) {
                                 log_line(ctx, "finetune epoch " + std::to_string(e.epoch) + "/" +
                                                   std::to_string(fc.epochs) +
                                                   fmt(" l_cl=%.4f l_slot=%.4f joint=%.4f", e.l_cl, e.l_slot, e.joint));
                               });
  if (trace) *trace = std::move(epochs);
  return model;
}

std::vector<VariantResult> run_ablation(const RunConfig& config, const PreparedData& data,
                                        const std::vector<std::string>& variants,
                                        const StageContext& ctx) {
  std::set<std::string> seen;
  std::vector<AblationFlags> flags;
  for (const auto& v : variants) {
    if (!seen.insert(v).second) throw ConfigError("ablation variant '" + v + "' listed twice");
    flags.push_back(ablation_variant(v));
  }
  for (std::size_t i = 0; i < flags.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (flags[i] == flags[j]) {
        throw ConfigError("ablation variants '" + variants[j] + "' and '" + variants[i] + "' are identical");
      }
    }
  }

  auto parallel = [&](std::size_t count, const std::function<void(std::size_t)>& job) {
    const std::size_t workers = std::min(std::max<std::size_t>(ctx.threads, 1), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
      for (std::size_t i = 0; i < count; ++i) job(i);
      return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += workers) job(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  };

  // One pre-trained model per distinct (use_smp, use_snd).
  std::vector<std::pair<bool, bool>> objectives;
  for (const auto& f : flags) {
    const std::pair<bool, bool> key{f.use_smp, f.use_snd};
    if (f.use_pretrained && std::find(objectives.begin(), objectives.end(), key) == objectives.end()) {
      objectives.push_back(key);
    }
  }
  std::vector<std::optional<EncoderModel>> pretrained(objectives.size());
  parallel(objectives.size(), [&](std::size_t i) {
    pretrained[i].emplace(pretrain_model(config, data, objectives[i].first, objectives[i].second, nullptr, ctx));
  });

  std::vector<VariantResult> results(variants.size());
  parallel(variants.size(), [&](std::size_t i) {
    const AblationFlags& f = flags[i];
    const EncoderModel* base = nullptr;
    if (f.use_pretrained) {
      const auto at = std::find(objectives.begin(), objectives.end(), std::make_pair(f.use_smp, f.use_snd));
      base = &*pretrained[at - objectives.begin()];
    }
    log_line(ctx, "ablate: training variant " + variants[i]);
    EncoderModel model = finetune_model(config, data, f, base, nullptr, ctx);
    results[i].name = variants[i];
    results[i].flags = f;
    results[i].single = stamp(evaluate(model, data.vocab, data.tagset, data.single), config, f);
    results[i].mixed = stamp(evaluate(model, data.vocab, data.tagset, data.mixed), config, f);
  });
  return results;
}

std::string ablation_table(const std::vector<VariantResult>& results) {
  if (results.empty()) return "";
  std::vector<std::string> cols;
  for (const auto& [name, s] : results.front().single.suites) cols.push_back(name);
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-14s", "variant");
  out += buf;
  for (const auto& c : cols) {
    std::snprintf(buf, sizeof(buf), " %14s", c.c_str());
    out += buf;
  }
  out += "        overall\n";
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-14s", r.name.c_str());
    out += buf;
    for (const auto& c : cols) {
      std::snprintf(buf, sizeof(buf), " %14.2f", 100.0 * r.single.suites.at(c).f1);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), " %14.2f\n", 100.0 * r.single.overall);
    out += buf;
  }
  const auto full = std::find_if(results.begin(), results.end(), [](const VariantResult& r) { return r.name == "full"; });
  if (full != results.end()) {
    for (const auto& r : results) {
      if (r.name == "full") continue;
      std::snprintf(buf, sizeof(buf), "%+.2f", 100.0 * (r.single.overall - full->single.overall));
      out += "delta overall " + r.name + " vs full: " + buf + "\n";
    }
  }
  return out;
}

std::string ablation_json(const std::vector<VariantResult>& results) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  const auto full = std::find_if(results.begin(), results.end(), [](const VariantResult& r) { return r.name == "full"; });
  for (const auto& r : results) {
    nlohmann::ordered_json row;
    row["variant"] = r.name;
    row["overall"] = r.single.overall;
    row["overall_mixed"] = r.mixed.overall;
    if (full != results.end()) row["delta_vs_full"] = r.single.overall - full->single.overall;
    nlohmann::ordered_json f1 = nlohmann::ordered_json::object();
    for (const auto& [name, s] : r.single.suites) f1[name] = s.f1;
    row["f1"] = f1;
    j.push_back(row);
  }
  return j.dump(2) + "\n";
}

void stage_gen_data(const RunConfig& config, const StageContext& ctx) {
  StagePaths p(config);
  const fs::path templates = config.data_path(config.templates);
  const fs::path values = config.data_path(config.values);
  require_inputs({templates, values}, "gen-data");
  const TemplateBank tb = read_templates(templates);
  const ValueBank vb = read_values(values);
  fs::create_directories(p.data);
  write_conll(generate_synthetic(config.train_size, tb, vb, config.data_seed, Split::kTrain), p.data / "train.conll");
  write_conll(generate_synthetic(config.test_size, tb, vb, test_seed(config.data_seed), Split::kTest),
              p.data / "test.conll");
  write_manifest(config, "gen-data", p.data, {templates, values});
  log_line(ctx, "gen-data: " + std::to_string(config.train_size) + " train / " +
                    std::to_string(config.test_size) + " test sentences");
}

void stage_perturb(const RunConfig& config, const StageContext& ctx) {
  StagePaths p(config);
  const LexiconPaths lp = config.lexicon_paths();
  require_inputs({p.data / "train.conll", p.data / "test.conll", lp.homophones, lp.synonyms, lp.fillers,
                  lp.stopwords, lp.keyboard},
                 "perturb");
  const Lexicons lex = load_lexicons(lp);
  const Corpus train = load_split(p.data / "train.conll", Split::kTrain);
  const Corpus test = load_split(p.data / "test.conll", Split::kTest);
  const Corpus aug =
      augment_corpus(train, resolve_plan(config.augment, config.perturb_seed, "augment"), lex, config.perturb_seed);
  fs::create_directories(p.perturb);
  write_conll(aug, p.perturb / "train_aug.conll");
  vocab_for(train, aug, config.min_freq).save(p.perturb / "vocab.txt");
  tagset_for(train, test).save(p.perturb / "tags.txt");
  // Stale suites from an earlier plan must not survive.
  fs::remove_all(p.perturb / "suites");
  write_suites(build_suite(test, resolve_plan(config.single, config.perturb_seed, "single"), lex),
               p.perturb / "suites" / "single");
  write_suites(build_suite(test, resolve_plan(config.mixed, config.perturb_seed, "mixed"), lex),
               p.perturb / "suites" / "mixed");
  write_manifest(config, "perturb", p.perturb,
                 {p.data / "train.conll", p.data / "test.conll", lp.homophones, lp.synonyms, lp.fillers,
                  lp.stopwords, lp.keyboard});
  log_line(ctx, "perturb: " + std::to_string(config.single.size()) + " single and " +
                    std::to_string(config.mixed.size()) + " mixed suites");
}

void stage_pretrain(const RunConfig& config, const StageContext& ctx) {
  StagePaths p(config);
  if (!config.finetune.flags.use_pretrained) {
    log_line(ctx, "pretrain: skipped (finetune.use_pretrained = false)");
    return;
  }
  const PreparedData data = load_prepared(config, "pretrain");
  std::vector<PretrainEpoch> trace;
  EncoderModel model = pretrain_model(config, data, config.finetune.flags.use_smp, config.finetune.flags.use_snd,
                                      &trace, ctx);
  fs::create_directories(p.pretrain);
  model.save(p.pretrain / "model.ckpt");
  write_file(p.pretrain / "trace.jsonl", pretrain_trace_jsonl(trace));
  write_manifest(config, "pretrain", p.pretrain, {p.data, p.perturb});
}

void stage_finetune(const RunConfig& config, const StageContext& ctx) {
  StagePaths p(config);
  const AblationFlags& flags = config.finetune.flags;
  if (flags.use_pretrained) {
    try {
      require_inputs({p.pretrain / "model.ckpt"}, "finetune");
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (finetune.use_pretrained = true; run pretrain first)");
    }
  }
  const PreparedData data = load_prepared(config, "finetune");
  std::optional<EncoderModel> base;
  if (flags.use_pretrained) {
    base.emplace(encoder_config_for(config, data), config.seed);
    base->load(p.pretrain / "model.ckpt");
  }
  std::vector<FinetuneEpoch> trace;
  EncoderModel model = finetune_model(config, data, flags, base ? &*base : nullptr, &trace, ctx);
  fs::create_directories(p.finetune);
  model.save(p.finetune / "model.ckpt");
  write_file(p.finetune / "trace.jsonl", finetune_trace_jsonl(trace));
  std::vector<fs::path> inputs{p.data, p.perturb};
  if (flags.use_pretrained) inputs.push_back(p.pretrain / "model.ckpt");
  write_manifest(config, "finetune", p.finetune, inputs);
}

void stage_evaluate(const RunConfig& config, const StageContext& ctx) {
  StagePaths p(config);
  require_inputs({p.finetune / "model.ckpt"}, "evaluate");
  const PreparedData data = load_prepared(config, "evaluate");
  EncoderModel model(encoder_config_for(config, data), config.seed);
  model.load(p.finetune / "model.ckpt");
  const AblationFlags& flags = config.finetune.flags;
  const EvalReport single = stamp(evaluate(model, data.vocab, data.tagset, data.single, ctx.threads), config, flags);
  const EvalReport mixed = stamp(evaluate(model, data.vocab, data.tagset, data.mixed, ctx.threads), config, flags);
  fs::create_directories(p.eval);
  write_reports(p.eval, single, mixed);
  // Entity representations under the word+sentence mixed suite when present.
  const Corpus& emb_corpus = data.mixed.count("word+sen") ? data.mixed.at("word+sen") : data.test;
  write_file(p.eval / "embeddings.tsv", export_embeddings(model, data.vocab, emb_corpus));
  write_manifest(config, "evaluate", p.eval, {p.finetune / "model.ckpt", p.perturb});
  log_line(ctx, single.to_table() + mixed.to_table());
}

void stage_ablate(const RunConfig& config, const StageContext& ctx) {
  StagePaths p(config);
  const PreparedData data = load_prepared(config, "ablate");
  const auto results = run_ablation(config, data, config.ablate_variants, ctx);
  fs::create_directories(p.ablate);
  for (const auto& r : results) {
    const fs::path dir = p.ablate / (r.name == "full" ? std::string("full") : "no" + r.name);
    fs::create_directories(dir);
    write_reports(dir, r.single, r.mixed);
  }
  write_file(p.ablate / "summary.json", ablation_json(results));
  write_file(p.ablate / "summary.txt", ablation_table(results));
  write_manifest(config, "ablate", p.ablate, {p.data, p.perturb});
  log_line(ctx, ablation_table(results));
}

void stage_all(const RunConfig& config, const StageContext& ctx) {
  stage_gen_data(config, ctx);
  stage_perturb(config, ctx);
  stage_pretrain(config, ctx);
  stage_finetune(config, ctx);
  stage_evaluate(config, ctx);
  if (config.ablate_in_all) stage_ablate(config, ctx);
}

}  // namespace noiselab
