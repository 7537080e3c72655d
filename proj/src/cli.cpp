#include "depmt/cli.hpp"

#include <climits>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "depmt/error.hpp"
#include "depmt/parse.hpp"

namespace depmt {

namespace fs = std::filesystem;

namespace {

uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot hash file: " + path.string());
  uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path data_dir(const std::string& run_dir) { return fs::path(run_dir) / "data"; }

RunConfig load_frozen_config(const std::string& run_dir) {
  const fs::path p = fs::path(run_dir) / "config.json";
  if (!fs::exists(p)) throw Error("missing_input", "run is not prepared, no config at " + p.string());
  RunConfig rc = RunConfig::load(p.string());
  rc.resolve();
  return rc;
}

PreparedData load_prepared(const std::string& run_dir) {
  const fs::path d = data_dir(run_dir);
  for (const char* f : {"vocab.txt", "train.tsv", "dev.tsv", "test.tsv"})
    if (!fs::exists(d / f)) throw Error("missing_input", "missing prepared file: " + (d / f).string());
  PreparedData data;
  data.vocab = Vocabulary::load((d / "vocab.txt").string());
  data.train = read_corpus_tsv((d / "train.tsv").string());
  data.dev = read_corpus_tsv((d / "dev.tsv").string());
  data.test = read_corpus_tsv((d / "test.tsv").string());
  return data;
}

std::string default_checkpoint(const std::string& run_dir, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  return (fs::path(run_dir) / "checkpoints" / "checkpoint_last.bin").string();
}

// attach gold trees to parallel examples, aligned by sentence order
void attach_trees(std::vector<ParallelExample>& examples, const std::string& conllu_path) {
  ConlluResult trees = read_conllu(conllu_path);
  for (const auto& msg : trees.rejected) std::cerr << "warning: " << conllu_path << ": " << msg << "\n";
  if (trees.sentences.size() != examples.size())
    throw Error("data_error", conllu_path + " holds " + std::to_string(trees.sentences.size()) +
                                  " sentences but the parallel split holds " + std::to_string(examples.size()));
  for (size_t i = 0; i < examples.size(); ++i) {
    if (trees.sentences[i].first.size() != examples[i].source.size())
      throw Error("data_error", conllu_path + ": sentence " + std::to_string(i + 1) +
                                    " length differs from the parallel source");
    examples[i].source_tree = trees.sentences[i].second;
  }
}

std::vector<ParallelExample> load_split_files(const std::string& src, const std::string& tgt,
                                              const std::string& conllu) {
  std::vector<std::string> missing;
  if (src.empty() || !fs::exists(src)) missing.push_back(src.empty() ? "<source unset>" : src);
  if (tgt.empty() || !fs::exists(tgt)) missing.push_back(tgt.empty() ? "<target unset>" : tgt);
  if (!conllu.empty() && !fs::exists(conllu)) missing.push_back(conllu);
  if (!missing.empty()) {
    std::string all;
    for (const auto& m : missing) all += (all.empty() ? "" : ", ") + m;
    throw Error("missing_input", "missing inputs: " + all);
  }
  ParallelReadResult res = read_parallel(src, tgt);
  if (res.dropped_empty || res.dropped_reserved)
    std::cerr << "warning: dropped " << res.dropped_empty << " empty and " << res.dropped_reserved
              << " reserved-token pairs from " << src << "\n";
  if (!conllu.empty()) {
    if (res.dropped_empty || res.dropped_reserved)
      throw Error("data_error", "cannot align " + conllu + ": pairs were dropped from the parallel split");
    attach_trees(res.examples, conllu);
  }
  return res.examples;
}

TaskKind secondary_kind_of(const RunConfig& rc) {
  TaskKind kind;
  if (!task_kind_from_name(rc.train.secondary_task, kind))
    throw Error("bad_config", "unknown secondary task: " + rc.train.secondary_task);
  return kind;
}

}  // namespace

void cmd_prepare(RunConfig config, bool force, bool export_tasks) {
  config.resolve();
  const fs::path d = data_dir(config.run_dir);
  if (fs::exists(d) && !fs::is_empty(d) && !force)
    throw Error("conflict", "data directory already exists (use --force to overwrite): " + d.string());
  fs::create_directories(d);

  std::vector<ParallelExample> train, dev, test;
  if (config.data.kind == "synthetic") {
    const auto& s = config.data;
    std::vector<ParallelExample> all =
        generate_synthetic(s.synthetic, s.synthetic_train + s.synthetic_dev + s.synthetic_test);
    train.assign(all.begin(), all.begin() + s.synthetic_train);
    dev.assign(all.begin() + s.synthetic_train, all.begin() + s.synthetic_train + s.synthetic_dev);
    test.assign(all.begin() + s.synthetic_train + s.synthetic_dev, all.end());
  } else {
    const auto& f = config.data.files;
    train = load_split_files(f.train_source, f.train_target, f.train_conllu);
    dev = load_split_files(f.dev_source, f.dev_target, f.dev_conllu);
    test = load_split_files(f.test_source, f.test_target, f.test_conllu);
  }

  const bool need_trees = config.mode == RunMode::DepParse ||
                          (config.mode == RunMode::Alternating && task_requires_tree(secondary_kind_of(config)) &&
                           config.train.scheduler_p > 0.0);
  if (need_trees)
    for (const auto& ex : train)
      if (!ex.source_tree)
        throw Error("missing_input", "mode " + std::string(run_mode_name(config.mode)) +
                                         " needs source trees; provide *_conllu inputs or synthetic data");

  Vocabulary vocab;
  if (config.mode == RunMode::Alternating) {
    const TaskKind secondary = secondary_kind_of(config);
    std::vector<std::vector<std::string>> storage;
    storage.reserve(train.size() * 4);
    for (const auto& ex : train) {
      TaskExample mt = linearize(ex, TaskKind::Translate, config.train.use_task_token);
      storage.push_back(std::move(mt.source));
      storage.push_back(std::move(mt.target));
      if (config.train.scheduler_p > 0.0) {
        TaskExample sec = linearize(ex, secondary, true);
        storage.push_back(std::move(sec.source));
        storage.push_back(std::move(sec.target));
      }
    }
    std::vector<const std::vector<std::string>*> seqs;
    seqs.reserve(storage.size());
    for (const auto& s : storage) seqs.push_back(&s);
    vocab = build_vocab_from_sequences(seqs, config.vocab_max_size);
  } else {
    vocab = build_vocab(train, config.vocab_max_size);
  }

  config.save((fs::path(config.run_dir) / "config.json").string());
  vocab.save((d / "vocab.txt").string());
  write_corpus_tsv((d / "train.tsv").string(), train);
  write_corpus_tsv((d / "dev.tsv").string(), dev);
  write_corpus_tsv((d / "test.tsv").string(), test);

  if (export_tasks) {
    std::vector<TaskExample> mt;
    mt.reserve(train.size());
    for (const auto& ex : train) mt.push_back(linearize(ex, TaskKind::Translate, config.train.use_task_token));
    write_task_stream((d / "train.Translate.tasks").string(), mt);
    if (config.mode == RunMode::Alternating && config.train.scheduler_p > 0.0) {
      const TaskKind secondary = secondary_kind_of(config);
      std::vector<TaskExample> sec;
      sec.reserve(train.size());
      for (const auto& ex : train) sec.push_back(linearize(ex, secondary, true));
      write_task_stream((d / ("train." + task_name(secondary) + ".tasks")).string(), sec);
    }
  }

  nlohmann::json manifest;
  manifest["examples"] = {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}};
  nlohmann::json files = nlohmann::json::object();
  for (const auto& entry : fs::directory_iterator(d)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    files[entry.path().filename().string()] = {{"bytes", fs::file_size(entry.path())},
                                               {"fnv1a64", hex64(fnv1a64_file(entry.path()))}};
  }
  manifest["files"] = files;
  std::ofstream mout(d / "manifest.json", std::ios::binary);
  mout << manifest.dump(2) << "\n";
}

TrainResult cmd_train(const std::string& run_dir) {
  const RunConfig rc = load_frozen_config(run_dir);
  const PreparedData data = load_prepared(run_dir);
  TrainResult res = train_run(rc, data, run_dir);
  if (res.diverged)
    throw Error("model_error", "training diverged (non-finite loss) after step " + std::to_string(res.steps) +
                                   "; last good checkpoint retained");
  return res;
}

namespace {

std::vector<Sentence> read_plain_sentences(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read input: " + path);
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Sentence s;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) s.tokens.push_back(tok);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> frame_source(const RunConfig& rc, const Vocabulary& vocab, const Sentence& s) {
  if (rc.mode == RunMode::Alternating) {
    std::vector<int> ids = vocab.encode_all(s.tokens);
    if (rc.train.use_task_token) ids.push_back(vocab.encode(task_token(TaskKind::Translate)));
    return ids;
  }
  return encode_joint_source(vocab, s);
}

}  // namespace

void cmd_translate(const std::string& run_dir, const std::string& input, const std::string& output,
                   const std::string& checkpoint) {
  const RunConfig rc = load_frozen_config(run_dir);
  const Vocabulary vocab = Vocabulary::load((data_dir(run_dir) / "vocab.txt").string());
  const Transformer model = Transformer::load_checkpoint(default_checkpoint(run_dir, checkpoint));
  const auto sentences = read_plain_sentences(input);

  std::vector<std::string> lines(sentences.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(sentences.size()); ++i) {
    if (sentences[i].empty()) continue;
    const auto ids = model.greedy_decode(frame_source(rc, vocab, sentences[i]), model.config().max_seq_len - 1);
    const auto toks = vocab.decode_all(ids);
    std::string line;
    for (size_t t = 0; t < toks.size(); ++t) line += (t ? " " : "") + toks[t];
    lines[i] = std::move(line);
  }
  std::ofstream out(output, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write output: " + output);
  for (const auto& l : lines) out << l << "\n";
}

void cmd_parse(const std::string& run_dir, const std::string& input, const std::string& output,
               const std::string& checkpoint) {
  const RunConfig rc = load_frozen_config(run_dir);
  if (rc.mode == RunMode::Alternating)
    throw Error("usage", "parse reads encoder attention; use a baseline/depparse/diagonalparse run");
  const Vocabulary vocab = Vocabulary::load((data_dir(run_dir) / "vocab.txt").string());
  const Transformer model = Transformer::load_checkpoint(default_checkpoint(run_dir, checkpoint));
  const auto sentences = read_plain_sentences(input);
  const ModelConfig& mc = model.config();

  std::vector<Sentence> kept;
  for (const auto& s : sentences)
    if (!s.empty()) kept.push_back(s);

  std::vector<DecodedParse> parses(kept.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
    Matrix enc_out;
    AttentionRecord attn;
    model.encode(encode_joint_source(vocab, kept[i]), enc_out, &attn);
    parses[i] = decode_parse(attn.alpha[mc.parse_layer][mc.parse_head], static_cast<int>(kept[i].size()));
  }
  write_conllu_predictions(output, kept, parses);
}

EvalReport cmd_evaluate(const std::string& run_dir, const std::string& split, const std::string& checkpoint) {
  if (split != "dev" && split != "test") throw Error("usage", "split must be 'dev' or 'test'");
  const RunConfig rc = load_frozen_config(run_dir);
  const PreparedData data = load_prepared(run_dir);
  const auto& examples = split == "dev" ? data.dev : data.test;
  if (examples.empty()) throw Error("data_error", "split " + split + " is empty");
  const Transformer model = Transformer::load_checkpoint(default_checkpoint(run_dir, checkpoint));

  EvalReport rep;
  if (rc.mode == RunMode::Alternating) {
    const TaskKind secondary = secondary_kind_of(rc);
    if (task_requires_tree(secondary))
      for (const auto& ex : examples)
        if (!ex.source_tree)
          throw Error("missing_input", "parsing metrics requested but split lacks gold trees");
    const AlternatingEval ev =
        evaluate_alternating(model, data.vocab, examples, INT_MAX, secondary, rc.train.use_task_token);
    rep.bleu = ev.bleu;
    rep.secondary_exact = ev.secondary_exact;
    rep.uas = ev.uas;
    rep.label_acc = ev.label_acc;
  } else {
    if (rc.mode == RunMode::DepParse)
      for (const auto& ex : examples)
        if (!ex.source_tree)
          throw Error("missing_input", "parsing metrics requested but split lacks gold trees");
    const JointEval ev = evaluate_joint(model, data.vocab, examples, INT_MAX);
    rep.bleu = ev.bleu;
    if (rc.mode == RunMode::DepParse) rep.uas = ev.uas;
    if (rc.mode == RunMode::DiagonalParse) rep.diag_precision = ev.diag_precision;
  }

  nlohmann::json j;
  j["mode"] = run_mode_name(rc.mode);
  j["split"] = split;
  j["bleu"] = rep.bleu;
  if (rep.uas) j["uas"] = *rep.uas;
  if (rep.diag_precision) j["diag_precision"] = *rep.diag_precision;
  if (rep.label_acc) j["label_acc"] = *rep.label_acc;
  if (rep.secondary_exact) j["secondary_exact"] = *rep.secondary_exact;
  std::ofstream out(fs::path(run_dir) / ("eval_" + split + ".json"), std::ios::binary);
  out << j.dump(2) << "\n";
  return rep;
}

void cmd_attn_hist(const std::string& run_dir, const std::string& split, int first_n,
                   const std::string& checkpoint) {
  if (split != "dev" && split != "test") throw Error("usage", "split must be 'dev' or 'test'");
  if (first_n < 1) throw Error("usage", "first_n must be positive");
  const RunConfig rc = load_frozen_config(run_dir);
  const PreparedData data = load_prepared(run_dir);
  const auto& examples = split == "dev" ? data.dev : data.test;
  if (examples.empty()) throw Error("data_error", "split " + split + " is empty");
  const Transformer model = Transformer::load_checkpoint(default_checkpoint(run_dir, checkpoint));

  int n = first_n;
  if (n > static_cast<int>(examples.size())) {
    n = static_cast<int>(examples.size());
    std::cerr << "warning: first_n " << first_n << " exceeds split size, clamping to " << n << "\n";
  }

  std::vector<AttentionRecord> records(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Matrix enc_out;
    model.encode(frame_source(rc, data.vocab, examples[i].source), enc_out, &records[i]);
  }

  const fs::path out_dir = fs::path(run_dir) / "attn";
  fs::create_directories(out_dir);
  for (int l = 0; l < model.config().num_layers; ++l) {
    const HistogramReport rep = attention_histogram(records, l);
    std::ofstream out(out_dir / ("layer" + std::to_string(l) + ".json"), std::ios::binary);
    out << histogram_to_json(rep) << "\n";
  }
}

MetricsReport cmd_report(const std::string& run_dir) { return report(run_dir); }

// ---- argv front end ----

int run_cli(int argc, char** argv) {
  CLI::App app{"joint machine translation and dependency parsing workbench"};
  app.require_subcommand(1);

  std::string config_path, run_dir, input, output, checkpoint, split = "test";
  int first_n = 100;
  bool force = false, export_tasks = false;

  auto* prep = app.add_subcommand("prepare", "generate or ingest data, build the vocabulary");
  prep->add_option("--config", config_path, "run config JSON")->required();
  prep->add_flag("--force", force, "overwrite an existing data directory");
  prep->add_flag("--export-tasks", export_tasks, "also write linearized task streams");
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<CLI::Option*> override_opts;
  const auto keys = RunConfig::override_keys();
  overrides.reserve(keys.size());
  for (const auto& key : keys) {
    overrides.emplace_back(key, "");
    override_opts.push_back(prep->add_option("--" + key, overrides.back().second, "override config key"));
  }

  auto* train = app.add_subcommand("train", "train from a prepared run directory");
  train->add_option("--run_dir", run_dir, "run directory")->required();

  auto* translate = app.add_subcommand("translate", "greedy-decode a plain text file");
  translate->add_option("--run_dir", run_dir)->required();
  translate->add_option("--input", input)->required();
  translate->add_option("--output", output)->required();
  translate->add_option("--checkpoint", checkpoint);

  auto* parse = app.add_subcommand("parse", "attention-argmax parses as CoNLL-U");
  parse->add_option("--run_dir", run_dir)->required();
  parse->add_option("--input", input)->required();
  parse->add_option("--output", output)->required();
  parse->add_option("--checkpoint", checkpoint);

  auto* evaluate = app.add_subcommand("evaluate", "mode-appropriate metrics on a prepared split");
  evaluate->add_option("--run_dir", run_dir)->required();
  evaluate->add_option("--split", split)->check(CLI::IsMember({"dev", "test"}));
  evaluate->add_option("--checkpoint", checkpoint);

  auto* hist = app.add_subcommand("attn-hist", "encoder attention histograms per layer");
  hist->add_option("--run_dir", run_dir)->required();
  hist->add_option("--split", split)->check(CLI::IsMember({"dev", "test"}));
  hist->add_option("--first_n", first_n);
  hist->add_option("--checkpoint", checkpoint);

  auto* rep = app.add_subcommand("report", "consolidate the metrics log into plot-ready series");
  rep->add_option("--run_dir", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error:usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*prep) {
      RunConfig rc = RunConfig::load(config_path);
      for (size_t i = 0; i < overrides.size(); ++i)
        if (override_opts[i]->count() > 0) rc.apply_override(overrides[i].first, overrides[i].second);
      cmd_prepare(std::move(rc), force, export_tasks);
    } else if (*train) {
      const TrainResult res = cmd_train(run_dir);
      std::cout << "trained " << res.steps << " steps, checkpoint at " << res.last_checkpoint << "\n";
    } else if (*translate) {
      cmd_translate(run_dir, input, output, checkpoint);
    } else if (*parse) {
      cmd_parse(run_dir, input, output, checkpoint);
    } else if (*evaluate) {
      const EvalReport r = cmd_evaluate(run_dir, split, checkpoint);
      std::cout << "bleu " << r.bleu;
      if (r.uas) std::cout << " uas " << *r.uas;
      if (r.diag_precision) std::cout << " diag_precision " << *r.diag_precision;
      if (r.label_acc) std::cout << " label_acc " << *r.label_acc;
      if (r.secondary_exact) std::cout << " secondary_exact " << *r.secondary_exact;
      std::cout << "\n";
    } else if (*hist) {
      cmd_attn_hist(run_dir, split, first_n, checkpoint);
    } else if (*rep) {
      cmd_report(run_dir);
    }
  } catch (const Error& e) {
    std::cerr << "error:" << e.category << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace depmt
