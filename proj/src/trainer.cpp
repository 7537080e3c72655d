#include "depmt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "depmt/error.hpp"
#include "depmt/eval.hpp"
#include "depmt/parse.hpp"

namespace depmt {

namespace fs = std::filesystem;

// ---- optimizer ----

Adam::Adam(const Params& shape, const TrainConfig& config, int model_dim)
    : m_(make_zero_like(shape)), v_(make_zero_like(shape)), config_(config), model_dim_(model_dim) {}

double Adam::current_lr() const {
  const double t = static_cast<double>(t_ < 1 ? 1 : t_);
  const double warm = static_cast<double>(config_.warmup < 1 ? 1 : config_.warmup);
  return config_.lr / std::sqrt(static_cast<double>(model_dim_)) *
         std::min(1.0 / std::sqrt(t), t / (warm * std::sqrt(warm)));
}

void Adam::step(Params& params, const Params& grads) {
  ++t_;
  const double lr = current_lr();
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  // flat walk over the three mirrored parameter sets
  std::vector<Matrix*> ps, ms, vs;
  std::vector<const Matrix*> gs;
  for_each_tensor(params, [&](const std::string&, Matrix& t) { ps.push_back(&t); });
  for_each_tensor(m_, [&](const std::string&, Matrix& t) { ms.push_back(&t); });
  for_each_tensor(v_, [&](const std::string&, Matrix& t) { vs.push_back(&t); });
  for_each_tensor(const_cast<Params&>(grads), [&](const std::string&, Matrix& t) { gs.push_back(&t); });

  for (size_t i = 0; i < ps.size(); ++i) {
    Matrix& p = *ps[i];
    Matrix& m = *ms[i];
    Matrix& v = *vs[i];
    const Matrix& g = *gs[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      const double gj = g.data[j];
      m.data[j] = b1 * m.data[j] + (1.0 - b1) * gj;
      v.data[j] = b2 * v.data[j] + (1.0 - b2) * gj * gj;
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

// ---- evaluation ----

std::vector<int> encode_joint_source(const Vocabulary& vocab, const Sentence& source) {
  std::vector<int> ids;
  ids.reserve(source.size() + 1);
  ids.push_back(kRootId);
  for (const auto& t : source.tokens) ids.push_back(vocab.encode(t));
  return ids;
}

JointEval evaluate_joint(const Transformer& model, const Vocabulary& vocab,
                         const std::vector<ParallelExample>& data, int limit) {
  const int n = std::min<int>(limit, static_cast<int>(data.size()));
  const ModelConfig& cfg = model.config();

  std::vector<std::vector<std::string>> hyps(n), refs(n);
  std::vector<long> uas_match(n, 0), uas_total(n, 0), diag_match(n, 0), diag_total(n, 0);
  std::vector<char> has_tree(n, 0);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const ParallelExample& ex = data[i];
    const auto src = encode_joint_source(vocab, ex.source);
    const auto out = model.greedy_decode(src, cfg.max_seq_len - 1);
    hyps[i] = vocab.decode_all(out);
    refs[i] = ex.target.tokens;

    AttentionRecord attn;
    Matrix enc_out;
    model.encode(src, enc_out, &attn);
    const int words = static_cast<int>(ex.source.size());
    const DecodedParse pred = decode_parse(attn.alpha[cfg.parse_layer][cfg.parse_head], words);
    diag_total[i] = words;
    for (int w = 0; w < words; ++w)
      if (pred.heads[w] == w) ++diag_match[i];
    if (ex.source_tree) {
      has_tree[i] = 1;
      uas_total[i] = words;
      for (int w = 0; w < words; ++w)
        if (pred.heads[w] == ex.source_tree->heads[w]) ++uas_match[i];
    }
  }

  JointEval ev;
  ev.bleu = corpus_bleu(hyps, refs);
  long um = 0, ut = 0, dm = 0, dt = 0;
  for (int i = 0; i < n; ++i) {
    um += uas_match[i];
    ut += uas_total[i];
    dm += diag_match[i];
    dt += diag_total[i];
    ev.has_uas = ev.has_uas || has_tree[i];
  }
  ev.uas = ut > 0 ? static_cast<double>(um) / ut : 0.0;
  ev.diag_precision = dt > 0 ? static_cast<double>(dm) / dt : 0.0;
  return ev;
}

AlternatingEval evaluate_alternating(const Transformer& model, const Vocabulary& vocab,
                                     const std::vector<ParallelExample>& data, int limit, TaskKind secondary,
                                     bool use_task_token) {
  const int n = std::min<int>(limit, static_cast<int>(data.size()));
  const ModelConfig& cfg = model.config();
  const bool want_heads = secondary == TaskKind::DepHeads || secondary == TaskKind::DepHeadsLabels;
  const bool want_labels = secondary == TaskKind::DepLabels || secondary == TaskKind::DepHeadsLabels;

  std::vector<std::vector<std::string>> hyps(n), refs(n);
  std::vector<char> exact(n, 0);
  std::vector<long> uas_match(n, 0), uas_total(n, 0), lab_match(n, 0), lab_total(n, 0);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const ParallelExample& ex = data[i];

    const TaskExample mt = linearize(ex, TaskKind::Translate, use_task_token);
    const auto mt_out = model.greedy_decode(vocab.encode_all(mt.source), cfg.max_seq_len - 1);
    hyps[i] = vocab.decode_all(mt_out);
    refs[i] = mt.target;

    const TaskExample sec = linearize(ex, secondary, true);
    const auto sec_out_ids = model.greedy_decode(vocab.encode_all(sec.source), cfg.max_seq_len - 1);
    const auto sec_out = vocab.decode_all(sec_out_ids);
    // exact match is scored against the gold as expressible in-vocabulary
    const auto sec_gold = vocab.decode_all(vocab.encode_all(sec.target));
    exact[i] = sec_out == sec_gold ? 1 : 0;

    if (ex.source_tree && (want_heads || want_labels)) {
      std::vector<std::string> head_toks, label_toks;
      if (secondary == TaskKind::DepHeadsLabels)
        split_interleaved(sec_out, head_toks, label_toks);
      else if (secondary == TaskKind::DepHeads)
        head_toks = sec_out;
      else
        label_toks = sec_out;
      if (want_heads) {
        const auto rec = reconstruct_tree(ex.source, head_toks);
        uas_total[i] = static_cast<long>(ex.source.size());
        for (size_t w = 0; w < ex.source.size(); ++w)
          if (rec.tree.heads[w] == ex.source_tree->heads[w]) ++uas_match[i];
      }
      if (want_labels) {
        // model emits "#Label" tokens
        std::vector<std::string> stripped;
        for (const auto& t : label_toks) stripped.push_back(t.size() > 1 && t[0] == '#' ? t.substr(1) : t);
        lab_total[i] = static_cast<long>(ex.source.size());
        for (size_t w = 0; w < ex.source.size(); ++w)
          if (w < stripped.size() && stripped[w] == ex.source_tree->labels[w]) ++lab_match[i];
      }
    }
  }

  AlternatingEval ev;
  ev.bleu = corpus_bleu(hyps, refs);
  long ex_sum = 0, um = 0, ut = 0, lm = 0, lt = 0;
  for (int i = 0; i < n; ++i) {
    ex_sum += exact[i];
    um += uas_match[i];
    ut += uas_total[i];
    lm += lab_match[i];
    lt += lab_total[i];
  }
  ev.secondary_exact = n > 0 ? static_cast<double>(ex_sum) / n : 0.0;
  if (want_heads && ut > 0) ev.uas = static_cast<double>(um) / ut;
  if (want_labels && lt > 0) ev.label_acc = static_cast<double>(lm) / lt;
  return ev;
}

// ---- training ----

namespace {

struct JointItem {
  EncodedExample ex;
  ParseTarget target;
  bool has_target = false;
};

void add_params(const Params& src, Params& dst) {
  std::vector<const Matrix*> s;
  for_each_tensor(const_cast<Params&>(src), [&](const std::string&, Matrix& t) { s.push_back(&t); });
  size_t i = 0;
  for_each_tensor(dst, [&](const std::string&, Matrix& t) {
    const Matrix& m = *s[i++];
    for (size_t j = 0; j < t.data.size(); ++j) t.data[j] += m.data[j];
  });
}

void zero_params(Params& p) {
  for_each_tensor(p, [](const std::string&, Matrix& t) { t.fill(0.0); });
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainResult train_run(const RunConfig& rc, const PreparedData& data, const std::string& run_dir) {
  ModelConfig mc = rc.model;
  mc.vocab_size = data.vocab.size();
  mc.validate();
  if (data.train.empty()) throw Error("data_error", "training corpus is empty");
  if (data.dev.empty()) throw Error("data_error", "dev corpus is empty");

  const bool joint = rc.mode != RunMode::Alternating;
  const TrainConfig& tc = rc.train;

  Transformer model(mc);
  Adam opt(model.params(), tc, mc.model_dim);

  fs::create_directories(fs::path(run_dir) / "checkpoints");
  std::ofstream metrics(fs::path(run_dir) / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw Error("io_error", "cannot write metrics log under " + run_dir);

  const auto t0 = std::chrono::steady_clock::now();
  Rng order_rng(tc.data_seed);

  // ---- data streams ----
  std::vector<JointItem> items;
  TaskKind secondary = TaskKind::CopySrc;
  std::unique_ptr<TaskMixer> mixer;

  if (joint) {
    items.reserve(data.train.size());
    for (const auto& pex : data.train) {
      JointItem it;
      it.ex.src = encode_joint_source(data.vocab, pex.source);
      make_decoder_io(data.vocab.encode_all(pex.target.tokens), it.ex.tgt_in, it.ex.tgt_out);
      if (static_cast<int>(it.ex.src.size()) > mc.max_seq_len ||
          static_cast<int>(it.ex.tgt_in.size()) > mc.max_seq_len)
        continue;  // overlong pairs are skipped
      const int words = static_cast<int>(pex.source.size());
      if (mc.parse_mode == ParseMode::Dep) {
        if (!pex.source_tree)
          throw Error("data_error", "depparse training requires source trees on every example");
        it.target = dep_target(*pex.source_tree, words);
        it.has_target = true;
      } else if (mc.parse_mode == ParseMode::Diagonal) {
        it.target = diagonal_target(words);
        it.has_target = true;
      }
      items.push_back(std::move(it));
    }
    if (items.empty()) throw Error("data_error", "no usable training examples after length filtering");
    for (auto& it : items)
      if (it.has_target) it.ex.parse_target = &it.target;
  } else {
    TaskKind kind;
    if (!task_kind_from_name(tc.secondary_task, kind))
      throw Error("bad_config", "unknown secondary task: " + tc.secondary_task);
    secondary = kind;
    std::vector<TaskExample> primary, sec;
    primary.reserve(data.train.size());
    for (const auto& pex : data.train) {
      TaskExample t = linearize(pex, TaskKind::Translate, tc.use_task_token);
      if (static_cast<int>(t.source.size()) + 1 <= mc.max_seq_len &&
          static_cast<int>(t.target.size()) + 1 <= mc.max_seq_len)
        primary.push_back(std::move(t));
      if (tc.scheduler_p > 0.0) {
        TaskExample s = linearize(pex, kind, true);
        if (static_cast<int>(s.source.size()) + 1 <= mc.max_seq_len &&
            static_cast<int>(s.target.size()) + 1 <= mc.max_seq_len)
          sec.push_back(std::move(s));
      }
    }
    order_rng.shuffle(primary);
    order_rng.shuffle(sec);
    SchedulerConfig sc;
    sc.p = tc.scheduler_p;
    sc.seed = mix_seed(tc.data_seed, 0x5c4ed);
    mixer = std::make_unique<TaskMixer>(std::move(primary), std::move(sec), sc);
  }

  // ---- loop ----
  const int B = tc.batch_size;
  std::vector<Params> slots;
  for (int b = 0; b < B; ++b) slots.push_back(make_zero_like(model.params()));
  Params grads = make_zero_like(model.params());
  std::vector<LossParts> losses(B);
  std::vector<EncodedExample> batch_alt(B);

  TrainResult result;
  long joint_consumed = 0;

  auto write_record = [&](long step, double mt, double parse) {
    nlohmann::json rec;
    rec["step"] = step;
    rec["mt_loss"] = mt;
    rec["parse_loss"] = parse;
    if (joint) {
      const JointEval ev = evaluate_joint(model, data.vocab, data.dev, tc.dev_eval_size);
      rec["dev_bleu"] = ev.bleu;
      rec["dev_uas"] = ev.uas;
      rec["dev_diag_precision"] = ev.diag_precision;
      rec["examples"] = {{"Translate", joint_consumed}};
    } else {
      const AlternatingEval ev =
          evaluate_alternating(model, data.vocab, data.dev, tc.dev_eval_size, secondary, tc.use_task_token);
      rec["dev_bleu"] = ev.bleu;
      rec["dev_secondary_exact"] = ev.secondary_exact;
      if (ev.uas) rec["dev_uas"] = *ev.uas;
      if (ev.label_acc) rec["dev_label_acc"] = *ev.label_acc;
      rec["examples"] = {{"Translate", mixer->primary_consumed()},
                         {task_name(secondary), mixer->secondary_consumed()}};
    }
    rec["lr"] = opt.current_lr();
    rec["wall_seconds"] = seconds_since(t0);
    metrics << rec.dump() << "\n";
    metrics.flush();
  };

  auto save_checkpoint = [&](long step) {
    const std::string path = (fs::path(run_dir) / "checkpoints" / ("checkpoint_" + std::to_string(step) + ".bin")).string();
    model.save_checkpoint(path, step);
    const std::string last = (fs::path(run_dir) / "checkpoints" / "checkpoint_last.bin").string();
    model.save_checkpoint(last, step);
    result.last_checkpoint = last;
  };

  for (long step = 1; step <= tc.steps; ++step) {
    if (joint) {
      // draw indices first so the data order is a pure function of the seed
      std::vector<int> idx(B);
      for (int b = 0; b < B; ++b) idx[b] = order_rng.below(static_cast<int>(items.size()));
#pragma omp parallel for schedule(static)
      for (int b = 0; b < B; ++b) {
        zero_params(slots[b]);
        losses[b] = model.loss_and_gradient(items[idx[b]].ex, slots[b], 1.0 / B,
                                            mix_seed(tc.data_seed, step, b));
      }
      joint_consumed += B;
    } else {
      for (int b = 0; b < B; ++b) {
        const TaskExample& te = mixer->next();
        EncodedExample& ex = batch_alt[b];
        ex.src = data.vocab.encode_all(te.source);
        make_decoder_io(data.vocab.encode_all(te.target), ex.tgt_in, ex.tgt_out);
        ex.parse_target = nullptr;
      }
#pragma omp parallel for schedule(static)
      for (int b = 0; b < B; ++b) {
        zero_params(slots[b]);
        losses[b] = model.loss_and_gradient(batch_alt[b], slots[b], 1.0 / B,
                                            mix_seed(tc.data_seed, step, b));
      }
    }

    double mt = 0.0, parse = 0.0;
    for (int b = 0; b < B; ++b) {
      mt += losses[b].mt;
      parse += losses[b].parse;
    }
    mt /= B;
    parse /= B;

    if (!std::isfinite(mt) || !std::isfinite(parse)) {
      result.diverged = true;
      result.steps = step - 1;
      return result;  // last good checkpoint stays in place
    }

    zero_params(grads);
    for (int b = 0; b < B; ++b) add_params(slots[b], grads);
    opt.step(model.params(), grads);

    if (step % tc.eval_every == 0 || step == tc.steps) {
      write_record(step, mt, parse);
      save_checkpoint(step);
    }
    result.steps = step;
  }

  return result;
}

}  // namespace depmt
