#include "depmt/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "depmt/corpus.hpp"
#include "depmt/error.hpp"
#include "depmt/kernels.hpp"
#include "depmt/rng.hpp"
#include "config_json.hpp"

// Encoder-decoder transformer with pre-sublayer normalization, sinusoidal
// positions and an embedding matrix shared between the encoder input, the
// decoder input and the output projection. The backward pass is written by
// hand against the forward workspace; its correctness is pinned by the
// finite-difference suites in tests/.

namespace depmt {

const char* parse_mode_name(ParseMode mode) {
  switch (mode) {
    case ParseMode::None: return "none";
    case ParseMode::Dep: return "dep";
    case ParseMode::Diagonal: return "diagonal";
  }
  return "none";
}

bool parse_mode_from_name(const std::string& name, ParseMode& out) {
  if (name == "none") out = ParseMode::None;
  else if (name == "dep") out = ParseMode::Dep;
  else if (name == "diagonal") out = ParseMode::Diagonal;
  else return false;
  return true;
}

void ModelConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || model_dim < 2 || ff_dim < 1 || max_seq_len < 2)
    throw Error("bad_config", "model dimensions must be positive");
  if (model_dim % num_heads != 0)
    throw Error("bad_config", "model_dim " + std::to_string(model_dim) + " not divisible by num_heads " +
                                  std::to_string(num_heads));
  if (dropout < 0.0 || dropout >= 1.0) throw Error("bad_config", "dropout must lie in [0,1)");
  if (vocab_size <= 0) throw Error("bad_config", "vocab_size not set");
  if (parse_mode != ParseMode::None) {
    if (parse_layer < 0 || parse_layer >= num_layers)
      throw Error("bad_config", "parse_layer " + std::to_string(parse_layer) + " outside [0," +
                                    std::to_string(num_layers - 1) + "]");
    if (parse_head < 0 || parse_head >= num_heads)
      throw Error("bad_config", "parse_head " + std::to_string(parse_head) + " outside [0," +
                                    std::to_string(num_heads - 1) + "]");
    if (parse_weight < 0.0) throw Error("bad_config", "parse_weight must be >= 0");
  }
}

Params make_zero_like(const Params& p) {
  Params g = p;
  for_each_tensor(g, [](const std::string&, Matrix& m) { m.fill(0.0); });
  return g;
}

void make_decoder_io(const std::vector<int>& target_ids, std::vector<int>& tgt_in, std::vector<int>& tgt_out) {
  tgt_in.clear();
  tgt_out.clear();
  tgt_in.push_back(kEosId);
  tgt_in.insert(tgt_in.end(), target_ids.begin(), target_ids.end());
  tgt_out = target_ids;
  tgt_out.push_back(kEosId);
}

// ---- workspace ----

namespace {

using kern::add_row_bias;
using kern::layernorm;
using kern::layernorm_backward;
using kern::matmul;
using kern::matmul_nt;
using kern::matmul_tn;
using kern::relu;
using kern::relu_backward;
using kern::softmax_backward;
using kern::softmax_rows;
using kern::softmax_rows_causal;

struct NormWs {
  Matrix y, mean, rstd;
};

struct AttnWs {
  Matrix q, k, v;              // nq x d, nk x d, nk x d
  std::vector<Matrix> alpha;   // per head, nq x nk
  Matrix ctx;                  // nq x d
  Matrix out;                  // nq x d
  Matrix drop_mask;
};

struct FfWs {
  Matrix pre, act, out;
  Matrix drop_mask;
};

struct EncLayerWs {
  NormWs ln1;
  AttnWs attn;
  Matrix x1;
  NormWs ln2;
  FfWs ff;
  Matrix x2;
};

struct DecLayerWs {
  NormWs ln1;
  AttnWs self;
  Matrix x1;
  NormWs ln2;
  AttnWs cross;
  Matrix x2;
  NormWs ln3;
  FfWs ff;
  Matrix x3;
};

struct Ws {
  Matrix enc_x0, dec_x0;
  Matrix enc_x0_mask, dec_x0_mask;
  std::vector<EncLayerWs> enc;
  NormWs enc_norm;
  std::vector<DecLayerWs> dec;
  NormWs dec_norm;
  Matrix logits;
};

void copy_head(const Matrix& src, int head, int dh, Matrix& dst) {
  dst.resize(src.rows, dh);
  const int off = head * dh;
  for (int i = 0; i < src.rows; ++i) std::memcpy(dst[i], src[i] + off, sizeof(double) * dh);
}

void add_head(Matrix& dst, int head, int dh, const Matrix& src) {
  const int off = head * dh;
  for (int i = 0; i < src.rows; ++i)
    for (int j = 0; j < dh; ++j) dst[i][off + j] += src[i][j];
}

void add_colsum(const Matrix& m, Matrix& acc) {
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) acc[0][j] += m[i][j];
}

void apply_dropout(Matrix& x, double rate, Rng& rng, Matrix& mask) {
  mask.resize(x.rows, x.cols);
  const double keep = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double m = rng.unit() >= rate ? keep : 0.0;
    mask.data[i] = m;
    x.data[i] *= m;
  }
}

void mask_gradient(const Matrix& mask, Matrix& d) {
  if (mask.size() == 0) return;
  for (size_t i = 0; i < d.data.size(); ++i) d.data[i] *= mask.data[i];
}

void add_into(const Matrix& src, Matrix& dst) {
  if (dst.rows != src.rows || dst.cols != src.cols) dst.resize(src.rows, src.cols);
  for (size_t i = 0; i < src.data.size(); ++i) dst.data[i] += src.data[i];
}

void norm_forward(const Params::Norm& w, const Matrix& x, NormWs& ws) {
  layernorm(x, w.gain, w.bias, ws.y, ws.mean, ws.rstd);
}

void attn_forward(const Params::Attention& w, const Matrix& x_q, const Matrix& x_kv, int num_heads, bool causal,
                  AttnWs& ws) {
  const int d = x_q.cols;
  const int dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  matmul(x_q, w.wq, ws.q);
  matmul(x_kv, w.wk, ws.k);
  matmul(x_kv, w.wv, ws.v);
  ws.alpha.resize(num_heads);
  ws.ctx.resize(x_q.rows, d);
  Matrix qh, kh, vh, scores, ctxh;
  for (int h = 0; h < num_heads; ++h) {
    copy_head(ws.q, h, dh, qh);
    copy_head(ws.k, h, dh, kh);
    copy_head(ws.v, h, dh, vh);
    matmul_nt(qh, kh, scores);
    for (double& s : scores.data) s *= scale;
    if (causal)
      softmax_rows_causal(scores, ws.alpha[h]);
    else
      softmax_rows(scores, ws.alpha[h]);
    matmul(ws.alpha[h], vh, ctxh);
    add_head(ws.ctx, h, dh, ctxh);
  }
  matmul(ws.ctx, w.wo, ws.out);
}

// Parse supervision injected at one encoder head: coef * (alpha - target)
// added to the score gradient on the non-ROOT rows.
struct ParseGrad {
  const ParseTarget* target = nullptr;
  int head = -1;
  double coef = 0.0;
};

void attn_backward(const Params::Attention& w, const Matrix& x_q, const Matrix& x_kv, int num_heads,
                   const AttnWs& ws, const Matrix& dout, Matrix& dx_q, Matrix& dx_kv, Params::Attention& gw,
                   const ParseGrad* parse = nullptr) {
  const int d = x_q.cols;
  const int dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dctx;
  matmul_nt(dout, w.wo, dctx);
  matmul_tn(ws.ctx, dout, gw.wo, /*accumulate=*/true);

  Matrix dq(ws.q.rows, d), dk(ws.k.rows, d), dv(ws.v.rows, d);
  Matrix qh, kh, vh, dctxh, dalpha, dscores, dqh, dkh, dvh;
  for (int h = 0; h < num_heads; ++h) {
    copy_head(ws.q, h, dh, qh);
    copy_head(ws.k, h, dh, kh);
    copy_head(ws.v, h, dh, vh);
    copy_head(dctx, h, dh, dctxh);
    const Matrix& alpha = ws.alpha[h];
    matmul_nt(dctxh, vh, dalpha);
    matmul_tn(alpha, dctxh, dvh);
    softmax_backward(alpha, dalpha, dscores);
    if (parse && parse->target && h == parse->head) {
      const Matrix& t = parse->target->mat;
      for (int i = 0; i < dscores.rows; ++i) {
        if (!parse->target->include_row[i]) continue;
        for (int j = 0; j < dscores.cols; ++j) dscores[i][j] += parse->coef * (alpha[i][j] - t[i][j]);
      }
    }
    for (double& s : dscores.data) s *= scale;
    matmul(dscores, kh, dqh);
    matmul_tn(dscores, qh, dkh);
    add_head(dq, h, dh, dqh);
    add_head(dk, h, dh, dkh);
    add_head(dv, h, dh, dvh);
  }
  matmul_nt(dq, w.wq, dx_q, /*accumulate=*/true);
  matmul_tn(x_q, dq, gw.wq, true);
  matmul_nt(dk, w.wk, dx_kv, true);
  matmul_tn(x_kv, dk, gw.wk, true);
  matmul_nt(dv, w.wv, dx_kv, true);
  matmul_tn(x_kv, dv, gw.wv, true);
}

void ff_forward(const Params::Feedforward& w, const Matrix& x, FfWs& ws) {
  matmul(x, w.w1, ws.pre);
  add_row_bias(ws.pre, w.b1);
  relu(ws.pre, ws.act);
  matmul(ws.act, w.w2, ws.out);
  add_row_bias(ws.out, w.b2);
}

void ff_backward(const Params::Feedforward& w, const Matrix& x, const FfWs& ws, const Matrix& dout, Matrix& dx,
                 Params::Feedforward& gw) {
  add_colsum(dout, gw.b2);
  Matrix dact, dpre;
  matmul_nt(dout, w.w2, dact);
  matmul_tn(ws.act, dout, gw.w2, true);
  relu_backward(ws.pre, dact, dpre);
  add_colsum(dpre, gw.b1);
  matmul_tn(x, dpre, gw.w1, true);
  matmul_nt(dpre, w.w1, dx, true);
}

}  // namespace

// ---- transformer ----

Transformer::Transformer(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.model_dim;
  const int ff = config_.ff_dim;

  auto norm = [&](Params::Norm& n) {
    n.gain.resize(1, d);
    n.bias.resize(1, d);
  };
  auto attention = [&](Params::Attention& a) {
    a.wq.resize(d, d);
    a.wk.resize(d, d);
    a.wv.resize(d, d);
    a.wo.resize(d, d);
  };
  auto feedforward = [&](Params::Feedforward& w) {
    w.w1.resize(d, ff);
    w.b1.resize(1, ff);
    w.w2.resize(ff, d);
    w.b2.resize(1, d);
  };

  params_.embed.resize(config_.vocab_size, d);
  params_.enc.resize(config_.num_layers);
  params_.dec.resize(config_.num_layers);
  for (auto& l : params_.enc) {
    norm(l.ln_attn);
    attention(l.attn);
    norm(l.ln_ff);
    feedforward(l.ff);
  }
  norm(params_.enc_norm);
  for (auto& l : params_.dec) {
    norm(l.ln_self);
    attention(l.self);
    norm(l.ln_cross);
    attention(l.cross);
    norm(l.ln_ff);
    feedforward(l.ff);
  }
  norm(params_.dec_norm);

  // deterministic initialization: Glorot-uniform weights, unit gains,
  // zero biases, N(0, 1/sqrt(d))-scaled uniform embeddings
  Rng rng(config_.seed);
  for_each_tensor(params_, [&](const std::string& name, Matrix& m) {
    const bool is_gain = name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    const bool is_bias = (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) ||
                         (name.size() >= 3 && (name.compare(name.size() - 3, 3, ".b1") == 0 ||
                                               name.compare(name.size() - 3, 3, ".b2") == 0));
    if (is_gain) {
      m.fill(1.0);
    } else if (is_bias) {
      m.fill(0.0);
    } else if (name == "embed") {
      const double a = std::sqrt(3.0 / d);
      for (double& x : m.data) x = rng.sym(a);
    } else {
      const double a = std::sqrt(6.0 / (m.rows + m.cols));
      for (double& x : m.data) x = rng.sym(a);
    }
  });

  // sinusoidal position table
  pos_enc_.resize(config_.max_seq_len, d);
  for (int pos = 0; pos < config_.max_seq_len; ++pos)
    for (int i = 0; i * 2 < d; ++i) {
      const double rate = std::pow(10000.0, -2.0 * i / d);
      pos_enc_[pos][2 * i] = std::sin(pos * rate);
      if (2 * i + 1 < d) pos_enc_[pos][2 * i + 1] = std::cos(pos * rate);
    }
}

namespace {

void check_ids(const std::vector<int>& ids, int vocab, int max_len, const char* what) {
  if (ids.empty()) throw Error("model_error", std::string(what) + " sequence is empty");
  if (static_cast<int>(ids.size()) > max_len)
    throw Error("model_error", std::string(what) + " length " + std::to_string(ids.size()) +
                                   " exceeds max_seq_len " + std::to_string(max_len));
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw Error("model_error", std::string(what) + " token id " + std::to_string(id) + " out of range");
}

void embed_seq(const Matrix& embed, const Matrix& pos_enc, const std::vector<int>& ids, Matrix& x0) {
  const int d = embed.cols;
  const double s = std::sqrt(static_cast<double>(d));
  x0.resize(static_cast<int>(ids.size()), d);
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* e = embed[ids[i]];
    const double* p = pos_enc[static_cast<int>(i)];
    double* x = x0[static_cast<int>(i)];
    for (int j = 0; j < d; ++j) x[j] = e[j] * s + p[j];
  }
}

void embed_backward(const std::vector<int>& ids, const Matrix& dx0, Matrix& gembed) {
  const double s = std::sqrt(static_cast<double>(gembed.cols));
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* d = dx0[static_cast<int>(i)];
    double* g = gembed[ids[i]];
    for (int j = 0; j < gembed.cols; ++j) g[j] += d[j] * s;
  }
}

}  // namespace

// rate > 0 requires rng; masks are stored in the workspace for the backward
// pass.
static void encoder_forward(const Params& p, const ModelConfig& cfg, const Matrix& pos_enc,
                            const std::vector<int>& src, Ws& ws, double rate, Rng* rng) {
  embed_seq(p.embed, pos_enc, src, ws.enc_x0);
  if (rate > 0.0) apply_dropout(ws.enc_x0, rate, *rng, ws.enc_x0_mask);
  ws.enc.resize(cfg.num_layers);
  const Matrix* x = &ws.enc_x0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    EncLayerWs& lw = ws.enc[l];
    const Params::EncoderLayer& lp = p.enc[l];
    norm_forward(lp.ln_attn, *x, lw.ln1);
    attn_forward(lp.attn, lw.ln1.y, lw.ln1.y, cfg.num_heads, /*causal=*/false, lw.attn);
    if (rate > 0.0) apply_dropout(lw.attn.out, rate, *rng, lw.attn.drop_mask);
    lw.x1 = *x;
    add_into(lw.attn.out, lw.x1);
    norm_forward(lp.ln_ff, lw.x1, lw.ln2);
    ff_forward(lp.ff, lw.ln2.y, lw.ff);
    if (rate > 0.0) apply_dropout(lw.ff.out, rate, *rng, lw.ff.drop_mask);
    lw.x2 = lw.x1;
    add_into(lw.ff.out, lw.x2);
    x = &lw.x2;
  }
  norm_forward(p.enc_norm, *x, ws.enc_norm);
}

static void decoder_forward(const Params& p, const ModelConfig& cfg, const Matrix& pos_enc,
                            const Matrix& enc_out, const std::vector<int>& tgt_in, Ws& ws, double rate, Rng* rng) {
  embed_seq(p.embed, pos_enc, tgt_in, ws.dec_x0);
  if (rate > 0.0) apply_dropout(ws.dec_x0, rate, *rng, ws.dec_x0_mask);
  ws.dec.resize(cfg.num_layers);
  const Matrix* x = &ws.dec_x0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    DecLayerWs& lw = ws.dec[l];
    const Params::DecoderLayer& lp = p.dec[l];
    norm_forward(lp.ln_self, *x, lw.ln1);
    attn_forward(lp.self, lw.ln1.y, lw.ln1.y, cfg.num_heads, /*causal=*/true, lw.self);
    if (rate > 0.0) apply_dropout(lw.self.out, rate, *rng, lw.self.drop_mask);
    lw.x1 = *x;
    add_into(lw.self.out, lw.x1);
    norm_forward(lp.ln_cross, lw.x1, lw.ln2);
    attn_forward(lp.cross, lw.ln2.y, enc_out, cfg.num_heads, /*causal=*/false, lw.cross);
    if (rate > 0.0) apply_dropout(lw.cross.out, rate, *rng, lw.cross.drop_mask);
    lw.x2 = lw.x1;
    add_into(lw.cross.out, lw.x2);
    norm_forward(lp.ln_ff, lw.x2, lw.ln3);
    ff_forward(lp.ff, lw.ln3.y, lw.ff);
    if (rate > 0.0) apply_dropout(lw.ff.out, rate, *rng, lw.ff.drop_mask);
    lw.x3 = lw.x2;
    add_into(lw.ff.out, lw.x3);
    x = &lw.x3;
  }
  norm_forward(p.dec_norm, *x, ws.dec_norm);
  matmul_nt(ws.dec_norm.y, p.embed, ws.logits);
}

void Transformer::encode(const std::vector<int>& src_ids, Matrix& enc_out, AttentionRecord* attn) const {
  check_ids(src_ids, config_.vocab_size, config_.max_seq_len, "source");
  Ws ws;
  encoder_forward(params_, config_, pos_enc_, src_ids, ws, 0.0, nullptr);
  enc_out = ws.enc_norm.y;
  if (attn) {
    attn->alpha.resize(config_.num_layers);
    for (int l = 0; l < config_.num_layers; ++l) attn->alpha[l] = ws.enc[l].attn.alpha;
  }
}

ForwardOutput Transformer::forward(const std::vector<int>& src_ids, const std::vector<int>& tgt_in_ids) const {
  check_ids(src_ids, config_.vocab_size, config_.max_seq_len, "source");
  check_ids(tgt_in_ids, config_.vocab_size, config_.max_seq_len, "target");
  Ws ws;
  encoder_forward(params_, config_, pos_enc_, src_ids, ws, 0.0, nullptr);
  decoder_forward(params_, config_, pos_enc_, ws.enc_norm.y, tgt_in_ids, ws, 0.0, nullptr);
  ForwardOutput out;
  out.logits = std::move(ws.logits);
  out.attention.alpha.resize(config_.num_layers);
  for (int l = 0; l < config_.num_layers; ++l) out.attention.alpha[l] = std::move(ws.enc[l].attn.alpha);
  return out;
}

// ---- losses ----

double mt_loss(const Matrix& logits, const std::vector<int>& gold_ids) {
  if (static_cast<int>(gold_ids.size()) != logits.rows)
    throw Error("model_error", "logits/gold length mismatch");
  double loss = 0.0;
  int counted = 0;
  for (int i = 0; i < logits.rows; ++i) {
    const int gold = gold_ids[i];
    if (gold == kPadId) continue;
    if (gold < 0 || gold >= logits.cols) throw Error("model_error", "gold id out of range");
    const double* row = logits[i];
    double mx = row[0];
    for (int j = 1; j < logits.cols; ++j) mx = row[j] > mx ? row[j] : mx;
    double z = 0.0;
    for (int j = 0; j < logits.cols; ++j) z += std::exp(row[j] - mx);
    loss += mx + std::log(z) - row[gold];
    ++counted;
  }
  if (counted == 0) throw Error("model_error", "no non-pad target positions to score");
  return loss / counted;
}

namespace {

// loss plus d(loss)/d(logits) scaled by `scale`
double mt_loss_grad(const Matrix& logits, const std::vector<int>& gold_ids, double scale, Matrix& dlogits) {
  dlogits.resize(logits.rows, logits.cols);
  int counted = 0;
  for (int gold : gold_ids)
    if (gold != kPadId) ++counted;
  if (counted == 0) throw Error("model_error", "no non-pad target positions to score");
  const double w = scale / counted;
  double loss = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    const int gold = gold_ids[i];
    if (gold == kPadId) continue;
    const double* row = logits[i];
    double* drow = dlogits[i];
    double mx = row[0];
    for (int j = 1; j < logits.cols; ++j) mx = row[j] > mx ? row[j] : mx;
    double z = 0.0;
    for (int j = 0; j < logits.cols; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[gold];
    for (int j = 0; j < logits.cols; ++j) drow[j] = w * std::exp(row[j] - lse);
    drow[gold] -= w;
  }
  return loss / counted;
}

}  // namespace

double parse_loss_matrix(const Matrix& alpha, const ParseTarget& target) {
  if (alpha.rows != target.n + 1 || alpha.cols != target.n + 1)
    throw Error("model_error", "attention shape does not cover the ROOT-prefixed sentence");
  double loss = 0.0;
  int rows = 0;
  for (int i = 0; i <= target.n; ++i) {
    if (!target.include_row[i]) continue;
    const int gold = target.gold_head(i);
    loss += -std::log(std::max(alpha[i][gold], 1e-300));
    ++rows;
  }
  if (rows == 0) throw Error("model_error", "parse target has no included rows");
  return loss / rows;
}

double parse_loss(const AttentionRecord& attention, const ParseTarget& target, const ModelConfig& config) {
  if (config.parse_mode == ParseMode::None)
    throw Error("model_error", "parse_loss requested with parse_mode=none");
  if (config.parse_layer >= static_cast<int>(attention.alpha.size()) ||
      config.parse_head >= static_cast<int>(attention.alpha[config.parse_layer].size()))
    throw Error("model_error", "parse layer/head outside the captured attention");
  return parse_loss_matrix(attention.alpha[config.parse_layer][config.parse_head], target);
}

// ---- training pass ----

LossParts Transformer::loss_and_gradient(const EncodedExample& ex, Params& grads, double scale,
                                         uint64_t dropout_seed) const {
  check_ids(ex.src, config_.vocab_size, config_.max_seq_len, "source");
  check_ids(ex.tgt_in, config_.vocab_size, config_.max_seq_len, "target");
  if (ex.tgt_out.size() != ex.tgt_in.size()) throw Error("model_error", "tgt_in/tgt_out length mismatch");

  const bool parse_active = config_.parse_mode != ParseMode::None && config_.parse_weight > 0.0;
  if (parse_active) {
    if (!ex.parse_target) throw Error("model_error", "parse supervision requested but no parse target given");
    if (ex.parse_target->n + 1 != static_cast<int>(ex.src.size()))
      throw Error("model_error", "parse target does not match the ROOT-prefixed source length");
  }

  const double rate = config_.dropout;
  Rng drop_rng(mix_seed(config_.seed, dropout_seed));
  Rng* rng = rate > 0.0 ? &drop_rng : nullptr;

  Ws ws;
  encoder_forward(params_, config_, pos_enc_, ex.src, ws, rate, rng);
  decoder_forward(params_, config_, pos_enc_, ws.enc_norm.y, ex.tgt_in, ws, rate, rng);

  LossParts parts;

  // translation loss and its logit gradient
  Matrix dlogits;
  parts.mt = mt_loss_grad(ws.logits, ex.tgt_out, scale, dlogits);

  ParseGrad parse;
  if (parse_active) {
    const Matrix& alpha = ws.enc[config_.parse_layer].attn.alpha[config_.parse_head];
    parts.parse = parse_loss_matrix(alpha, *ex.parse_target);
    int rows = 0;
    for (char c : ex.parse_target->include_row) rows += c ? 1 : 0;
    parse.target = ex.parse_target;
    parse.head = config_.parse_head;
    parse.coef = scale * config_.parse_weight / rows;
  }

  // ---- decoder backward ----
  const int d = config_.model_dim;

  // logits = dec_norm.y * embed^T
  Matrix dy;
  matmul(dlogits, params_.embed, dy);
  matmul_tn(dlogits, ws.dec_norm.y, grads.embed, true);

  const Matrix& dec_top = ws.dec.back().x3;
  Matrix dx(dec_top.rows, d);
  layernorm_backward(dec_top, params_.dec_norm.gain, ws.dec_norm.mean, ws.dec_norm.rstd, dy, dx,
                     grads.dec_norm.gain, grads.dec_norm.bias, /*accumulate_dx=*/true);

  Matrix denc_out(ws.enc_norm.y.rows, d);
  Matrix dsub, dln;
  for (int l = config_.num_layers - 1; l >= 0; --l) {
    DecLayerWs& lw = ws.dec[l];
    const Params::DecoderLayer& lp = params_.dec[l];
    Params::DecoderLayer& gl = grads.dec[l];
    const Matrix& x_in = l == 0 ? ws.dec_x0 : ws.dec[l - 1].x3;

    // x3 = x2 + drop(ff.out)
    dsub = dx;
    mask_gradient(lw.ff.drop_mask, dsub);
    dln.resize(lw.ln3.y.rows, d);
    dln.fill(0.0);
    ff_backward(lp.ff, lw.ln3.y, lw.ff, dsub, dln, gl.ff);
    layernorm_backward(lw.x2, lp.ln_ff.gain, lw.ln3.mean, lw.ln3.rstd, dln, dx, grads.dec[l].ln_ff.gain,
                       grads.dec[l].ln_ff.bias, true);

    // x2 = x1 + drop(cross.out)
    dsub = dx;
    mask_gradient(lw.cross.drop_mask, dsub);
    dln.resize(lw.ln2.y.rows, d);
    dln.fill(0.0);
    attn_backward(lp.cross, lw.ln2.y, ws.enc_norm.y, config_.num_heads, lw.cross, dsub, dln, denc_out, gl.cross);
    layernorm_backward(lw.x1, lp.ln_cross.gain, lw.ln2.mean, lw.ln2.rstd, dln, dx, gl.ln_cross.gain,
                       gl.ln_cross.bias, true);

    // x1 = x_in + drop(self.out)
    dsub = dx;
    mask_gradient(lw.self.drop_mask, dsub);
    dln.resize(lw.ln1.y.rows, d);
    dln.fill(0.0);
    attn_backward(lp.self, lw.ln1.y, lw.ln1.y, config_.num_heads, lw.self, dsub, dln, dln, gl.self);
    layernorm_backward(x_in, lp.ln_self.gain, lw.ln1.mean, lw.ln1.rstd, dln, dx, gl.ln_self.gain,
                       gl.ln_self.bias, true);
  }
  mask_gradient(ws.dec_x0_mask, dx);
  embed_backward(ex.tgt_in, dx, grads.embed);

  // ---- encoder backward ----
  const Matrix& enc_top = ws.enc.back().x2;
  dx.resize(enc_top.rows, d);
  dx.fill(0.0);
  layernorm_backward(enc_top, params_.enc_norm.gain, ws.enc_norm.mean, ws.enc_norm.rstd, denc_out, dx,
                     grads.enc_norm.gain, grads.enc_norm.bias, true);

  for (int l = config_.num_layers - 1; l >= 0; --l) {
    EncLayerWs& lw = ws.enc[l];
    const Params::EncoderLayer& lp = params_.enc[l];
    Params::EncoderLayer& gl = grads.enc[l];
    const Matrix& x_in = l == 0 ? ws.enc_x0 : ws.enc[l - 1].x2;

    dsub = dx;
    mask_gradient(lw.ff.drop_mask, dsub);
    dln.resize(lw.ln2.y.rows, d);
    dln.fill(0.0);
    ff_backward(lp.ff, lw.ln2.y, lw.ff, dsub, dln, gl.ff);
    layernorm_backward(lw.x1, lp.ln_ff.gain, lw.ln2.mean, lw.ln2.rstd, dln, dx, gl.ln_ff.gain, gl.ln_ff.bias,
                       true);

    dsub = dx;
    mask_gradient(lw.attn.drop_mask, dsub);
    dln.resize(lw.ln1.y.rows, d);
    dln.fill(0.0);
    const bool parse_here = parse_active && l == config_.parse_layer;
    attn_backward(lp.attn, lw.ln1.y, lw.ln1.y, config_.num_heads, lw.attn, dsub, dln, dln, gl.attn,
                  parse_here ? &parse : nullptr);
    layernorm_backward(x_in, lp.ln_attn.gain, lw.ln1.mean, lw.ln1.rstd, dln, dx, gl.ln_attn.gain,
                       gl.ln_attn.bias, true);
  }
  mask_gradient(ws.enc_x0_mask, dx);
  embed_backward(ex.src, dx, grads.embed);

  return parts;
}

std::vector<int> Transformer::greedy_decode(const std::vector<int>& src_ids, int max_len) const {
  check_ids(src_ids, config_.vocab_size, config_.max_seq_len, "source");
  if (max_len <= 0 || max_len >= config_.max_seq_len) max_len = config_.max_seq_len - 1;

  Ws ws;
  encoder_forward(params_, config_, pos_enc_, src_ids, ws, 0.0, nullptr);
  std::vector<int> out;
  std::vector<int> tgt_in = {kEosId};
  while (static_cast<int>(out.size()) < max_len) {
    decoder_forward(params_, config_, pos_enc_, ws.enc_norm.y, tgt_in, ws, 0.0, nullptr);
    const double* row = ws.logits[ws.logits.rows - 1];
    int best = 0;
    for (int j = 1; j < ws.logits.cols; ++j)
      if (row[j] > row[best]) best = j;
    if (best == kEosId) break;
    out.push_back(best);
    tgt_in.push_back(best);
  }
  return out;
}

// ---- checkpoints ----

namespace {
constexpr uint32_t kCheckpointMagic = 0x31544d44;  // "DMT1"
}

void Transformer::save_checkpoint(const std::string& path, long step) const {
  nlohmann::json manifest;
  manifest["config"] = model_config_to_json(config_);
  manifest["step"] = step;
  nlohmann::json tensors = nlohmann::json::array();
  for_each_tensor(const_cast<Params&>(params_), [&](const std::string& name, Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
  });
  manifest["tensors"] = tensors;
  const std::string header = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write checkpoint: " + path);
  const uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&kCheckpointMagic), sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(hlen));
  for_each_tensor(const_cast<Params&>(params_), [&](const std::string&, Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) throw Error("io_error", "checkpoint write failed: " + path);
}

Transformer Transformer::load_checkpoint(const std::string& path, long* step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read checkpoint: " + path);
  uint32_t magic = 0;
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || magic != kCheckpointMagic) throw Error("data_error", "not a checkpoint file: " + path);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json manifest = nlohmann::json::parse(header);
  const ModelConfig cfg = model_config_from_json(manifest.at("config"));
  if (step) *step = manifest.value("step", 0L);

  Transformer model(cfg);
  size_t idx = 0;
  const auto& tensors = manifest.at("tensors");
  for_each_tensor(model.params_, [&](const std::string& name, Matrix& m) {
    const auto& t = tensors.at(idx++);
    if (t.at("name") != name || t.at("rows") != m.rows || t.at("cols") != m.cols)
      throw Error("data_error", "checkpoint tensor mismatch at " + name);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!in) throw Error("data_error", "checkpoint truncated: " + path);
  return model;
}

}  // namespace depmt
