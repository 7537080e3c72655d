#ifndef DEPMT_MODEL_HPP
#define DEPMT_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "depmt/matrix.hpp"
#include "depmt/parse.hpp"

namespace depmt {

enum class ParseMode { None, Dep, Diagonal };

const char* parse_mode_name(ParseMode mode);
bool parse_mode_from_name(const std::string& name, ParseMode& out);

struct ModelConfig {
  int num_layers = 2;   // encoder and decoder each
  int num_heads = 4;
  int model_dim = 64;
  int ff_dim = 256;
  int max_seq_len = 64;
  double dropout = 0.0;
  ParseMode parse_mode = ParseMode::None;
  int parse_layer = 0;
  int parse_head = 0;
  double parse_weight = 1.0;  // lambda
  uint64_t seed = 1;
  int vocab_size = 0;  // filled in from the vocabulary

  void validate() const;  // throws on inconsistent settings
};

// Encoder self-attention matrices from one forward pass: alpha[layer][head]
// is row-stochastic over key positions, one row per query position.
struct AttentionRecord {
  std::vector<std::vector<Matrix>> alpha;
};

struct ForwardOutput {
  Matrix logits;  // (decoder length) x vocab
  AttentionRecord attention;
};

struct Params {
  struct Attention {
    Matrix wq, wk, wv, wo;  // each model_dim x model_dim
  };
  struct Feedforward {
    Matrix w1, b1, w2, b2;  // d x ff, 1 x ff, ff x d, 1 x d
  };
  struct Norm {
    Matrix gain, bias;  // 1 x d
  };
  struct EncoderLayer {
    Norm ln_attn;
    Attention attn;
    Norm ln_ff;
    Feedforward ff;
  };
  struct DecoderLayer {
    Norm ln_self;
    Attention self;
    Norm ln_cross;
    Attention cross;
    Norm ln_ff;
    Feedforward ff;
  };

  Matrix embed;  // vocab x d, shared by encoder, decoder and output projection
  std::vector<EncoderLayer> enc;
  Norm enc_norm;
  std::vector<DecoderLayer> dec;
  Norm dec_norm;
};

// Visits every parameter tensor in a fixed order (used by init, Adam,
// checkpoints and the finite-difference tests).
template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  auto norm = [&](const std::string& prefix, auto& n) {
    f(prefix + ".gain", n.gain);
    f(prefix + ".bias", n.bias);
  };
  auto attention = [&](const std::string& prefix, auto& a) {
    f(prefix + ".wq", a.wq);
    f(prefix + ".wk", a.wk);
    f(prefix + ".wv", a.wv);
    f(prefix + ".wo", a.wo);
  };
  auto feedforward = [&](const std::string& prefix, auto& w) {
    f(prefix + ".w1", w.w1);
    f(prefix + ".b1", w.b1);
    f(prefix + ".w2", w.w2);
    f(prefix + ".b2", w.b2);
  };
  f("embed", p.embed);
  for (size_t l = 0; l < p.enc.size(); ++l) {
    const std::string base = "enc" + std::to_string(l);
    norm(base + ".ln_attn", p.enc[l].ln_attn);
    attention(base + ".attn", p.enc[l].attn);
    norm(base + ".ln_ff", p.enc[l].ln_ff);
    feedforward(base + ".ff", p.enc[l].ff);
  }
  norm("enc_norm", p.enc_norm);
  for (size_t l = 0; l < p.dec.size(); ++l) {
    const std::string base = "dec" + std::to_string(l);
    norm(base + ".ln_self", p.dec[l].ln_self);
    attention(base + ".self", p.dec[l].self);
    norm(base + ".ln_cross", p.dec[l].ln_cross);
    attention(base + ".cross", p.dec[l].cross);
    norm(base + ".ln_ff", p.dec[l].ln_ff);
    feedforward(base + ".ff", p.dec[l].ff);
  }
  norm("dec_norm", p.dec_norm);
}

Params make_zero_like(const Params& p);

// One encoded training example. src is the full encoder input (ROOT-prefixed
// in the joint models, task-token-suffixed in the alternating setup); the
// decoder consumes tgt_in = [EOS] + target and is scored against
// tgt_out = target + [EOS]. parse_target, when set, must cover src exactly.
struct EncodedExample {
  std::vector<int> src;
  std::vector<int> tgt_in;
  std::vector<int> tgt_out;
  const ParseTarget* parse_target = nullptr;
};

struct LossParts {
  double mt = 0.0;
  double parse = 0.0;
};

// Mean token-level cross-entropy of gold ids under the logits, PAD positions
// excluded. Throws if nothing is left to score.
double mt_loss(const Matrix& logits, const std::vector<int>& gold_ids);

// Mean over included rows i of -ln(alpha[i, gold_head(i)]) for the designated
// (parse_layer, parse_head) attention matrix.
double parse_loss(const AttentionRecord& attention, const ParseTarget& target, const ModelConfig& config);
double parse_loss_matrix(const Matrix& alpha, const ParseTarget& target);

inline double joint_loss(double mt, double parse, double lambda) { return mt + lambda * parse; }

class Transformer {
 public:
  explicit Transformer(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  // Full pass with encoder attention captured. Inference only (no dropout).
  ForwardOutput forward(const std::vector<int>& src_ids, const std::vector<int>& tgt_in_ids) const;

  // Encoder-only pass; attn may be null.
  void encode(const std::vector<int>& src_ids, Matrix& enc_out, AttentionRecord* attn) const;

  // Accumulates scale * d(mt + lambda*parse)/dtheta for one example into
  // grads and returns the (unscaled) loss parts. dropout_seed feeds the
  // dropout masks when config.dropout > 0.
  LossParts loss_and_gradient(const EncodedExample& ex, Params& grads, double scale,
                              uint64_t dropout_seed = 0) const;

  // Argmax decoding until EOS or max_len output tokens.
  std::vector<int> greedy_decode(const std::vector<int>& src_ids, int max_len) const;

  void save_checkpoint(const std::string& path, long step) const;
  static Transformer load_checkpoint(const std::string& path, long* step = nullptr);

 private:
  ModelConfig config_;
  Params params_;
  Matrix pos_enc_;  // max_seq_len x d, sinusoidal
};

// Decoder-side framing: tgt_in = [EOS] + ids, tgt_out = ids + [EOS].
void make_decoder_io(const std::vector<int>& target_ids, std::vector<int>& tgt_in, std::vector<int>& tgt_out);

}  // namespace depmt

#endif
