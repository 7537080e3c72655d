#include "depmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "depmt/error.hpp"
#include "depmt/rng.hpp"

namespace depmt {

const std::vector<std::string> kReservedTokens = {
    "PAD", "UNK", "EOS", "ROOT", "#Translate", "#DepHeads", "#DepLabels",
    "#DHeadsLab", "#CountSrcWords", "#EnumSrcWords", "#CopySrc"};

const char* kRootToken = "ROOT";

bool is_reserved_token(const std::string& tok) {
  for (const auto& r : kReservedTokens)
    if (tok == r) return true;
  return false;
}

bool is_valid_tree(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  if (n == 0) return false;
  for (int i = 1; i <= n; ++i) {
    if (heads[i - 1] < 0 || heads[i - 1] > n) return false;
    if (heads[i - 1] == i) return false;
    // follow heads; must hit ROOT within n steps
    int j = i;
    int steps = 0;
    while (j != 0) {
      j = heads[j - 1];
      if (++steps > n) return false;
    }
  }
  return true;
}

// ---- Vocabulary ----

Vocabulary::Vocabulary() {
  for (const auto& t : kReservedTokens) add(t);
}

int Vocabulary::encode(const std::string& tok) const {
  auto it = ids_.find(tok);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || id >= size()) throw Error("data_error", "token id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::vector<int> Vocabulary::encode_all(const std::vector<std::string>& toks) const {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(encode(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode_all(const std::vector<int>& ids, bool strip_special) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (strip_special && (id == kPadId || id == kEosId)) continue;
    out.push_back(decode(id));
  }
  return out;
}

int Vocabulary::add(const std::string& tok) {
  auto it = ids_.find(tok);
  if (it != ids_.end()) return it->second;
  const int id = size();
  tokens_.push_back(tok);
  ids_.emplace(tok, id);
  return id;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write vocabulary: " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read vocabulary: " + path);
  Vocabulary v;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    if (idx < static_cast<int>(kReservedTokens.size())) {
      if (line != kReservedTokens[idx])
        throw Error("data_error", "vocabulary reserved slot " + std::to_string(idx) + " holds '" + line + "'");
    } else {
      v.add(line);
    }
    ++idx;
  }
  if (idx < static_cast<int>(kReservedTokens.size()))
    throw Error("data_error", "vocabulary file truncated: " + path);
  return v;
}

// ---- CoNLL-U ----

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  size_t pos = 0;
  try {
    out = std::stoi(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

struct PendingSentence {
  Sentence sent;
  DepTree tree;
  int first_line = 0;
};

void flush_sentence(PendingSentence& p, ConlluResult& res) {
  if (p.sent.empty()) return;
  const int n = static_cast<int>(p.sent.size());
  bool ok = true;
  std::string why;
  for (const auto& t : p.sent.tokens) {
    if (is_reserved_token(t)) {
      ok = false;
      why = "token '" + t + "' collides with a reserved symbol";
      break;
    }
  }
  for (int h : p.tree.heads) {
    if (h < 0 || h > n) {
      ok = false;
      why = "head index " + std::to_string(h) + " out of range";
      break;
    }
  }
  if (ok && !is_valid_tree(p.tree.heads)) {
    ok = false;
    why = "cyclic head assignment";
  }
  if (ok)
    res.sentences.emplace_back(std::move(p.sent), std::move(p.tree));
  else
    res.rejected.push_back("sentence at line " + std::to_string(p.first_line) + " rejected: " + why);
  p = PendingSentence{};
}

}  // namespace

ConlluResult read_conllu(std::istream& in, const std::string& name) {
  ConlluResult res;
  PendingSentence cur;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush_sentence(cur, res);
      continue;
    }
    if (line[0] == '#') continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 10)
      throw Error("data_error", name + ":" + std::to_string(lineno) + ": expected 10 tab-separated columns, got " +
                                     std::to_string(cols.size()));
    const std::string& id = cols[0];
    // multi-word token ranges (1-2) and empty nodes (8.1) carry no tree edge
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    int idx = 0, head = 0;
    if (!parse_int(id, idx))
      throw Error("data_error", name + ":" + std::to_string(lineno) + ": bad token id '" + id + "'");
    if (!parse_int(cols[6], head))
      throw Error("data_error", name + ":" + std::to_string(lineno) + ": bad head '" + cols[6] + "'");
    if (cur.sent.empty()) cur.first_line = lineno;
    cur.sent.tokens.push_back(cols[1]);
    cur.tree.heads.push_back(head);
    cur.tree.labels.push_back(cols[7]);
  }
  flush_sentence(cur, res);
  return res;
}

ConlluResult read_conllu(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read CoNLL-U file: " + path);
  return read_conllu(in, path);
}

// ---- parallel text ----

ParallelReadResult read_parallel(const std::string& src_path, const std::string& tgt_path) {
  std::ifstream src(src_path, std::ios::binary);
  if (!src) throw Error("missing_input", "cannot read source file: " + src_path);
  std::ifstream tgt(tgt_path, std::ios::binary);
  if (!tgt) throw Error("missing_input", "cannot read target file: " + tgt_path);

  std::vector<std::string> src_lines, tgt_lines;
  std::string line;
  while (std::getline(src, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    src_lines.push_back(line);
  }
  while (std::getline(tgt, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tgt_lines.push_back(line);
  }
  if (src_lines.size() != tgt_lines.size())
    throw Error("data_error", "line count mismatch: " + src_path + " has " + std::to_string(src_lines.size()) +
                                  " lines, " + tgt_path + " has " + std::to_string(tgt_lines.size()));

  ParallelReadResult res;
  for (size_t i = 0; i < src_lines.size(); ++i) {
    ParallelExample ex;
    ex.source.tokens = split_ws(src_lines[i]);
    ex.target.tokens = split_ws(tgt_lines[i]);
    if (ex.source.empty() || ex.target.empty()) {
      ++res.dropped_empty;
      continue;
    }
    bool reserved = false;
    for (const auto& t : ex.source.tokens) reserved = reserved || is_reserved_token(t);
    for (const auto& t : ex.target.tokens) reserved = reserved || is_reserved_token(t);
    if (reserved) {
      ++res.dropped_reserved;
      continue;
    }
    res.examples.push_back(std::move(ex));
  }
  return res;
}

// ---- vocabulary construction ----

Vocabulary build_vocab_from_sequences(const std::vector<const std::vector<std::string>*>& seqs, int max_size) {
  const int reserved = static_cast<int>(kReservedTokens.size());
  if (max_size <= reserved)
    throw Error("bad_config", "vocabulary size " + std::to_string(max_size) + " leaves no room beyond the " +
                                  std::to_string(reserved) + " reserved entries");
  struct Entry {
    long count = 0;
    long first = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  long pos = 0;
  for (const auto* seq : seqs) {
    for (const auto& tok : *seq) {
      ++pos;
      if (is_reserved_token(tok)) continue;
      auto [it, fresh] = counts.try_emplace(tok);
      if (fresh) it->second.first = pos;
      ++it->second.count;
    }
  }
  std::vector<std::pair<std::string, Entry>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });
  Vocabulary v;
  const int budget = max_size - reserved;
  for (int i = 0; i < budget && i < static_cast<int>(order.size()); ++i) v.add(order[i].first);
  return v;
}

Vocabulary build_vocab(const std::vector<ParallelExample>& examples, int max_size) {
  std::vector<const std::vector<std::string>*> seqs;
  seqs.reserve(examples.size() * 2);
  for (const auto& ex : examples) {
    seqs.push_back(&ex.source.tokens);
    seqs.push_back(&ex.target.tokens);
  }
  return build_vocab_from_sequences(seqs, max_size);
}

// ---- ROOT insertion ----

Sentence insert_root(const Sentence& s) {
  for (const auto& t : s.tokens)
    if (t == kRootToken) throw Error("data_error", "sentence already contains a ROOT token");
  Sentence out;
  out.tokens.reserve(s.size() + 1);
  out.tokens.push_back(kRootToken);
  out.tokens.insert(out.tokens.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

// ---- synthetic language ----

std::vector<int> bracket_heads(const std::vector<bool>& open_class) {
  const int n = static_cast<int>(open_class.size());
  std::vector<int> heads(n, 0);
  std::vector<int> stack;
  for (int i = 1; i <= n; ++i) {
    if (open_class[i - 1]) {
      heads[i - 1] = stack.empty() ? 0 : stack.back();
      stack.push_back(i);
    } else if (!stack.empty()) {
      heads[i - 1] = stack.back();
      stack.pop_back();
    } else {
      heads[i - 1] = i < n ? i + 1 : 0;  // unmatched closer leans on the next word
    }
  }
  return heads;
}

std::vector<ParallelExample> generate_synthetic(const SyntheticGrammarConfig& config, int n) {
  if (n <= 0) throw Error("bad_config", "synthetic corpus size must be positive");
  if (config.vocab_size < 2 || config.min_len < 1 || config.max_len < config.min_len)
    throw Error("bad_config", "invalid synthetic grammar configuration");

  // token dictionary: source id -> target id, a seeded permutation
  Rng rng(config.seed);
  std::vector<int> perm(config.vocab_size);
  for (int i = 0; i < config.vocab_size; ++i) perm[i] = i;
  rng.shuffle(perm);

  std::vector<ParallelExample> out;
  out.reserve(n);
  for (int e = 0; e < n; ++e) {
    const int len = config.min_len + rng.below(config.max_len - config.min_len + 1);
    ParallelExample ex;
    std::vector<bool> open_class(len);
    std::vector<int> ids(len);
    for (int i = 0; i < len; ++i) {
      ids[i] = rng.below(config.vocab_size);
      open_class[i] = ids[i] % 2 == 0;
      ex.source.tokens.push_back("s" + std::to_string(ids[i]));
    }
    DepTree tree;
    tree.heads = bracket_heads(open_class);
    for (int i = 0; i < len; ++i) tree.labels.push_back(open_class[i] ? "Open" : "Close");
    ex.source_tree = std::move(tree);
    for (int i = len - 1; i >= 0; --i) ex.target.tokens.push_back("t" + std::to_string(perm[ids[i]]));
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- corpus tsv ----

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

void write_corpus_tsv(const std::string& path, const std::vector<ParallelExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write corpus file: " + path);
  for (const auto& ex : examples) {
    out << join(ex.source.tokens) << '\t' << join(ex.target.tokens) << '\t';
    if (ex.source_tree) {
      const auto& t = *ex.source_tree;
      for (size_t i = 0; i < t.heads.size(); ++i) out << (i ? " " : "") << t.heads[i];
      out << '\t' << join(t.labels);
    } else {
      out << '\t';
    }
    out << '\n';
  }
}

std::vector<ParallelExample> read_corpus_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read corpus file: " + path);
  std::vector<ParallelExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 4)
      throw Error("data_error", path + ":" + std::to_string(lineno) + ": expected 4 tab-separated fields");
    ParallelExample ex;
    ex.source.tokens = split_ws(cols[0]);
    ex.target.tokens = split_ws(cols[1]);
    const auto head_toks = split_ws(cols[2]);
    if (!head_toks.empty()) {
      DepTree tree;
      for (const auto& h : head_toks) {
        int v = 0;
        if (!parse_int(h, v))
          throw Error("data_error", path + ":" + std::to_string(lineno) + ": bad head '" + h + "'");
        tree.heads.push_back(v);
      }
      tree.labels = split_ws(cols[3]);
      if (tree.labels.size() != tree.heads.size())
        throw Error("data_error", path + ":" + std::to_string(lineno) + ": heads/labels length mismatch");
      if (tree.heads.size() != ex.source.tokens.size())
        throw Error("data_error", path + ":" + std::to_string(lineno) + ": tree length != source length");
      ex.source_tree = std::move(tree);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace depmt
