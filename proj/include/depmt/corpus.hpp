#ifndef DEPMT_CORPUS_HPP
#define DEPMT_CORPUS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace depmt {

// Reserved vocabulary entries. Ids are fixed: PAD=0, UNK=1, EOS=2, ROOT=3,
// then one id per task token, in this order. Real corpus words start after.
extern const std::vector<std::string> kReservedTokens;
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kEosId = 2;
constexpr int kRootId = 3;
extern const char* kRootToken;

bool is_reserved_token(const std::string& tok);

// A sentence is a plain word-level token sequence.
struct Sentence {
  std::vector<std::string> tokens;

  bool empty() const { return tokens.empty(); }
  size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

// Per-word head indices and relation labels. heads[i] is the head of word
// i+1; 0 names the artificial ROOT, j > 0 names the j-th word.
struct DepTree {
  std::vector<int> heads;
  std::vector<std::string> labels;

  size_t size() const { return heads.size(); }
  bool operator==(const DepTree&) const = default;
};

// True iff every word reaches ROOT by following heads, with no self-loops
// and all indices in [0, n].
bool is_valid_tree(const std::vector<int>& heads);

struct ParallelExample {
  Sentence source;
  Sentence target;
  std::optional<DepTree> source_tree;
};

class Vocabulary {
 public:
  Vocabulary();  // reserved tokens only

  // id for a known token, kUnkId otherwise
  int encode(const std::string& tok) const;
  const std::string& decode(int id) const;
  std::vector<int> encode_all(const std::vector<std::string>& toks) const;
  std::vector<std::string> decode_all(const std::vector<int>& ids, bool strip_special = true) const;

  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
  int add(const std::string& tok);  // appends if absent, returns id
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// ---- CoNLL-U ingestion ----

struct ConlluResult {
  std::vector<std::pair<Sentence, DepTree>> sentences;
  std::vector<std::string> rejected;  // one diagnostic per rejected sentence
};

// 10-column tab-separated blocks, blank-line delimited. Comment lines and
// multi-word-token / empty-node ids are skipped; heads and labels come from
// columns 7 and 8. A malformed line throws with its line number; a sentence
// whose head assignment is cyclic (or otherwise invalid) is rejected with a
// diagnostic and reading continues.
ConlluResult read_conllu(const std::string& path);
ConlluResult read_conllu(std::istream& in, const std::string& name);

// ---- parallel text ----

struct ParallelReadResult {
  std::vector<ParallelExample> examples;
  size_t dropped_empty = 0;     // pairs dropped because one side was blank
  size_t dropped_reserved = 0;  // pairs dropped because a token was reserved
};

ParallelReadResult read_parallel(const std::string& src_path, const std::string& tgt_path);

// ---- vocabulary construction ----

// Keeps the most frequent tokens up to max_size (reserved entries included in
// the budget); ties break toward earlier first occurrence.
Vocabulary build_vocab(const std::vector<ParallelExample>& examples, int max_size);
Vocabulary build_vocab_from_sequences(const std::vector<const std::vector<std::string>*>& seqs, int max_size);

// ---- ROOT insertion ----

// [ROOT] + tokens; throws if the sentence already carries a ROOT token.
Sentence insert_root(const Sentence& s);

// ---- synthetic language ----

// Deterministic toy language for desk-scale experiments. Source tokens are
// drawn uniformly from a closed vocabulary; each source token's vocabulary
// id decides whether it acts as an opening or closing bracket, and a stack
// pass over those classes assigns heads (openers attach to the enclosing
// opener, closers to the opener they match), which yields mostly non-linear
// trees. The target sentence applies a seeded one-to-one token dictionary
// and reverses the order.
struct SyntheticGrammarConfig {
  int vocab_size = 40;
  int min_len = 4;
  int max_len = 10;
  uint64_t seed = 1;
};

std::vector<ParallelExample> generate_synthetic(const SyntheticGrammarConfig& config, int n);

// The head assignment used by the generator, exposed for tests and for the
// target-side oracle: classes[i] == true marks an opener.
std::vector<int> bracket_heads(const std::vector<bool>& open_class);

// ---- corpus serialization (internal artifact format) ----

// One example per line: source, target, heads, labels; tab-separated fields,
// space-tokenized within a field. heads/labels are empty when no tree.
void write_corpus_tsv(const std::string& path, const std::vector<ParallelExample>& examples);
std::vector<ParallelExample> read_corpus_tsv(const std::string& path);

}  // namespace depmt

#endif
