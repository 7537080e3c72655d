#include "depmt/parse.hpp"

#include <fstream>

#include "depmt/error.hpp"

namespace depmt {

int ParseTarget::gold_head(int row) const {
  for (int j = 0; j < mat.cols; ++j)
    if (mat[row][j] == 1.0) return j;
  throw Error("model_error", "parse target row " + std::to_string(row) + " is not one-hot");
}

ParseTarget dep_target(const DepTree& tree, int n) {
  if (static_cast<int>(tree.size()) != n)
    throw Error("data_error", "tree length " + std::to_string(tree.size()) + " != " + std::to_string(n));
  ParseTarget t;
  t.n = n;
  t.mat.resize(n + 1, n + 1);
  t.include_row.assign(n + 1, 1);
  t.include_row[0] = 0;
  for (int i = 1; i <= n; ++i) {
    const int h = tree.heads[i - 1];
    if (h < 0 || h > n)
      throw Error("data_error", "head index " + std::to_string(h) + " out of range [0," + std::to_string(n) + "]");
    t.mat[i][h] = 1.0;
  }
  return t;
}

ParseTarget diagonal_target(int n) {
  if (n < 1) throw Error("data_error", "diagonal target needs n >= 1");
  ParseTarget t;
  t.n = n;
  t.mat.resize(n + 1, n + 1);
  t.include_row.assign(n + 1, 1);
  t.include_row[0] = 0;
  for (int i = 1; i <= n; ++i) t.mat[i][i - 1] = 1.0;
  return t;
}

DecodedParse decode_parse(const Matrix& attention, int n) {
  if (attention.rows < n + 1 || attention.cols < n + 1)
    throw Error("model_error", "attention matrix smaller than ROOT-prefixed length");
  DecodedParse out;
  out.heads.reserve(n);
  for (int i = 1; i <= n; ++i) {
    int best = 0;
    for (int j = 1; j <= n; ++j)
      if (attention[i][j] > attention[i][best]) best = j;
    out.heads.push_back(best);
  }
  return out;
}

double uas(const std::vector<int>& gold, const std::vector<int>& predicted) {
  if (gold.size() != predicted.size())
    throw Error("data_error", "uas length mismatch: " + std::to_string(gold.size()) + " vs " +
                                  std::to_string(predicted.size()));
  if (gold.empty()) throw Error("data_error", "uas over empty sentence");
  int match = 0;
  for (size_t i = 0; i < gold.size(); ++i)
    if (gold[i] == predicted[i]) ++match;
  return static_cast<double>(match) / static_cast<double>(gold.size());
}

double uas(const DepTree& gold, const DecodedParse& predicted) { return uas(gold.heads, predicted.heads); }

double diagonal_precision(const DecodedParse& predicted) {
  if (predicted.heads.empty()) return 0.0;
  int match = 0;
  for (size_t i = 0; i < predicted.heads.size(); ++i)
    if (predicted.heads[i] == static_cast<int>(i)) ++match;
  return static_cast<double>(match) / static_cast<double>(predicted.heads.size());
}

void write_conllu_predictions(const std::string& path, const std::vector<Sentence>& sentences,
                              const std::vector<DecodedParse>& parses) {
  if (sentences.size() != parses.size())
    throw Error("data_error", "sentence/parse count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write predictions: " + path);
  for (size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    const auto& heads = parses[s].heads;
    for (size_t i = 0; i < sent.size(); ++i) {
      const int head = i < heads.size() ? heads[i] : 0;
      out << (i + 1) << '\t' << sent.tokens[i] << "\t_\t_\t_\t_\t" << head << "\t_\t_\t_\n";
    }
    out << '\n';
  }
}

}  // namespace depmt
