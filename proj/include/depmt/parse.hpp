#ifndef DEPMT_PARSE_HPP
#define DEPMT_PARSE_HPP

#include <string>
#include <vector>

#include "depmt/corpus.hpp"
#include "depmt/matrix.hpp"

namespace depmt {

// Gold head matrix over the ROOT-prefixed source: (n+1) x (n+1), row i one-hot
// at word i's gold head column (column 0 is ROOT). Row 0 belongs to the ROOT
// position and is excluded from the loss.
struct ParseTarget {
  int n = 0;
  Matrix mat;                      // (n+1) x (n+1)
  std::vector<char> include_row;   // include_row[0] == 0

  int gold_head(int row) const;    // argmax of a one-hot row
};

ParseTarget dep_target(const DepTree& tree, int n);
ParseTarget diagonal_target(int n);

// Heads proposed by an attention matrix: heads[i] is the argmax over columns
// 0..n of row i+1, ties resolved to the lowest column. No tree-ness is
// guaranteed; cycles simply score as errors.
struct DecodedParse {
  std::vector<int> heads;
};

DecodedParse decode_parse(const Matrix& attention, int n);

// Fraction of positions whose head indices agree.
double uas(const std::vector<int>& gold, const std::vector<int>& predicted);
double uas(const DepTree& gold, const DecodedParse& predicted);

// Fraction of words whose predicted head is the previous position.
double diagonal_precision(const DecodedParse& predicted);

// CoNLL-U export of predictions: head column filled, label column "_".
void write_conllu_predictions(const std::string& path, const std::vector<Sentence>& sentences,
                              const std::vector<DecodedParse>& parses);

}  // namespace depmt

#endif
