#ifndef DEPMT_EVAL_HPP
#define DEPMT_EVAL_HPP

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depmt/model.hpp"

namespace depmt {

// Corpus-level BLEU-4: modified n-gram precisions with clipping, geometric
// mean, multiplicative brevity penalty, no smoothing (a zero precision at any
// order gives 0). Case-sensitive over the given tokens; single reference.
double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references);
double corpus_bleu_lines(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

// Attention-weight histogram for one encoder layer, aggregated over all
// sentences and all heads of the layer: ten width-0.1 bins over [0,1], the
// last bin closed at 1.0. The display form drops bin [0.0,0.1), which always
// dominates; the stored counts keep it so the totals stay exact.
struct HistogramReport {
  int layer = 0;
  std::array<long long, 10> counts{};
  long long total_cells = 0;

  std::array<long long, 9> display_bins() const;  // bins [0.1,0.2) .. [0.9,1.0]
};

HistogramReport attention_histogram(const std::vector<AttentionRecord>& records, int layer);

// Mean over all rows of the maximum row weight at (layer, head); 1 for
// one-hot rows, 1/L for uniform rows of length L.
double sharpness(const std::vector<AttentionRecord>& records, int layer, int head);

std::string histogram_to_json(const HistogramReport& report);

// Consolidated view over a run's metrics log. report() also writes plot-ready
// CSV series under <run_dir>/report/: every scalar metric by step, and dev
// BLEU additionally keyed by per-task examples consumed.
struct MetricsReport {
  std::optional<double> bleu;
  std::optional<double> uas;
  std::optional<double> diag_precision;
  std::optional<double> label_acc;
  std::optional<double> secondary_exact;
  std::vector<std::pair<long, double>> mt_loss_curve;
  std::vector<std::pair<long, double>> parse_loss_curve;
  int points = 0;
  int skipped_lines = 0;
};

MetricsReport report(const std::string& run_dir);

}  // namespace depmt

#endif
