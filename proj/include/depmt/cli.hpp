#ifndef DEPMT_CLI_HPP
#define DEPMT_CLI_HPP

#include <optional>
#include <string>

#include "depmt/eval.hpp"
#include "depmt/runconfig.hpp"
#include "depmt/trainer.hpp"

namespace depmt {

// Command implementations behind the depmt binary. All of them throw Error
// on failure; run_cli() maps that to a single machine-parseable
// "error:<category>: <message>" line on stderr and a nonzero exit code.

// Writes the frozen config, the vocabulary and the encoded train/dev/test
// splits (plus a checksum manifest) under config.run_dir/data.
void cmd_prepare(RunConfig config, bool force = false, bool export_tasks = false);

// Trains from the frozen config and prepared data in run_dir.
TrainResult cmd_train(const std::string& run_dir);

// Greedy-decodes a plain-text source file, one sentence per line.
void cmd_translate(const std::string& run_dir, const std::string& input, const std::string& output,
                   const std::string& checkpoint = "");

// Writes attention-argmax parses of a plain-text source file as CoNLL-U.
void cmd_parse(const std::string& run_dir, const std::string& input, const std::string& output,
               const std::string& checkpoint = "");

struct EvalReport {
  double bleu = 0.0;
  std::optional<double> uas;
  std::optional<double> diag_precision;
  std::optional<double> label_acc;
  std::optional<double> secondary_exact;
};

// Mode-appropriate metrics over a prepared split ("dev" or "test"); also
// written to <run_dir>/eval_<split>.json.
EvalReport cmd_evaluate(const std::string& run_dir, const std::string& split = "test",
                        const std::string& checkpoint = "");

// Per-layer histograms of encoder attention over the first first_n sentences
// of the split, written to <run_dir>/attn/layer<L>.json.
void cmd_attn_hist(const std::string& run_dir, const std::string& split = "test", int first_n = 100,
                   const std::string& checkpoint = "");

MetricsReport cmd_report(const std::string& run_dir);

int run_cli(int argc, char** argv);

}  // namespace depmt

#endif
