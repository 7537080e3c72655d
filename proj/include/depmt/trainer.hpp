#ifndef DEPMT_TRAINER_HPP
#define DEPMT_TRAINER_HPP

#include <optional>
#include <string>
#include <vector>

#include "depmt/corpus.hpp"
#include "depmt/model.hpp"
#include "depmt/runconfig.hpp"
#include "depmt/tasks.hpp"

namespace depmt {

struct PreparedData {
  Vocabulary vocab;
  std::vector<ParallelExample> train;
  std::vector<ParallelExample> dev;
  std::vector<ParallelExample> test;
};

// Adam on the inverse-square-root warmup schedule:
//   lr(t) = lr * d^-0.5 * min(t^-0.5, t * warmup^-1.5)
class Adam {
 public:
  Adam(const Params& shape, const TrainConfig& config, int model_dim);
  void step(Params& params, const Params& grads);
  long steps_taken() const { return t_; }
  double current_lr() const;

 private:
  Params m_, v_;
  TrainConfig config_;
  int model_dim_;
  long t_ = 0;
};

// Encoder input framing per mode: the joint models see ROOT + source words,
// the alternating setup sees the task example's own source sequence.
std::vector<int> encode_joint_source(const Vocabulary& vocab, const Sentence& source);

struct JointEval {
  double bleu = 0.0;
  double uas = 0.0;             // attention argmax vs gold trees (micro)
  double diag_precision = 0.0;  // attention argmax vs the linear tree (micro)
  bool has_uas = false;
};

JointEval evaluate_joint(const Transformer& model, const Vocabulary& vocab,
                         const std::vector<ParallelExample>& data, int limit);

struct AlternatingEval {
  double bleu = 0.0;
  double secondary_exact = 0.0;        // exact-match rate on secondary outputs
  std::optional<double> uas;           // DepHeads-family kinds
  std::optional<double> label_acc;     // DepLabels-family kinds
};

AlternatingEval evaluate_alternating(const Transformer& model, const Vocabulary& vocab,
                                     const std::vector<ParallelExample>& data, int limit, TaskKind secondary,
                                     bool use_task_token);

struct TrainResult {
  long steps = 0;
  bool diverged = false;
  std::string last_checkpoint;
};

// Runs one experiment: builds the model from config + vocabulary, trains,
// writes metrics.jsonl and a checkpoint per evaluation point under run_dir.
// On a non-finite loss it stops and leaves the last good checkpoint in place.
TrainResult train_run(const RunConfig& config, const PreparedData& data, const std::string& run_dir);

}  // namespace depmt

#endif
