#ifndef DEPMT_TASKS_HPP
#define DEPMT_TASKS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "depmt/corpus.hpp"
#include "depmt/rng.hpp"

namespace depmt {

enum class TaskKind {
  Translate,
  DepHeads,
  DepLabels,
  DepHeadsLabels,
  CountSrcWords,
  EnumSrcWords,
  CopySrc,
};

const std::string& task_token(TaskKind kind);
const std::string& task_name(TaskKind kind);
bool task_kind_from_name(const std::string& name, TaskKind& out);
bool task_kind_from_token(const std::string& token, TaskKind& out);
bool task_requires_tree(TaskKind kind);

// One training example in the shared sequence-to-sequence format: the source
// ends with the task identification token (when enabled), the target is the
// task's expected output and never contains a task token.
struct TaskExample {
  std::vector<std::string> source;
  std::vector<std::string> target;
  TaskKind kind = TaskKind::Translate;
};

// Renders one parallel example as a task example. Targets per kind:
//   Translate       target sentence
//   DepHeads        per word, the head word's form; "#ROOT" when head = 0
//   DepLabels       per word, "#" + dependency label
//   DepHeadsLabels  the two above interleaved, (head, label) per word
//   CountSrcWords   single decimal token with the source word count
//   EnumSrcWords    that many copies of the token "W"
//   CopySrc         the source tokens
// The task token is appended to the source when use_task_token is set; it is
// always appended for non-Translate kinds.
TaskExample linearize(const ParallelExample& example, TaskKind kind, bool use_task_token = true);

// "#ROOT" marker used inside DepHeads targets. Distinct from the ROOT
// vocabulary word that prefixes encoder inputs in the joint models.
extern const char* kHeadRootToken;

struct ReconstructResult {
  DepTree tree;          // unlabeled: labels empty; heads may contain cycles
  int unmatched = 0;     // predicted head forms absent from the source
  int missing = 0;       // words beyond the end of the prediction
  int surplus = 0;       // predicted tokens beyond the source length
};

// Inverts a DepHeads prediction. For word i (1-based): "#ROOT" maps to head
// 0; otherwise the head is the occurrence of the predicted form in the source
// nearest to i, ties resolved to the earlier position, the word's own
// position excluded. Forms absent from the source, and words with no
// prediction at all, fall back to the previous word (ROOT for word 1). Total
// on any input; malformations are only counted.
ReconstructResult reconstruct_tree(const Sentence& source, const std::vector<std::string>& depheads_output);

// Splits an interleaved DepHeadsLabels output back into head-form and label
// streams (even positions are heads, odd positions labels).
void split_interleaved(const std::vector<std::string>& output, std::vector<std::string>& heads,
                       std::vector<std::string>& labels);

// Fraction of gold labels matched at aligned positions; predictions past the
// gold length are ignored, missing ones count as wrong.
double label_accuracy(const DepTree& gold, const std::vector<std::string>& predicted);

struct SchedulerConfig {
  double p = 0.5;  // probability of drawing the secondary task for a slot
  uint64_t seed = 1;
};

// Example-level constant scheduler: every emitted example is independently a
// secondary-task draw with probability p, a primary draw otherwise. Both
// streams cycle when exhausted. Single consumer.
class TaskMixer {
 public:
  TaskMixer(std::vector<TaskExample> primary, std::vector<TaskExample> secondary, const SchedulerConfig& config);

  const TaskExample& next();
  long primary_consumed() const { return primary_consumed_; }
  long secondary_consumed() const { return secondary_consumed_; }

 private:
  std::vector<TaskExample> primary_;
  std::vector<TaskExample> secondary_;
  SchedulerConfig config_;
  Rng rng_;
  size_t pi_ = 0;
  size_t si_ = 0;
  long primary_consumed_ = 0;
  long secondary_consumed_ = 0;
};

// Line-delimited persistence: tab-separated source and target, each
// space-tokenized; the kind is recovered from the source's final token.
void write_task_stream(const std::string& path, const std::vector<TaskExample>& examples);
std::vector<TaskExample> read_task_stream(const std::string& path);

}  // namespace depmt

#endif
