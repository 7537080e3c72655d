#ifndef DEPMT_RUNCONFIG_HPP
#define DEPMT_RUNCONFIG_HPP

#include <string>
#include <vector>

#include "depmt/corpus.hpp"
#include "depmt/model.hpp"
#include "depmt/tasks.hpp"

namespace depmt {

enum class RunMode { Baseline, Alternating, DepParse, DiagonalParse };

const char* run_mode_name(RunMode mode);
bool run_mode_from_name(const std::string& name, RunMode& out);

struct DataFilesConfig {
  std::string train_source, train_target, train_conllu;
  std::string dev_source, dev_target, dev_conllu;
  std::string test_source, test_target, test_conllu;
};

struct DataConfig {
  std::string kind = "synthetic";  // "synthetic" | "files"
  SyntheticGrammarConfig synthetic;
  int synthetic_train = 20000;
  int synthetic_dev = 1000;
  int synthetic_test = 1000;
  DataFilesConfig files;
};

struct TrainConfig {
  long steps = 2000;
  int batch_size = 8;
  double lr = 1.0;  // factor on the inverse-square-root schedule
  int warmup = 400;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  long eval_every = 500;
  int dev_eval_size = 200;
  uint64_t data_seed = 1;
  // alternating mode
  std::string secondary_task = "DepHeads";
  double scheduler_p = 0.5;
  bool use_task_token = true;
};

// Everything one experiment needs; serialized as JSON and frozen into the
// run directory so any command can be replayed from it. Every key can be
// overridden on the command line by a flag of the same dotted name.
struct RunConfig {
  RunMode mode = RunMode::Baseline;
  std::string run_dir = "run";
  DataConfig data;
  int vocab_max_size = 4000;
  ModelConfig model;
  TrainConfig train;

  // Couples model.parse_mode to the run mode and validates what can be
  // validated before the vocabulary exists.
  void resolve();

  std::string to_json_string() const;
  static RunConfig from_json_string(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // All dotted override keys, e.g. "model.num_layers"; used by the CLI to
  // register one flag per key.
  static std::vector<std::string> override_keys();
  void apply_override(const std::string& key, const std::string& value);
};

}  // namespace depmt

#endif
