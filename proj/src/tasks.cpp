#include "depmt/tasks.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "depmt/error.hpp"

namespace depmt {

namespace {

struct KindInfo {
  TaskKind kind;
  const char* name;
  const char* token;
  bool needs_tree;
};

const KindInfo kKinds[] = {
    {TaskKind::Translate, "Translate", "#Translate", false},
    {TaskKind::DepHeads, "DepHeads", "#DepHeads", true},
    {TaskKind::DepLabels, "DepLabels", "#DepLabels", true},
    {TaskKind::DepHeadsLabels, "DepHeadsLabels", "#DHeadsLab", true},
    {TaskKind::CountSrcWords, "CountSrcWords", "#CountSrcWords", false},
    {TaskKind::EnumSrcWords, "EnumSrcWords", "#EnumSrcWords", false},
    {TaskKind::CopySrc, "CopySrc", "#CopySrc", false},
};

const KindInfo& info(TaskKind kind) { return kKinds[static_cast<int>(kind)]; }

}  // namespace

const char* kHeadRootToken = "#ROOT";

const std::string& task_token(TaskKind kind) {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> v;
    for (const auto& k : kKinds) v.push_back(k.token);
    return v;
  }();
  return tokens[static_cast<int>(kind)];
}

const std::string& task_name(TaskKind kind) {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& k : kKinds) v.push_back(k.name);
    return v;
  }();
  return names[static_cast<int>(kind)];
}

bool task_kind_from_name(const std::string& name, TaskKind& out) {
  for (const auto& k : kKinds)
    if (name == k.name) {
      out = k.kind;
      return true;
    }
  return false;
}

bool task_kind_from_token(const std::string& token, TaskKind& out) {
  for (const auto& k : kKinds)
    if (token == k.token) {
      out = k.kind;
      return true;
    }
  return false;
}

bool task_requires_tree(TaskKind kind) { return info(kind).needs_tree; }

TaskExample linearize(const ParallelExample& example, TaskKind kind, bool use_task_token) {
  if (task_requires_tree(kind) && !example.source_tree)
    throw Error("data_error", "task " + task_name(kind) + " requires a source dependency tree");

  TaskExample out;
  out.kind = kind;
  out.source = example.source.tokens;
  const int n = static_cast<int>(example.source.size());
  const DepTree* tree = example.source_tree ? &*example.source_tree : nullptr;

  auto head_form = [&](int i) -> std::string {
    const int h = tree->heads[i];
    return h == 0 ? kHeadRootToken : example.source.tokens[h - 1];
  };

  switch (kind) {
    case TaskKind::Translate:
      out.target = example.target.tokens;
      break;
    case TaskKind::DepHeads:
      for (int i = 0; i < n; ++i) out.target.push_back(head_form(i));
      break;
    case TaskKind::DepLabels:
      for (int i = 0; i < n; ++i) out.target.push_back("#" + tree->labels[i]);
      break;
    case TaskKind::DepHeadsLabels:
      for (int i = 0; i < n; ++i) {
        out.target.push_back(head_form(i));
        out.target.push_back("#" + tree->labels[i]);
      }
      break;
    case TaskKind::CountSrcWords:
      out.target.push_back(std::to_string(n));
      break;
    case TaskKind::EnumSrcWords:
      out.target.assign(n, "W");
      break;
    case TaskKind::CopySrc:
      out.target = example.source.tokens;
      break;
  }

  if (use_task_token || kind != TaskKind::Translate) out.source.push_back(task_token(kind));
  return out;
}

ReconstructResult reconstruct_tree(const Sentence& source, const std::vector<std::string>& depheads_output) {
  ReconstructResult res;
  const int n = static_cast<int>(source.size());
  res.tree.heads.assign(n, 0);
  if (static_cast<int>(depheads_output.size()) > n)
    res.surplus = static_cast<int>(depheads_output.size()) - n;

  for (int i = 1; i <= n; ++i) {
    const int fallback = i - 1;  // previous word, ROOT for the first
    if (i > static_cast<int>(depheads_output.size())) {
      ++res.missing;
      res.tree.heads[i - 1] = fallback;
      continue;
    }
    const std::string& form = depheads_output[i - 1];
    if (form == kHeadRootToken) {
      res.tree.heads[i - 1] = 0;
      continue;
    }
    int best = -1;
    for (int j = 1; j <= n; ++j) {
      if (j == i || source.tokens[j - 1] != form) continue;
      if (best == -1 || std::abs(j - i) < std::abs(best - i)) best = j;
      // equal distance keeps the earlier j since we scan left to right
    }
    if (best == -1) {
      ++res.unmatched;
      res.tree.heads[i - 1] = fallback;
    } else {
      res.tree.heads[i - 1] = best;
    }
  }
  return res;
}

void split_interleaved(const std::vector<std::string>& output, std::vector<std::string>& heads,
                       std::vector<std::string>& labels) {
  heads.clear();
  labels.clear();
  for (size_t i = 0; i < output.size(); ++i) {
    if (i % 2 == 0)
      heads.push_back(output[i]);
    else
      labels.push_back(output[i]);
  }
}

double label_accuracy(const DepTree& gold, const std::vector<std::string>& predicted) {
  if (gold.labels.empty()) return 0.0;
  int match = 0;
  for (size_t i = 0; i < gold.labels.size(); ++i)
    if (i < predicted.size() && predicted[i] == gold.labels[i]) ++match;
  return static_cast<double>(match) / static_cast<double>(gold.labels.size());
}

TaskMixer::TaskMixer(std::vector<TaskExample> primary, std::vector<TaskExample> secondary,
                     const SchedulerConfig& config)
    : primary_(std::move(primary)), secondary_(std::move(secondary)), config_(config), rng_(config.seed) {
  if (config_.p < 0.0 || config_.p > 1.0) throw Error("bad_config", "scheduler p must lie in [0,1]");
  if (primary_.empty()) throw Error("bad_config", "scheduler primary stream is empty");
  if (config_.p > 0.0 && secondary_.empty())
    throw Error("bad_config", "scheduler p > 0 requires a secondary stream");
}

const TaskExample& TaskMixer::next() {
  const bool secondary = rng_.unit() < config_.p;
  if (secondary) {
    const TaskExample& ex = secondary_[si_];
    si_ = (si_ + 1) % secondary_.size();
    ++secondary_consumed_;
    return ex;
  }
  const TaskExample& ex = primary_[pi_];
  pi_ = (pi_ + 1) % primary_.size();
  ++primary_consumed_;
  return ex;
}

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void write_task_stream(const std::string& path, const std::vector<TaskExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write task stream: " + path);
  for (const auto& ex : examples) out << join(ex.source) << '\t' << join(ex.target) << '\n';
}

std::vector<TaskExample> read_task_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read task stream: " + path);
  std::vector<TaskExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("data_error", path + ":" + std::to_string(lineno) + ": expected source<TAB>target");
    TaskExample ex;
    ex.source = split_ws(line.substr(0, tab));
    ex.target = split_ws(line.substr(tab + 1));
    if (ex.source.empty())
      throw Error("data_error", path + ":" + std::to_string(lineno) + ": empty source");
    TaskKind kind = TaskKind::Translate;
    if (task_kind_from_token(ex.source.back(), kind)) ex.kind = kind;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace depmt
