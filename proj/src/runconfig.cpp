#include "depmt/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "depmt/error.hpp"
#include "config_json.hpp"

namespace depmt {

const char* run_mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Baseline: return "baseline";
    case RunMode::Alternating: return "alternating";
    case RunMode::DepParse: return "depparse";
    case RunMode::DiagonalParse: return "diagonalparse";
  }
  return "baseline";
}

bool run_mode_from_name(const std::string& name, RunMode& out) {
  if (name == "baseline") out = RunMode::Baseline;
  else if (name == "alternating") out = RunMode::Alternating;
  else if (name == "depparse") out = RunMode::DepParse;
  else if (name == "diagonalparse") out = RunMode::DiagonalParse;
  else return false;
  return true;
}

void RunConfig::resolve() {
  switch (mode) {
    case RunMode::DepParse: model.parse_mode = ParseMode::Dep; break;
    case RunMode::DiagonalParse: model.parse_mode = ParseMode::Diagonal; break;
    default: model.parse_mode = ParseMode::None; break;
  }
  if (model.parse_mode != ParseMode::None) {
    if (model.parse_layer < 0 || model.parse_layer >= model.num_layers)
      throw Error("bad_config", "parse_layer " + std::to_string(model.parse_layer) + " outside [0," +
                                    std::to_string(model.num_layers - 1) + "]");
    if (model.parse_head < 0 || model.parse_head >= model.num_heads)
      throw Error("bad_config", "parse_head " + std::to_string(model.parse_head) + " outside [0," +
                                    std::to_string(model.num_heads - 1) + "]");
    if (model.parse_weight < 0.0) throw Error("bad_config", "parse_weight must be >= 0");
  }
  if (mode == RunMode::Alternating) {
    TaskKind kind;
    if (!task_kind_from_name(train.secondary_task, kind))
      throw Error("bad_config", "unknown secondary task: " + train.secondary_task);
    if (kind == TaskKind::Translate && train.scheduler_p > 0.0)
      throw Error("bad_config", "secondary task must differ from Translate when scheduler_p > 0");
    if (train.scheduler_p < 0.0 || train.scheduler_p > 1.0)
      throw Error("bad_config", "scheduler_p must lie in [0,1]");
  }
  if (data.kind != "synthetic" && data.kind != "files")
    throw Error("bad_config", "data.kind must be 'synthetic' or 'files'");
  if (train.steps < 1 || train.batch_size < 1 || train.eval_every < 1)
    throw Error("bad_config", "steps, batch_size and eval_every must be positive");
}

namespace {

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["mode"] = run_mode_name(c.mode);
  j["run_dir"] = c.run_dir;
  j["vocab_max_size"] = c.vocab_max_size;
  j["data"] = {{"kind", c.data.kind},
               {"synthetic",
                {{"vocab_size", c.data.synthetic.vocab_size},
                 {"min_len", c.data.synthetic.min_len},
                 {"max_len", c.data.synthetic.max_len},
                 {"seed", c.data.synthetic.seed},
                 {"train", c.data.synthetic_train},
                 {"dev", c.data.synthetic_dev},
                 {"test", c.data.synthetic_test}}},
               {"files",
                {{"train_source", c.data.files.train_source},
                 {"train_target", c.data.files.train_target},
                 {"train_conllu", c.data.files.train_conllu},
                 {"dev_source", c.data.files.dev_source},
                 {"dev_target", c.data.files.dev_target},
                 {"dev_conllu", c.data.files.dev_conllu},
                 {"test_source", c.data.files.test_source},
                 {"test_target", c.data.files.test_target},
                 {"test_conllu", c.data.files.test_conllu}}}};
  j["model"] = model_config_to_json(c.model);
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"warmup", c.train.warmup},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"eps", c.train.eps},
                {"eval_every", c.train.eval_every},
                {"dev_eval_size", c.train.dev_eval_size},
                {"data_seed", c.train.data_seed},
                {"secondary_task", c.train.secondary_task},
                {"scheduler_p", c.train.scheduler_p},
                {"use_task_token", c.train.use_task_token}};
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("mode")) {
    const std::string name = j["mode"].get<std::string>();
    if (!run_mode_from_name(name, c.mode)) throw Error("bad_config", "unknown mode: " + name);
  }
  c.run_dir = j.value("run_dir", c.run_dir);
  c.vocab_max_size = j.value("vocab_max_size", c.vocab_max_size);
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.data.kind = d.value("kind", c.data.kind);
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      c.data.synthetic.vocab_size = s.value("vocab_size", c.data.synthetic.vocab_size);
      c.data.synthetic.min_len = s.value("min_len", c.data.synthetic.min_len);
      c.data.synthetic.max_len = s.value("max_len", c.data.synthetic.max_len);
      c.data.synthetic.seed = s.value("seed", c.data.synthetic.seed);
      c.data.synthetic_train = s.value("train", c.data.synthetic_train);
      c.data.synthetic_dev = s.value("dev", c.data.synthetic_dev);
      c.data.synthetic_test = s.value("test", c.data.synthetic_test);
    }
    if (d.contains("files")) {
      const auto& fj = d["files"];
      auto& f = c.data.files;
      f.train_source = fj.value("train_source", f.train_source);
      f.train_target = fj.value("train_target", f.train_target);
      f.train_conllu = fj.value("train_conllu", f.train_conllu);
      f.dev_source = fj.value("dev_source", f.dev_source);
      f.dev_target = fj.value("dev_target", f.dev_target);
      f.dev_conllu = fj.value("dev_conllu", f.dev_conllu);
      f.test_source = fj.value("test_source", f.test_source);
      f.test_target = fj.value("test_target", f.test_target);
      f.test_conllu = fj.value("test_conllu", f.test_conllu);
    }
  }
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.steps = t.value("steps", c.train.steps);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.lr = t.value("lr", c.train.lr);
    c.train.warmup = t.value("warmup", c.train.warmup);
    c.train.beta1 = t.value("beta1", c.train.beta1);
    c.train.beta2 = t.value("beta2", c.train.beta2);
    c.train.eps = t.value("eps", c.train.eps);
    c.train.eval_every = t.value("eval_every", c.train.eval_every);
    c.train.dev_eval_size = t.value("dev_eval_size", c.train.dev_eval_size);
    c.train.data_seed = t.value("data_seed", c.train.data_seed);
    c.train.secondary_task = t.value("secondary_task", c.train.secondary_task);
    c.train.scheduler_p = t.value("scheduler_p", c.train.scheduler_p);
    c.train.use_task_token = t.value("use_task_token", c.train.use_task_token);
  }
  return c;
}

}  // namespace

std::string RunConfig::to_json_string() const { return to_json(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw Error("bad_config", std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot read config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write config: " + path);
  out << to_json_string();
}

std::vector<std::string> RunConfig::override_keys() {
  return {
      "mode",
      "run_dir",
      "vocab_max_size",
      "data.kind",
      "data.synthetic.vocab_size",
      "data.synthetic.min_len",
      "data.synthetic.max_len",
      "data.synthetic.seed",
      "data.synthetic.train",
      "data.synthetic.dev",
      "data.synthetic.test",
      "data.files.train_source",
      "data.files.train_target",
      "data.files.train_conllu",
      "data.files.dev_source",
      "data.files.dev_target",
      "data.files.dev_conllu",
      "data.files.test_source",
      "data.files.test_target",
      "data.files.test_conllu",
      "model.num_layers",
      "model.num_heads",
      "model.model_dim",
      "model.ff_dim",
      "model.max_seq_len",
      "model.dropout",
      "model.parse_layer",
      "model.parse_head",
      "model.parse_weight",
      "model.seed",
      "train.steps",
      "train.batch_size",
      "train.lr",
      "train.warmup",
      "train.beta1",
      "train.beta2",
      "train.eps",
      "train.eval_every",
      "train.dev_eval_size",
      "train.data_seed",
      "train.secondary_task",
      "train.scheduler_p",
      "train.use_task_token",
  };
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
  // route the textual value through the JSON representation so types stay
  // consistent with the config file
  nlohmann::json j = to_json(*this);
  nlohmann::json* node = &j;
  std::string rest = key;
  size_t dot;
  while ((dot = rest.find('.')) != std::string::npos) {
    node = &(*node)[rest.substr(0, dot)];
    rest = rest.substr(dot + 1);
  }
  if (!node->contains(rest)) throw Error("usage", "unknown config key: " + key);
  nlohmann::json& leaf = (*node)[rest];
  try {
    if (leaf.is_string())
      leaf = value;
    else if (leaf.is_boolean())
      leaf = value == "true" || value == "1";
    else if (leaf.is_number_float())
      leaf = std::stod(value);
    else
      leaf = static_cast<int64_t>(std::stoll(value));
  } catch (const std::exception&) {
    throw Error("usage", "cannot parse value '" + value + "' for key " + key);
  }
  *this = from_json(j);
}

}  // namespace depmt
