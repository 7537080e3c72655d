#ifndef DEPMT_SRC_CONFIG_JSON_HPP
#define DEPMT_SRC_CONFIG_JSON_HPP

#include <json.hpp>

#include "depmt/error.hpp"
#include "depmt/model.hpp"

namespace depmt {

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"num_layers", c.num_layers},
                        {"num_heads", c.num_heads},
                        {"model_dim", c.model_dim},
                        {"ff_dim", c.ff_dim},
                        {"max_seq_len", c.max_seq_len},
                        {"dropout", c.dropout},
                        {"parse_mode", parse_mode_name(c.parse_mode)},
                        {"parse_layer", c.parse_layer},
                        {"parse_head", c.parse_head},
                        {"parse_weight", c.parse_weight},
                        {"seed", c.seed},
                        {"vocab_size", c.vocab_size}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("parse_mode")) {
    const std::string name = j["parse_mode"].get<std::string>();
    if (!parse_mode_from_name(name, c.parse_mode))
      throw Error("bad_config", "unknown parse_mode: " + name);
  }
  c.parse_layer = j.value("parse_layer", c.parse_layer);
  c.parse_head = j.value("parse_head", c.parse_head);
  c.parse_weight = j.value("parse_weight", c.parse_weight);
  c.seed = j.value("seed", c.seed);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  return c;
}

}  // namespace depmt

#endif
