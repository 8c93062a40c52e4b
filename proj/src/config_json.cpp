#include "config_json.hpp"

#include <algorithm>
#include <cstring>

#include "bmpnet/error.hpp"

namespace bmp::detail {

void check_keys(const ojson& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::string_view precision_name(Precision p) { return p == Precision::Float64 ? "float64" : "float32"; }

Precision parse_precision(const std::string& name) {
  if (name == "float32") return Precision::Float32;
  if (name == "float64") return Precision::Float64;
  throw ConfigError("train.precision: expected float32 or float64, got '" + name + "'");
}

ojson to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"input_dim", c.input_dim},
          {"conditional_residue", c.conditional_residue},
          {"use_residue", c.use_residue},
          {"edge_blocking", c.edge_blocking}};
}

ModelConfig model_config_from_json(const ojson& j, const std::string& where, ModelConfig c) {
  check_keys(j, {"dim", "input_dim", "conditional_residue", "use_residue", "edge_blocking"}, where);
  read_field(j, "dim", c.dim, where);
  read_field(j, "input_dim", c.input_dim, where);
  read_field(j, "conditional_residue", c.conditional_residue, where);
  read_field(j, "use_residue", c.use_residue, where);
  read_field(j, "edge_blocking", c.edge_blocking, where);
  return c;
}

ojson to_json(const TrainConfig& c) {
  return {{"margin", c.margin},
          {"tau", c.tau},
          {"lambda_v", c.lambda_v},
          {"lambda_c", c.lambda_c},
          {"lambda_a", c.lambda_a},
          {"lambda_r", c.lambda_r},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"precision", precision_name(c.precision)}};
}

TrainConfig train_config_from_json(const ojson& j, const std::string& where, TrainConfig c) {
  check_keys(j,
             {"preset", "margin", "tau", "lambda_v", "lambda_c", "lambda_a", "lambda_r", "batch_size",
              "learning_rate", "epochs", "seed", "precision"},
             where);
  if (j.contains("preset")) {
    std::string preset;
    read_field(j, "preset", preset, where);
    TrainConfig p;
    if (preset == "ut-zappos") {
      p = TrainConfig::ut_zappos();
    } else if (preset == "mit-states") {
      p = TrainConfig::mit_states();
    } else {
      throw ConfigError(where + ".preset: expected ut-zappos or mit-states, got '" + preset + "'");
    }
    c.lambda_v = p.lambda_v;
    c.lambda_c = p.lambda_c;
    c.lambda_a = p.lambda_a;
    c.lambda_r = p.lambda_r;
  }
  read_field(j, "margin", c.margin, where);
  read_field(j, "tau", c.tau, where);
  read_field(j, "lambda_v", c.lambda_v, where);
  read_field(j, "lambda_c", c.lambda_c, where);
  read_field(j, "lambda_a", c.lambda_a, where);
  read_field(j, "lambda_r", c.lambda_r, where);
  read_field(j, "batch_size", c.batch_size, where);
  read_field(j, "learning_rate", c.learning_rate, where);
  read_field(j, "epochs", c.epochs, where);
  read_field(j, "seed", c.seed, where);
  if (j.contains("precision")) {
    std::string p;
    read_field(j, "precision", p, where);
    c.precision = parse_precision(p);
  }
  return c;
}

ojson to_json(const SyntheticWorldConfig& c) {
  return {{"num_attributes", c.num_attributes},
          {"num_objects", c.num_objects},
          {"feature_dim", c.feature_dim},
          {"unseen_fraction", c.unseen_fraction},
          {"images_per_pair", c.images_per_pair},
          {"noise_scale", c.noise_scale},
          {"seed", c.seed}};
}

SyntheticWorldConfig synthetic_config_from_json(const ojson& j, const std::string& where) {
  check_keys(j,
             {"num_attributes", "num_objects", "feature_dim", "unseen_fraction", "images_per_pair",
              "noise_scale", "seed"},
             where);
  SyntheticWorldConfig c;
  read_field(j, "num_attributes", c.num_attributes, where);
  read_field(j, "num_objects", c.num_objects, where);
  read_field(j, "feature_dim", c.feature_dim, where);
  read_field(j, "unseen_fraction", c.unseen_fraction, where);
  read_field(j, "images_per_pair", c.images_per_pair, where);
  read_field(j, "noise_scale", c.noise_scale, where);
  read_field(j, "seed", c.seed, where);
  return c;
}

}  // namespace bmp::detail
