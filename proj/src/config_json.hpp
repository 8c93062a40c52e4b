#pragma once

// JSON conversion of configuration structs, shared by run configs and
// checkpoints. Readers reject unknown keys and name the offending path.

#include <initializer_list>
#include <string>
#include <type_traits>

#include "bmpnet/dataset.hpp"
#include "bmpnet/error.hpp"
#include "bmpnet/model.hpp"
#include "bmpnet/training.hpp"
#include "json.hpp"

namespace bmp::detail {

using ojson = nlohmann::ordered_json;

void check_keys(const ojson& j, std::initializer_list<const char*> allowed, const std::string& where);

template <typename V>
void read_field(const ojson& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
    if (!j.at(key).is_number_unsigned()) throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::string_view precision_name(Precision p);
Precision parse_precision(const std::string& name);

ojson to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const ojson& j, const std::string& where, ModelConfig base = {});

// Every field; the preset is not recorded since the weights are explicit.
ojson to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const ojson& j, const std::string& where, TrainConfig base = {});

ojson to_json(const SyntheticWorldConfig& c);
SyntheticWorldConfig synthetic_config_from_json(const ojson& j, const std::string& where);

}  // namespace bmp::detail
