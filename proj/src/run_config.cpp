#include "bmpnet/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bmpnet/error.hpp"
#include "config_json.hpp"

namespace bmp {

namespace fs = std::filesystem;
using detail::ojson;

const std::vector<std::string>& known_ablations() {
  static const std::vector<std::string> names = {"no-blocking", "no-residue", "no-lv",
                                                 "no-lc",       "no-aux",     "no-lr"};
  return names;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text, const fs::path& base_dir) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  detail::check_keys(j, {"dataset", "output_dir", "model", "train", "ablate", "eval"}, "config");
  RunConfig c;

  if (!j.contains("dataset")) throw ConfigError("config.dataset: required");
  const ojson& d = j.at("dataset");
  detail::check_keys(d, {"manifest", "features", "candidates", "synthetic"}, "config.dataset");
  if (d.contains("synthetic")) {
    if (d.contains("manifest") || d.contains("features")) {
      throw ConfigError("config.dataset: give either synthetic or manifest/features, not both");
    }
    c.dataset.synthetic = detail::synthetic_config_from_json(d.at("synthetic"), "config.dataset.synthetic");
  } else {
    if (!d.contains("manifest") || !d.contains("features")) {
      throw ConfigError("config.dataset: manifest and features are required");
    }
    std::string manifest, features;
    detail::read_field(d, "manifest", manifest, "config.dataset");
    detail::read_field(d, "features", features, "config.dataset");
    c.dataset.manifest = resolve(base_dir, manifest);
    c.dataset.features = resolve(base_dir, features);
  }
  if (d.contains("candidates")) {
    std::string mode;
    detail::read_field(d, "candidates", mode, "config.dataset");
    if (mode == "listed") {
      c.dataset.candidates = CandidateMode::Listed;
    } else if (mode == "cartesian") {
      c.dataset.candidates = CandidateMode::Cartesian;
    } else {
      throw ConfigError("config.dataset.candidates: expected listed or cartesian, got '" + mode + "'");
    }
  }

  if (j.contains("output_dir")) {
    std::string out;
    detail::read_field(j, "output_dir", out, "config");
    c.output_dir = resolve(base_dir, out);
  } else {
    c.output_dir = resolve(base_dir, "run");
  }

  if (j.contains("model")) {
    c.model = detail::model_config_from_json(j.at("model"), "config.model");
    c.input_dim_from_data = !j.at("model").contains("input_dim");
  }
  if (j.contains("train")) c.train = detail::train_config_from_json(j.at("train"), "config.train");

  if (j.contains("ablate")) {
    std::vector<std::string> names;
    detail::read_field(j, "ablate", names, "config");
    for (const auto& n : names) c.apply_ablation(n);
  }
  if (j.contains("eval")) {
    detail::check_keys(j.at("eval"), {"topk"}, "config.eval");
    detail::read_field(j.at("eval"), "topk", c.topk, "config.eval");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

void RunConfig::apply_ablation(std::string_view name) {
  if (name == "no-blocking") {
    model.edge_blocking = false;
    train.tau = 0;
  } else if (name == "no-residue") {
    model.use_residue = false;
  } else if (name == "no-lv") {
    train.lambda_v = 0;
  } else if (name == "no-lc") {
    train.lambda_c = 0;
  } else if (name == "no-aux") {
    train.lambda_a = 0;
  } else if (name == "no-lr") {
    train.lambda_r = 0;
  } else {
    throw ConfigError("ablate: unknown ablation '" + std::string(name) + "'");
  }
  if (std::find(ablations.begin(), ablations.end(), name) == ablations.end()) ablations.emplace_back(name);
}

void RunConfig::reapply_ablations() {
  const auto names = ablations;
  for (const auto& n : names) apply_ablation(n);
}

void RunConfig::validate() const {
  train.validate();
  if (model.dim == 0) throw ConfigError("config.model.dim: must be positive");
  if (!input_dim_from_data && model.input_dim == 0) throw ConfigError("config.model.input_dim: must be positive");
  if (topk.empty()) throw ConfigError("config.eval.topk: must not be empty");
  for (std::size_t k : topk) {
    if (k == 0) throw ConfigError("config.eval.topk: entries must be positive");
  }
  if (dataset.synthetic) dataset.synthetic->validate();
}

std::string RunConfig::to_json() const {
  ojson j;
  ojson d;
  if (dataset.synthetic) {
    d["synthetic"] = detail::to_json(*dataset.synthetic);
  } else {
    d["manifest"] = dataset.manifest.string();
    d["features"] = dataset.features.string();
  }
  d["candidates"] = dataset.candidates == CandidateMode::Listed ? "listed" : "cartesian";
  j["dataset"] = std::move(d);
  j["output_dir"] = output_dir.string();
  ojson m = detail::to_json(model);
  if (input_dim_from_data) m.erase("input_dim");
  j["model"] = std::move(m);
  j["train"] = detail::to_json(train);
  j["ablate"] = ablations;
  j["eval"] = {{"topk", topk}};
  return j.dump(2) + "\n";
}

Dataset load_run_dataset(RunConfig& config) {
  Dataset data = config.dataset.synthetic
                     ? generate_synthetic(*config.dataset.synthetic)
                     : load_dataset(config.dataset.manifest, config.dataset.features, config.dataset.candidates);
  if (config.input_dim_from_data) {
    config.model.input_dim = data.feature_dim();
  } else if (config.model.input_dim != data.feature_dim()) {
    throw ConfigError("config.model.input_dim: " + std::to_string(config.model.input_dim) +
                      " does not match the feature width " + std::to_string(data.feature_dim()));
  }
  return data;
}

}  // namespace bmp
