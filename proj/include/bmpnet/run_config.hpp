#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bmpnet/dataset.hpp"
#include "bmpnet/model.hpp"
#include "bmpnet/training.hpp"

namespace bmp {

// Either a manifest plus feature file, or a synthetic world generated on load.
struct DatasetSource {
  std::filesystem::path manifest;
  std::filesystem::path features;
  CandidateMode candidates = CandidateMode::Listed;
  std::optional<SyntheticWorldConfig> synthetic;
};

// One training/evaluation run. Unknown keys are rejected at every level;
// relative paths resolve against the config file's directory.
//
//   {"dataset": {"manifest", "features", "candidates": "listed"|"cartesian"}
//            or {"synthetic": {...}},
//    "output_dir": "...",
//    "model": {"dim", "input_dim", "conditional_residue", "use_residue", "edge_blocking"},
//    "train": {"preset": "ut-zappos"|"mit-states", "margin", "tau", "lambda_v", "lambda_c",
//              "lambda_a", "lambda_r", "batch_size", "learning_rate", "epochs", "seed",
//              "precision": "float32"|"float64"},
//    "ablate": ["no-blocking", ...],
//    "eval": {"topk": [1, 2, 3]}}
struct RunConfig {
  DatasetSource dataset;
  std::filesystem::path output_dir = "run";
  ModelConfig model;
  bool input_dim_from_data = true;  // input_dim not given: take the feature width
  TrainConfig train;
  std::vector<std::string> ablations;
  std::vector<std::size_t> topk = {1, 2, 3};

  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  // Applies a named ablation to the model and train settings and records it.
  // Throws ConfigError on unknown names.
  void apply_ablation(std::string_view name);
  // Re-applies every recorded ablation; call after overriding weights.
  void reapply_ablations();

  // Fully resolved settings, parseable by parse().
  std::string to_json() const;

  void validate() const;
};

const std::vector<std::string>& known_ablations();

// Loads or generates the dataset and fills model.input_dim when unset.
Dataset load_run_dataset(RunConfig& config);

}  // namespace bmp
