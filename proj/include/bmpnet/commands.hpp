#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bmpnet/dataset.hpp"
#include "bmpnet/evaluation.hpp"
#include "bmpnet/run_config.hpp"

// The bodies of the `bmp` subcommands, kept out of main() so tests can call
// them directly.
namespace bmp::cli {

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda_v, lambda_c, lambda_a, lambda_r;
  std::optional<std::string> precision;
  std::vector<std::string> ablations;
};

// Config file, then explicit overrides, then ablations.
RunConfig resolve_run_config(const std::filesystem::path& config_path, const TrainOverrides& overrides);
void apply_overrides(RunConfig& config, const TrainOverrides& overrides);

struct TrainSummary {
  std::filesystem::path output_dir;
  std::size_t best_epoch = 0;
  double best_val_auc = 0;  // fraction; NaN when validation was never scored
  std::vector<EvalReport> test_reports;
};

// Writes resolved_config.json, metrics.jsonl (one line per epoch),
// checkpoint_best.bin, checkpoint_last.bin, report.json and curves.csv under
// the output directory.
TrainSummary run_train(RunConfig config, std::ostream& log);

// Evaluates a checkpoint (default: <output_dir>/checkpoint_best.bin) and
// writes report_<split>.json and curves_<split>.csv to the output directory.
std::vector<EvalReport> run_eval(RunConfig config, const std::optional<std::filesystem::path>& checkpoint,
                                 Split split, std::vector<std::size_t> ks, std::ostream& log);

// Reads a JSON object with the SyntheticWorldConfig fields; missing keys keep
// their defaults.
SyntheticWorldConfig load_synthetic_config(const std::filesystem::path& path);

// Writes manifest.json and features.bmpf into `out_dir`.
void run_synth(const SyntheticWorldConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

void run_convert(const std::filesystem::path& csv, const std::filesystem::path& out, std::ostream& log);

}  // namespace bmp::cli
