#include "bmpnet/commands.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "bmpnet/checkpoint.hpp"
#include "bmpnet/error.hpp"
#include "config_json.hpp"

namespace bmp::cli {

namespace fs = std::filesystem;
using detail::ojson;

void apply_overrides(RunConfig& config, const TrainOverrides& o) {
  if (o.seed) config.train.seed = *o.seed;
  if (o.output_dir) config.output_dir = *o.output_dir;
  if (o.epochs) config.train.epochs = *o.epochs;
  if (o.lambda_v) config.train.lambda_v = *o.lambda_v;
  if (o.lambda_c) config.train.lambda_c = *o.lambda_c;
  if (o.lambda_a) config.train.lambda_a = *o.lambda_a;
  if (o.lambda_r) config.train.lambda_r = *o.lambda_r;
  if (o.precision) config.train.precision = detail::parse_precision(*o.precision);
  config.reapply_ablations();
  for (const auto& a : o.ablations) config.apply_ablation(a);
  config.validate();
}

RunConfig resolve_run_config(const fs::path& config_path, const TrainOverrides& overrides) {
  RunConfig c = RunConfig::load(config_path);
  apply_overrides(c, overrides);
  return c;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

template <typename T>
TrainSummary train_typed(RunConfig& config, const Dataset& data, std::ostream& log) {
  const fs::path dir = config.output_dir;
  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw Error("cannot write " + (dir / "metrics.jsonl").string());

  Trainer<T> trainer(data, config.model, config.train);
  TrainHooks hooks;
  hooks.log = &log;
  hooks.dump_dir = dir;
  hooks.checkpoint_dir = dir;
  hooks.on_epoch = [&](const EpochRecord& r) {
    ojson line = {{"epoch", r.epoch},       {"l_v", r.l_v}, {"l_c", r.l_c}, {"l_aux", r.l_aux},
                  {"l_r", r.l_r}};
    if (std::isnan(r.val_auc)) {
      line["val_auc"] = nullptr;
    } else {
      line["val_auc"] = 100 * r.val_auc;
    }
    metrics << line.dump() << '\n' << std::flush;
    log << "epoch " << r.epoch << "  L_v " << r.l_v << "  L_c " << r.l_c << "  L_aux " << r.l_aux << "  L_r "
        << r.l_r << "  val AUC " << (std::isnan(r.val_auc) ? std::string("n/a") : std::to_string(100 * r.val_auc))
        << '\n';
  };
  const TrainResult<T> result = train(trainer, hooks);

  TrainSummary summary;
  summary.output_dir = dir;
  summary.best_epoch = result.best_epoch;
  summary.best_val_auc = result.best_val_auc;
  try {
    summary.test_reports.push_back(evaluate(result.best.model, data, Split::Test, config.topk));
    write_text(dir / "report.json", report_json(summary.test_reports));
    write_text(dir / "curves.csv", curves_csv(summary.test_reports));
  } catch (const Error& e) {
    log << "test evaluation skipped: " << e.what() << '\n';
  }
  log << "best epoch " << summary.best_epoch;
  if (!std::isnan(summary.best_val_auc)) log << " (val AUC " << 100 * summary.best_val_auc << ")";
  log << '\n';
  return summary;
}

template <typename T>
std::vector<EvalReport> eval_typed(const fs::path& checkpoint, const Dataset& data, Split split,
                                   const std::vector<std::size_t>& ks) {
  const ModelState<T> state = load_checkpoint<T>(checkpoint, data.universe);
  return {evaluate(state.model, data, split, ks)};
}

}  // namespace

TrainSummary run_train(RunConfig config, std::ostream& log) {
  const Dataset data = load_run_dataset(config);
  config.input_dim_from_data = false;
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "resolved_config.json", config.to_json());
  log << "training on " << data.images_in(Split::Train).size() << " images, " << data.universe.seen().size()
      << " seen and " << data.universe.unseen().size() << " unseen pairs\n";
  if (config.train.precision == Precision::Float64) return train_typed<double>(config, data, log);
  return train_typed<float>(config, data, log);
}

std::vector<EvalReport> run_eval(RunConfig config, const std::optional<fs::path>& checkpoint, Split split,
                                 std::vector<std::size_t> ks, std::ostream& log) {
  if (ks.empty()) ks = config.topk;
  for (std::size_t k : ks) {
    if (k == 0) throw ConfigError("topk: entries must be positive");
  }
  const Dataset data = load_run_dataset(config);
  const fs::path path = checkpoint ? *checkpoint : config.output_dir / "checkpoint_best.bin";
  const CheckpointInfo info = read_checkpoint_info(path);
  const auto reports = info.precision == Precision::Float64 ? eval_typed<double>(path, data, split, ks)
                                                            : eval_typed<float>(path, data, split, ks);
  const fs::path& dir = config.output_dir;
  fs::create_directories(dir);
  const std::string name(split_name(split));
  write_text(dir / ("report_" + name + ".json"), report_json(reports));
  write_text(dir / ("curves_" + name + ".csv"), curves_csv(reports));
  log << report_json(reports);
  return reports;
}

SyntheticWorldConfig load_synthetic_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("synthetic config: cannot open " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: not valid JSON: ") + e.what());
  }
  SyntheticWorldConfig c = detail::synthetic_config_from_json(j, "synthetic");
  c.validate();
  return c;
}

void run_synth(const SyntheticWorldConfig& config, const fs::path& out_dir, std::ostream& log) {
  const Dataset data = generate_synthetic(config);
  fs::create_directories(out_dir);
  save_dataset(data, out_dir / "manifest.json", out_dir / "features.bmpf");
  log << "wrote " << data.images.size() << " images (" << data.universe.seen().size() << " seen, "
      << data.universe.unseen().size() << " unseen pairs) to " << out_dir.string() << '\n';
}

void run_convert(const fs::path& csv, const fs::path& out, std::ostream& log) {
  const Tensor<float> features = read_feature_csv(csv);
  write_feature_file(out, features);
  log << "wrote " << features.dim(0) << " x " << features.dim(1) << " features to " << out.string() << '\n';
}

}  // namespace bmp::cli
