#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bmpnet/commands.hpp"
#include "bmpnet/error.hpp"
#include "bmpnet/runtime.hpp"

namespace {

std::vector<std::size_t> parse_topk(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const long v = std::stol(item, &used);
    if (used != item.size() || v <= 0) throw bmp::ConfigError("--topk: '" + item + "' is not a positive integer");
    ks.push_back(static_cast<std::size_t>(v));
  }
  return ks;
}

}  // namespace

int main(int argc, char** argv) {
  bmp::tune_allocator();
  CLI::App app{"bmp: compositional zero-shot learning with blocked message passing"};
  app.require_subcommand(1);

  bmp::SyntheticWorldConfig synth;
  std::string synth_out = "synthetic";
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic compositional dataset");
  std::string synth_config;
  synth_cmd->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth_cmd->add_option("--config", synth_config, "world settings (JSON); flags override it");
  // Each flag also records how to copy its value over a loaded config.
  std::vector<std::pair<CLI::Option*, std::function<void(bmp::SyntheticWorldConfig&)>>> synth_flags;
  auto synth_flag = [&](const std::string& name, auto member) {
    auto* opt = synth_cmd->add_option(name, synth.*member)->capture_default_str();
    synth_flags.emplace_back(opt, [&synth, member](bmp::SyntheticWorldConfig& c) { c.*member = synth.*member; });
  };
  synth_flag("--attributes", &bmp::SyntheticWorldConfig::num_attributes);
  synth_flag("--objects", &bmp::SyntheticWorldConfig::num_objects);
  synth_flag("--feature-dim", &bmp::SyntheticWorldConfig::feature_dim);
  synth_flag("--unseen-fraction", &bmp::SyntheticWorldConfig::unseen_fraction);
  synth_flag("--images-per-pair", &bmp::SyntheticWorldConfig::images_per_pair);
  synth_flag("--noise", &bmp::SyntheticWorldConfig::noise_scale);
  synth_flag("--seed", &bmp::SyntheticWorldConfig::seed);

  std::string config_path;
  bmp::cli::TrainOverrides overrides;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
    cmd->add_option("--ablate", overrides.ablations, "no-blocking|no-residue|no-lv|no-lc|no-aux|no-lr");
    cmd->add_option("--out", overrides.output_dir, "output directory");
  };
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_run_options(train_cmd);
  train_cmd->add_option("--seed", overrides.seed);
  train_cmd->add_option("--epochs", overrides.epochs);
  train_cmd->add_option("--lambda-v", overrides.lambda_v);
  train_cmd->add_option("--lambda-c", overrides.lambda_c);
  train_cmd->add_option("--lambda-a", overrides.lambda_a);
  train_cmd->add_option("--lambda-r", overrides.lambda_r);
  train_cmd->add_option("--precision", overrides.precision, "float32 or float64");

  std::optional<std::string> checkpoint;
  std::string split = "test";
  std::string topk;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_run_options(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "default: <out>/checkpoint_best.bin");
  eval_cmd->add_option("--split", split, "val or test")->capture_default_str();
  eval_cmd->add_option("--topk", topk, "comma-separated k values");

  std::string csv_in, bmpf_out;
  auto* convert_cmd = app.add_subcommand("convert", "convert CSV features to a binary feature file");
  convert_cmd->add_option("--csv", csv_in)->required();
  convert_cmd->add_option("--out", bmpf_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      if (!synth_config.empty()) {
        bmp::SyntheticWorldConfig loaded = bmp::cli::load_synthetic_config(synth_config);
        for (const auto& [opt, copy] : synth_flags) {
          if (opt->count() > 0) copy(loaded);
        }
        synth = loaded;
      }
      bmp::cli::run_synth(synth, synth_out, std::cout);
    } else if (train_cmd->parsed()) {
      bmp::cli::run_train(bmp::cli::resolve_run_config(config_path, overrides), std::cout);
    } else if (eval_cmd->parsed()) {
      std::optional<std::filesystem::path> ckpt;
      if (checkpoint) ckpt = *checkpoint;
      bmp::cli::run_eval(bmp::cli::resolve_run_config(config_path, overrides), ckpt, bmp::parse_split(split),
                         parse_topk(topk), std::cout);
    } else if (convert_cmd->parsed()) {
      bmp::cli::run_convert(csv_in, bmpf_out, std::cout);
    }
  } catch (const bmp::NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const bmp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
