// Command-line front end: gen-data, train, eval, sweep.

#include "cal/config.hpp"
#include "cal/errors.hpp"
#include "cal/sweep.hpp"
#include "cal/synthdata.hpp"
#include "cal/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using cal::KeyValues;

/// Flags shared by every subcommand; each maps onto a config key.
struct CommonFlags {
  std::string config;
  std::string out;
  KeyValues overrides;

  void attach(CLI::App* app, bool with_out = true) {
    app->add_option("--config", config, "key=value config file");
    if (with_out) app->add_option("--out", out, "output path")->required();
    auto key = [this, app](const std::string& flag, const std::string& k, const std::string& help) {
      app->add_option_function<std::string>(flag, [this, k](const std::string& v) { overrides[k] = v; }, help);
    };
    key("--dataset", "dataset", "dataset file (otherwise generated)");
    key("--strategy", "strategy", "strong|null|weak|ogm");
    key("--aib-variant", "aib_variant", "beta|inv-beta|mi|mx|mx-mi|off");
    key("--contribution-mode", "contribution_mode", "dxi|d-plus-i|d-only|i-only|kl");
    key("--temperature", "temperature", "softmax temperature T");
    key("--eta", "eta", "modulation strength");
    key("--lambda", "lambda", "bottleneck loss weight");
    key("--noise", "noise", "gaussian|salt-pepper|none");
    key("--epsilon", "epsilon", "noise level");
    key("--noise-scope", "noise_scope", "test|train-test");
    key("--seed", "seed", "run seed");
    key("--epochs", "epochs", "training epochs");
    key("--dims", "dims", "per-modality feature dims, comma separated");
    key("--signal", "signal", "per-modality class-mean stddev, comma separated");
    key("--classes", "classes", "number of classes");
  }

  cal::TrainConfig resolve() const {
    KeyValues kv;
    if (!config.empty()) kv = cal::read_key_values(config);
    for (const auto& [k, v] : overrides) kv[k] = v;
    cal::TrainConfig cfg = cal::config_from_key_values(kv);
    cfg.validate();
    return cfg;
  }
};

int gen_data(const CommonFlags& flags) {
  cal::TrainConfig cfg = flags.resolve();
  cal::DatasetSpec spec = cfg.data;
  spec.seed = cfg.resolved_data_seed();
  cal::MultimodalDataset data = cal::generate_dataset(spec);
  if (auto noise = cfg.noise_spec()) data = cal::apply_noise(data, *noise);
  cal::save_dataset(data, flags.out);
  std::cout << "wrote " << flags.out << " (" << data.train.size() << "/" << data.val.size() << "/"
            << data.test.size() << " samples, " << data.modalities() << " modalities)\n";
  return 0;
}

int train(const CommonFlags& flags) {
  const cal::TrainConfig cfg = flags.resolve();
  const auto result = cal::run_training(cfg, flags.out);
  const auto& last = result.final();
  std::cout << "epochs=" << result.epochs.size() << " final_fusion_acc=" << cal::format_double(last.fusion_acc);
  for (std::size_t m = 0; m < last.unimodal_acc.size(); ++m)
    std::cout << " acc_m" << m << "=" << cal::format_double(last.unimodal_acc[m]);
  std::cout << "\nrun directory: " << flags.out << "\n";
  return 0;
}

int eval(const CommonFlags& flags, const std::string& model_path) {
  const cal::TrainConfig cfg = flags.resolve();
  std::filesystem::path path = model_path;
  if (std::filesystem::is_directory(path)) path /= "model.bin";
  const cal::Model model = cal::Model::load(path);
  const cal::MultimodalDataset data = cal::prepare_dataset(cfg);

  nlohmann::ordered_json j;
  for (auto [name, kind] : {std::pair{"val", cal::SplitKind::val}, {"test", cal::SplitKind::test}}) {
    const auto m = cal::evaluate(model, data.split(kind));
    j[name]["fusion_acc"] = m.fusion_acc;
    j[name]["unimodal_acc"] = m.unimodal_acc;
    std::vector<double> masked;
    for (int k = 0; k < model.modalities(); ++k) {
      std::vector<bool> mask(static_cast<std::size_t>(model.modalities()), false);
      mask[static_cast<std::size_t>(k)] = true;
      masked.push_back(cal::evaluate(model, data.split(kind), mask).fusion_acc);
    }
    j[name]["masked_fusion_acc"] = masked;
  }
  const std::string text = j.dump(2);
  if (!flags.out.empty()) {
    std::ofstream os(flags.out, std::ios::trunc);
    os << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

int sweep(const CommonFlags& flags) {
  KeyValues kv;
  if (!flags.config.empty()) kv = cal::read_key_values(flags.config);
  for (const auto& [k, v] : flags.overrides) kv[k] = v;
  const cal::SweepGrid grid = cal::parse_sweep_grid(kv);
  const auto summary = cal::run_sweep(grid);
  std::filesystem::create_directories(flags.out);
  const auto path = std::filesystem::path(flags.out) / "sweep.csv";
  std::ofstream os(path, std::ios::trunc);
  os << cal::sweep_csv(summary);
  std::size_t failed = 0;
  for (const auto& r : summary.detail) failed += r.ok ? 0 : 1;
  std::cout << "wrote " << path.string() << " (" << summary.detail.size() << " runs, " << failed << " failed)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contribution-guided asymmetric multimodal training"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, sweep_flags;
  std::string model_path;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic multimodal dataset file");
  gen_flags.attach(gen_cmd);
  auto* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
  train_flags.attach(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model");
  eval_flags.attach(eval_cmd, false);
  eval_cmd->add_option("--out", eval_flags.out, "write the metrics JSON here");
  eval_cmd->add_option("--model", model_path, "model.bin or a run directory")->required();
  auto* sweep_cmd = app.add_subcommand("sweep", "run a grid of configurations");
  sweep_flags.attach(sweep_cmd);

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen_cmd->parsed()) return gen_data(gen_flags);
    if (train_cmd->parsed()) return train(train_flags);
    if (eval_cmd->parsed()) return eval(eval_flags, model_path);
    if (sweep_cmd->parsed()) return sweep(sweep_flags);
  } catch (const cal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
