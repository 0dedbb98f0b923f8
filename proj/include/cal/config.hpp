#pragma once

#include "cal/aib.hpp"
#include "cal/contribution.hpp"
#include "cal/layers.hpp"
#include "cal/modulation.hpp"
#include "cal/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cal {

struct TrainConfig {
  // Data: a dataset file, or the generator spec below when `dataset` is empty.
  std::string dataset;
  DatasetSpec data;
  std::optional<std::uint64_t> data_seed;  // defaults to `seed`

  int epochs = 60;
  Index batch_size = 64;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  double temperature = 1.0;
  double eta = 1.0;
  double lambda = 10.0;
  int lag = 5;
  double eps = 1e-8;

  Strategy strategy = Strategy::strong;
  AibVariant aib_variant = AibVariant::beta;
  ContributionMode contribution_mode = ContributionMode::dxi;
  AblationMode ablation_mode = AblationMode::mask;
  int retrain_steps = 50;
  bool beta_on_compression = false;
  bool mi_zx_per_dim = true;
  bool modulate_heads = true;
  std::vector<double> loss_weights;  // lambda_m; empty means all 1

  std::vector<Index> encoder_hidden{64, 32};
  Index latent_dim = 16;
  Index fusion_hidden = 32;
  ActivationKind activation = ActivationKind::relu;

  std::uint64_t seed = 0;

  // Noise attack; "none" when unset.
  std::optional<NoiseKind> noise;
  double epsilon = 0.0;
  NoiseScope noise_scope = NoiseScope::test_only;
  std::vector<int> noise_modalities{1};
  std::uint64_t noise_seed = 0;

  // Plain joint cross-entropy training: modulation and the bottleneck are
  // bypassed entirely (reference path for the baseline comparison).
  bool reference = false;
  bool record_wall_time = false;

  bool operator==(const TrainConfig&) const = default;

  std::uint64_t resolved_data_seed() const { return data_seed.value_or(seed); }
  std::vector<double> resolved_loss_weights(int modalities) const;
  std::optional<NoiseSpec> noise_spec() const;
  ModelConfig model_config(const DatasetSpec& spec) const;
  ContributionConfig contribution_config() const;

  void validate() const;
};

/// Flat `key=value` text with `#` comments.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies recognised keys; unknown keys raise ConfigError.
void apply_key_values(TrainConfig& cfg, const KeyValues& kv);
TrainConfig config_from_key_values(const KeyValues& kv);

/// Lossless text form: config_from_key_values(parse_key_values(to_config_text(c))) == c.
std::string to_config_text(const TrainConfig& cfg);

/// Every key understood by TrainConfig.
const std::vector<std::string>& config_keys();

Strategy parse_strategy(const std::string& s);
AibVariant parse_aib_variant(const std::string& s);
ContributionMode parse_contribution_mode(const std::string& s);
AblationMode parse_ablation_mode(const std::string& s);
std::optional<NoiseKind> parse_noise(const std::string& s);
NoiseScope parse_noise_scope(const std::string& s);
ActivationKind parse_activation(const std::string& s);

std::string format_double(double v);

}  // namespace cal
