#pragma once

#include "cal/config.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cal {

/// Cartesian grid over strategy x aib_variant x contribution_mode x noise,
/// repeated for each seed. Every other key is shared by all points.
struct SweepGrid {
  TrainConfig base;
  std::vector<Strategy> strategies;
  std::vector<AibVariant> aib_variants;
  std::vector<ContributionMode> contribution_modes;
  std::vector<std::optional<NoiseKind>> noises;
  std::vector<std::uint64_t> seeds;
  int threads = 0;  // 0: hardware concurrency

  std::vector<TrainConfig> points() const;  // one per grid point, seed unset
};

/// List-valued keys `strategy`, `aib_variant`, `contribution_mode`, `noise`,
/// `seeds`; scalar `threads`; anything else goes to the base config.
SweepGrid parse_sweep_grid(const KeyValues& kv);

struct PointOutcome {
  double fusion_acc = 0.0;        // final epoch, on the (possibly noisy) test split
  double clean_fusion_acc = 0.0;  // same model on the clean test split
  std::vector<double> unimodal_acc;
};

struct SweepRow {
  std::size_t point = 0;
  TrainConfig config;
  bool ok = false;
  std::string error;
  PointOutcome outcome;
};

struct SweepAggregate {
  std::size_t point = 0;
  TrainConfig config;
  int runs_ok = 0;
  double fusion_mean = 0.0, fusion_std = 0.0;
  double clean_mean = 0.0, clean_std = 0.0;
  std::vector<double> unimodal_mean, unimodal_std;
};

struct SweepSummary {
  std::vector<SweepRow> detail;
  std::vector<SweepAggregate> aggregate;
};

using PointRunner = std::function<PointOutcome(const TrainConfig&)>;

/// Trains one configuration. With test-only noise the model is evaluated on
/// both the noisy and the clean test split.
PointOutcome run_point(const TrainConfig& cfg);

/// Executes every (point, seed). Points may run concurrently; each owns its
/// config, RNGs and model. A failing point is recorded and the sweep goes on.
SweepSummary run_sweep(const SweepGrid& grid, const PointRunner& runner = run_point);

/// Sample mean and (n - 1) standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

std::string sweep_csv(const SweepSummary& summary);

}  // namespace cal
