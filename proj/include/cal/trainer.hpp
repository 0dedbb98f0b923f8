#pragma once

#include "cal/config.hpp"
#include "cal/contribution.hpp"
#include "cal/model.hpp"
#include "cal/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cal {

struct EvalMetrics {
  double fusion_acc = 0.0;
  std::vector<double> unimodal_acc;
};

/// Argmax accuracies on posterior-mean latents. Modalities flagged in
/// `masked` are ablated exactly as the contribution metric ablates them.
EvalMetrics evaluate(const Model& model, const Batch& split, const std::vector<bool>& masked = {});

struct EpochMetrics {
  int epoch = 0;
  double fusion_acc = 0.0;
  std::vector<double> unimodal_acc;
  double loss_total = 0.0;
  double loss_ce_fusion = 0.0;
  double loss_ce_uni = 0.0;
  double loss_aib = 0.0;
  std::vector<double> W, D, I, phi, R, beta, a;
  double wall_ms = 0.0;
};

std::string metrics_csv_header(int modalities);
std::string metrics_csv_row(const EpochMetrics& row);

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<ContributionReport> reports;
  Model model;
  int degenerate_mi_warnings = 0;
  int undersampled_mi_warnings = 0;
  std::uint64_t dataset_hash = 0;

  const EpochMetrics& final() const { return epochs.back(); }
};

/// Called after each epoch with the model state at that point.
using EpochObserver = std::function<void(const EpochMetrics&, const Model&)>;

/// Loads or generates the dataset named by `cfg` and applies its noise spec.
MultimodalDataset prepare_dataset(const TrainConfig& cfg);

/// Runs CAL training on `data` (noise already applied). Single-threaded and
/// deterministic in cfg.seed.
TrainResult train(const TrainConfig& cfg, const MultimodalDataset& data, const EpochObserver& observer = {});

/// FNV-1a, used for provenance hashes.
std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size);
std::uint64_t fnv1a(const std::string& s);

/// Writes config.snapshot, metrics.csv, summary.json and model.bin.
void write_run_directory(const std::filesystem::path& dir, const TrainConfig& cfg, const TrainResult& result);

/// prepare_dataset + train + write_run_directory.
TrainResult run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace cal
