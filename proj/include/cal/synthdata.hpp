#pragma once

#include "cal/model.hpp"
#include "cal/rng.hpp"
#include "cal/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cal {

/// Class-conditional Gaussian generator parameters.
struct DatasetSpec {
  int classes = 4;
  std::vector<Index> dims{8, 8};
  std::vector<double> signal{2.0, 0.5};  // stddev of the class means, per modality
  double stddev = 1.0;                   // within-class stddev
  Index n_train = 2000;
  Index n_val = 500;
  Index n_test = 500;
  std::uint64_t seed = 0;

  int modalities() const { return static_cast<int>(dims.size()); }
  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

enum class NoiseKind { gaussian, salt_pepper };
enum class NoiseScope { test_only, train_and_test };

std::string to_string(NoiseKind k);
std::string to_string(NoiseScope s);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double epsilon = 0.0;
  NoiseScope scope = NoiseScope::test_only;
  std::vector<int> modalities;  // targets; empty means none
  std::uint64_t seed = 0;

  bool operator==(const NoiseSpec&) const = default;
};

enum class SplitKind { train, val, test };

/// Per-column statistics of a clean training block.
struct ColumnStats {
  RowVector stddev;
  RowVector min;
  RowVector max;

  static ColumnStats of(const Matrix& x);
};

struct MultimodalDataset {
  DatasetSpec spec;
  Batch train;
  Batch val;
  Batch test;
  std::vector<ColumnStats> train_stats;  // from the clean training split
  std::vector<NoiseSpec> noise;          // applied, in order

  int modalities() const { return spec.modalities(); }
  const Batch& split(SplitKind k) const;
  Batch& split(SplitKind k);
};

/// Class means per modality ~ N(0, s_m^2 I), drawn once; samples
/// ~ N(mean_label, stddev^2 I); labels uniform. Bit-deterministic in spec.seed.
MultimodalDataset generate_dataset(const DatasetSpec& spec);

/// X + (epsilon / 10) * col_stddev * N(0, 1).
Matrix inject_gaussian_noise(const Matrix& x, double epsilon, const RowVector& col_stddev, Rng& rng);

/// Each entry replaced with probability epsilon / 100: by the column min
/// (pepper) or max (salt), each with probability p / 2.
Matrix inject_salt_pepper(const Matrix& x, double epsilon, const RowVector& col_min, const RowVector& col_max,
                          Rng& rng);

/// Splits touched by `scope`. train_and_test also covers validation, which
/// is drawn from the training distribution.
std::vector<SplitKind> noisy_splits(NoiseScope scope);

/// Copy of `data` with `noise` applied to its scope and target modalities.
MultimodalDataset apply_noise(const MultimodalDataset& data, const NoiseSpec& noise);

/// Little-endian binary file: magic "CALD", version, then CRC32-checked
/// blocks (spec, stats, noise, train, val, test).
void save_dataset(const MultimodalDataset& data, const std::filesystem::path& path);
MultimodalDataset load_dataset(const std::filesystem::path& path);

/// Serialised bytes of `save_dataset`, for hashing and byte comparisons.
std::vector<std::uint8_t> encode_dataset(const MultimodalDataset& data);
MultimodalDataset decode_dataset(const std::vector<std::uint8_t>& bytes);

}  // namespace cal
