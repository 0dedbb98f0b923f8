#include "cal/synthdata.hpp"

#include "binio.hpp"
#include "cal/errors.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace cal {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'L', 'D'};
constexpr std::uint32_t kVersion = 1;

Batch draw_split(const DatasetSpec& spec, const std::vector<Matrix>& means, Index n, Rng& rng) {
  Batch b;
  b.labels.resize(static_cast<std::size_t>(n));
  for (int m = 0; m < spec.modalities(); ++m) b.features.emplace_back(n, spec.dims[static_cast<std::size_t>(m)]);
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
    b.labels[static_cast<std::size_t>(i)] = y;
    for (int m = 0; m < spec.modalities(); ++m) {
      auto& x = b.features[static_cast<std::size_t>(m)];
      const auto& mean = means[static_cast<std::size_t>(m)];
      for (Index j = 0; j < x.cols(); ++j) x(i, j) = mean(y, j) + spec.stddev * rng.normal();
    }
  }
  return b;
}

void write_batch(binio::Writer& w, const Batch& b) {
  w.u64(static_cast<std::uint64_t>(b.size()));
  for (int y : b.labels) w.i32(y);
  w.u32(static_cast<std::uint32_t>(b.features.size()));
  for (const auto& x : b.features) w.matrix(x);
}

Batch read_batch(binio::Reader& r, const DatasetSpec& spec, const std::string& name) {
  Batch b;
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 4) throw TruncatedError("dataset: block '" + name + "' label count exceeds data");
  b.labels.resize(n);
  for (auto& y : b.labels) {
    y = r.i32();
    if (y < 0 || y >= spec.classes) throw FormatError("dataset: label out of range in block '" + name + "'");
  }
  const std::uint32_t m = r.u32();
  if (static_cast<int>(m) != spec.modalities())
    throw FormatError("dataset: block '" + name + "' modality count disagrees with spec");
  for (std::uint32_t i = 0; i < m; ++i) {
    b.features.push_back(r.matrix());
    if (b.features.back().rows() != static_cast<Index>(n) || b.features.back().cols() != spec.dims[i])
      throw FormatError("dataset: block '" + name + "' feature shape disagrees with spec");
  }
  return b;
}

void write_block(binio::Writer& file, const std::string& name, const binio::Writer& payload) {
  file.str(name);
  file.u64(payload.bytes().size());
  file.raw(payload.bytes());
  file.u32(binio::crc32_of(payload.bytes().data(), payload.bytes().size()));
}

binio::Reader read_block(binio::Reader& file, const std::string& expected) {
  const std::string name = file.str();
  if (name != expected) throw FormatError("dataset: expected block '" + expected + "', found '" + name + "'");
  const std::uint64_t len = file.u64();
  if (len > file.remaining()) throw TruncatedError("dataset: block '" + name + "' is truncated");
  const std::uint8_t* data = file.take(len);
  const std::uint32_t crc = file.u32();
  if (crc != binio::crc32_of(data, len))
    throw ChecksumError(name, "dataset: checksum mismatch in block '" + name + "'");
  return binio::Reader(data, len, "dataset block '" + name + "'");
}

}  // namespace

void DatasetSpec::validate() const {
  if (classes < 2) throw ConfigError("dataset: need at least 2 classes");
  if (modalities() < 2) throw ConfigError("dataset: need at least 2 modalities");
  if (signal.size() != dims.size()) throw ConfigError("dataset: one signal strength per modality required");
  for (Index d : dims)
    if (d < 1) throw ConfigError("dataset: modality dimensions must be positive");
  for (double s : signal)
    if (!(s >= 0.0)) throw ConfigError("dataset: signal strengths must be non-negative");
  if (!(stddev > 0.0)) throw ConfigError("dataset: within-class stddev must be positive");
  if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("dataset: split sizes must be positive");
}

std::string to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "salt-pepper"; }
std::string to_string(NoiseScope s) { return s == NoiseScope::test_only ? "test" : "train-test"; }

ColumnStats ColumnStats::of(const Matrix& x) {
  ColumnStats s;
  const RowVector mean = x.colwise().mean();
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  s.stddev = ((x.rowwise() - mean).array().square().colwise().sum() / denom).sqrt().matrix();
  s.min = x.colwise().minCoeff();
  s.max = x.colwise().maxCoeff();
  return s;
}

const Batch& MultimodalDataset::split(SplitKind k) const {
  switch (k) {
    case SplitKind::train: return train;
    case SplitKind::val: return val;
    case SplitKind::test: return test;
  }
  return test;
}

Batch& MultimodalDataset::split(SplitKind k) {
  return const_cast<Batch&>(static_cast<const MultimodalDataset&>(*this).split(k));
}

MultimodalDataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0);
  MultimodalDataset data;
  data.spec = spec;
  std::vector<Matrix> means;
  for (int m = 0; m < spec.modalities(); ++m) {
    const auto mi = static_cast<std::size_t>(m);
    Matrix mean(spec.classes, spec.dims[mi]);
    for (Index i = 0; i < mean.size(); ++i) mean.data()[i] = spec.signal[mi] * rng.normal();
    means.push_back(std::move(mean));
  }
  data.train = draw_split(spec, means, spec.n_train, rng);
  data.val = draw_split(spec, means, spec.n_val, rng);
  data.test = draw_split(spec, means, spec.n_test, rng);
  for (const auto& x : data.train.features) data.train_stats.push_back(ColumnStats::of(x));
  return data;
}

Matrix inject_gaussian_noise(const Matrix& x, double epsilon, const RowVector& col_stddev, Rng& rng) {
  if (!(epsilon >= 0.0)) throw ArgumentError("gaussian noise: epsilon must be non-negative");
  if (col_stddev.size() != x.cols()) throw DimensionError("gaussian noise: column stats do not match input");
  if (epsilon == 0.0) return x;
  Matrix out = x;
  const double scale = epsilon / 10.0;
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) += scale * col_stddev[j] * rng.normal();
  return out;
}

Matrix inject_salt_pepper(const Matrix& x, double epsilon, const RowVector& col_min, const RowVector& col_max,
                          Rng& rng) {
  if (!(epsilon >= 0.0)) throw ArgumentError("salt-pepper noise: epsilon must be non-negative");
  if (col_min.size() != x.cols() || col_max.size() != x.cols())
    throw DimensionError("salt-pepper noise: column stats do not match input");
  if (epsilon == 0.0) return x;
  const double p = std::min(epsilon / 100.0, 1.0);
  Matrix out = x;
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) {
      const double u = rng.uniform();
      if (u < 0.5 * p)
        out(i, j) = col_min[j];
      else if (u < p)
        out(i, j) = col_max[j];
    }
  return out;
}

std::vector<SplitKind> noisy_splits(NoiseScope scope) {
  if (scope == NoiseScope::test_only) return {SplitKind::test};
  return {SplitKind::train, SplitKind::val, SplitKind::test};
}

MultimodalDataset apply_noise(const MultimodalDataset& data, const NoiseSpec& noise) {
  if (!(noise.epsilon >= 0.0)) throw ArgumentError("noise: epsilon must be non-negative");
  for (int m : noise.modalities)
    if (m < 0 || m >= data.modalities())
      throw ArgumentError("noise: target modality " + std::to_string(m) + " does not exist");
  MultimodalDataset out = data;
  for (SplitKind split : noisy_splits(noise.scope)) {
    for (int m : noise.modalities) {
      const auto mi = static_cast<std::size_t>(m);
      Rng rng(noise.seed, 16 * static_cast<std::uint64_t>(split) + mi + 1);
      Matrix& x = out.split(split).features[mi];
      const ColumnStats& stats = data.train_stats[mi];
      x = noise.kind == NoiseKind::gaussian ? inject_gaussian_noise(x, noise.epsilon, stats.stddev, rng)
                                            : inject_salt_pepper(x, noise.epsilon, stats.min, stats.max, rng);
    }
  }
  out.noise.push_back(noise);
  return out;
}

std::vector<std::uint8_t> encode_dataset(const MultimodalDataset& data) {
  binio::Writer file;
  for (char c : kMagic) file.u8(static_cast<std::uint8_t>(c));
  file.u32(kVersion);

  const DatasetSpec& s = data.spec;
  binio::Writer spec;
  spec.u32(static_cast<std::uint32_t>(s.classes));
  spec.u32(static_cast<std::uint32_t>(s.modalities()));
  for (Index d : s.dims) spec.u64(static_cast<std::uint64_t>(d));
  for (double v : s.signal) spec.f64(v);
  spec.f64(s.stddev);
  spec.u64(static_cast<std::uint64_t>(s.n_train));
  spec.u64(static_cast<std::uint64_t>(s.n_val));
  spec.u64(static_cast<std::uint64_t>(s.n_test));
  spec.u64(s.seed);
  write_block(file, "spec", spec);

  binio::Writer stats;
  for (const auto& st : data.train_stats) {
    stats.matrix(st.stddev);
    stats.matrix(st.min);
    stats.matrix(st.max);
  }
  write_block(file, "stats", stats);

  binio::Writer noise;
  noise.u32(static_cast<std::uint32_t>(data.noise.size()));
  for (const auto& n : data.noise) {
    noise.u8(static_cast<std::uint8_t>(n.kind));
    noise.f64(n.epsilon);
    noise.u8(static_cast<std::uint8_t>(n.scope));
    noise.u32(static_cast<std::uint32_t>(n.modalities.size()));
    for (int m : n.modalities) noise.u32(static_cast<std::uint32_t>(m));
    noise.u64(n.seed);
  }
  write_block(file, "noise", noise);

  const std::pair<const char*, const Batch*> splits[] = {{"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
  for (const auto& [name, batch] : splits) {
    binio::Writer w;
    write_batch(w, *batch);
    write_block(file, name, w);
  }
  return file.bytes();
}

MultimodalDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  binio::Reader file(bytes.data(), bytes.size(), "dataset header");
  if (bytes.size() < 4) throw TruncatedError("dataset: file shorter than its magic");
  for (char c : kMagic)
    if (file.u8() != static_cast<std::uint8_t>(c)) throw FormatError("dataset: bad magic (not a CALD file)");
  if (const std::uint32_t v = file.u32(); v != kVersion)
    throw VersionError("dataset: unsupported format version " + std::to_string(v) + " (expected " +
                       std::to_string(kVersion) + ")");

  MultimodalDataset data;
  {
    auto r = read_block(file, "spec");
    DatasetSpec& s = data.spec;
    s.classes = static_cast<int>(r.u32());
    const std::uint32_t m = r.u32();
    if (m > 1024) throw FormatError("dataset: implausible modality count");
    s.dims.resize(m);
    s.signal.resize(m);
    for (auto& d : s.dims) d = static_cast<Index>(r.u64());
    for (auto& v : s.signal) v = r.f64();
    s.stddev = r.f64();
    s.n_train = static_cast<Index>(r.u64());
    s.n_val = static_cast<Index>(r.u64());
    s.n_test = static_cast<Index>(r.u64());
    s.seed = r.u64();
  }
  {
    auto r = read_block(file, "stats");
    for (int m = 0; m < data.spec.modalities(); ++m) {
      ColumnStats st;
      st.stddev = r.matrix();
      st.min = r.matrix();
      st.max = r.matrix();
      data.train_stats.push_back(std::move(st));
    }
  }
  {
    auto r = read_block(file, "noise");
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      NoiseSpec n;
      n.kind = static_cast<NoiseKind>(r.u8());
      n.epsilon = r.f64();
      n.scope = static_cast<NoiseScope>(r.u8());
      const std::uint32_t k = r.u32();
      for (std::uint32_t j = 0; j < k; ++j) n.modalities.push_back(static_cast<int>(r.u32()));
      n.seed = r.u64();
      data.noise.push_back(std::move(n));
    }
  }
  for (auto [name, kind] : {std::pair{"train", SplitKind::train}, {"val", SplitKind::val}, {"test", SplitKind::test}}) {
    auto r = read_block(file, name);
    data.split(kind) = read_batch(r, data.spec, name);
  }
  if (!file.done()) throw FormatError("dataset: trailing bytes after the last block");
  return data;
}

void save_dataset(const MultimodalDataset& data, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(data);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("dataset: cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("dataset: write failed for " + path.string());
}

MultimodalDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace cal
