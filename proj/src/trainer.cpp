#include "cal/trainer.hpp"

#include "cal/aib.hpp"
#include "cal/errors.hpp"
#include "cal/losses.hpp"
#include "cal/modulation.hpp"
#include "cal/objective.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

namespace cal {

namespace {

double accuracy(const Matrix& logits, const Labels& labels) {
  if (labels.empty()) return 0.0;
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Batch gather(const Batch& b, const std::vector<Index>& rows) {
  Batch out;
  out.labels.reserve(rows.size());
  for (Index r : rows) out.labels.push_back(b.labels[static_cast<std::size_t>(r)]);
  for (const auto& x : b.features) out.features.push_back(gather_rows(x, rows));
  return out;
}

void shuffle(std::vector<Index>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

void append(std::string& out, double v) {
  out += ",";
  out += format_double(v);
}

}  // namespace

EvalMetrics evaluate(const Model& model, const Batch& split, const std::vector<bool>& masked) {
  const Inference inf = model.infer(split.features, masked);
  EvalMetrics e;
  e.fusion_acc = accuracy(inf.fusion_logits, split.labels);
  for (const auto& logits : inf.unimodal_logits) e.unimodal_acc.push_back(accuracy(logits, split.labels));
  return e;
}

std::string metrics_csv_header(int M) {
  std::string h = "epoch,fusion_acc";
  auto per = [&](const std::string& prefix) {
    for (int m = 0; m < M; ++m) h += "," + prefix + "_m" + std::to_string(m);
  };
  per("acc");
  h += ",loss_total,loss_ce_fusion,loss_ce_uni,loss_aib";
  for (const char* p : {"W", "D", "I", "phi", "R", "beta", "a"}) per(p);
  h += ",wall_ms";
  return h;
}

std::string metrics_csv_row(const EpochMetrics& r) {
  std::string out = std::to_string(r.epoch);
  append(out, r.fusion_acc);
  for (double v : r.unimodal_acc) append(out, v);
  append(out, r.loss_total);
  append(out, r.loss_ce_fusion);
  append(out, r.loss_ce_uni);
  append(out, r.loss_aib);
  for (const auto* col : {&r.W, &r.D, &r.I, &r.phi, &r.R, &r.beta, &r.a})
    for (double v : *col) append(out, v);
  append(out, r.wall_ms);
  return out;
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()); }

MultimodalDataset prepare_dataset(const TrainConfig& cfg) {
  cfg.validate();
  MultimodalDataset data;
  if (!cfg.dataset.empty()) {
    data = load_dataset(cfg.dataset);
  } else {
    DatasetSpec spec = cfg.data;
    spec.seed = cfg.resolved_data_seed();
    data = generate_dataset(spec);
  }
  if (auto noise = cfg.noise_spec()) data = apply_noise(data, *noise);
  return data;
}

TrainResult train(const TrainConfig& cfg, const MultimodalDataset& data, const EpochObserver& observer) {
  cfg.validate();
  const int M = data.modalities();
  const auto loss_weights = cfg.resolved_loss_weights(M);

  Rng init_rng(cfg.seed, 1);
  Rng sample_rng(cfg.seed, 2);
  Rng shuffle_rng(cfg.seed, 3);

  TrainResult result;
  result.model = Model(cfg.model_config(data.spec), init_rng);
  {
    const auto bytes = encode_dataset(data);
    result.dataset_hash = fnv1a(bytes.data(), bytes.size());
  }
  Model& model = result.model;

  PerformanceHistory history(M, cfg.lag + 1);
  const ContributionConfig ccfg = cfg.contribution_config();
  const double h_y = label_entropy(data.train.labels, data.spec.classes);

  std::vector<Index> order(static_cast<std::size_t>(data.train.size()));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();

    ContributionReport report = compute_report(model, data.val, history, epoch, ccfg, &data.train);
    result.degenerate_mi_warnings += report.degenerate_mi;
    result.undersampled_mi_warnings += report.undersampled_mi;
    const Vector weights = report.weights();
    const ModulationVector mod = modulation_vector(weights, cfg.temperature, cfg.strategy, cfg.eta);

    LossSetup setup;
    setup.beta = beta_factors(weights);
    setup.weights = weights;
    setup.variant = cfg.reference ? AibVariant::off : cfg.aib_variant;
    setup.lambda = cfg.reference ? 0.0 : cfg.lambda;
    setup.loss_weights = loss_weights;
    setup.label_entropy = h_y;
    setup.beta_on_compression = cfg.beta_on_compression;
    setup.mi_zx_per_dim = cfg.mi_zx_per_dim;

    shuffle(order, shuffle_rng);
    double sum_total = 0, sum_ce_f = 0, sum_ce_u = 0, sum_aib = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const Batch batch = gather(data.train, std::vector<Index>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                order.begin() + static_cast<std::ptrdiff_t>(end)));
      const ForwardPass pass = model.forward_train(batch.features, sample_rng);
      OutputGrads grads;
      const LossBreakdown loss = total_loss(pass, batch.labels, setup, &grads);
      model.zero_grad();
      model.backward(pass, grads);
      if (!cfg.reference) model.set_gradients(modulate_gradients(model.gradients(), mod, cfg.modulate_heads));
      model.sgd_step(cfg.lr, cfg.momentum, cfg.weight_decay);

      const auto n = static_cast<double>(end - begin);
      sum_total += n * loss.total;
      sum_ce_f += n * loss.ce_fusion;
      sum_ce_u += n * loss.ce_unimodal;
      sum_aib += n * loss.aib;
    }

    const EvalMetrics eval = evaluate(model, data.test);
    const double n_train = static_cast<double>(order.size());
    EpochMetrics row;
    row.epoch = epoch;
    row.fusion_acc = eval.fusion_acc;
    row.unimodal_acc = eval.unimodal_acc;
    row.loss_total = sum_total / n_train;
    row.loss_ce_fusion = sum_ce_f / n_train;
    row.loss_ce_uni = sum_ce_u / n_train;
    row.loss_aib = sum_aib / n_train;
    for (int m = 0; m < M; ++m) {
      const auto& c = report.modality[static_cast<std::size_t>(m)];
      row.W.push_back(c.weight);
      row.D.push_back(c.confidence);
      row.I.push_back(c.info_nats);
      row.phi.push_back(c.marginal);
      row.R.push_back(c.rel_improve);
      row.beta.push_back(setup.beta[m]);
      row.a.push_back(mod.coefficients[m]);
    }
    if (cfg.record_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(row);
    result.reports.push_back(std::move(report));
    if (observer) observer(result.epochs.back(), model);
  }
  return result;
}

void write_run_directory(const std::filesystem::path& dir, const TrainConfig& cfg, const TrainResult& result) {
  std::filesystem::create_directories(dir);
  const std::string config_text = to_config_text(cfg);
  {
    std::ofstream os(dir / "config.snapshot", std::ios::trunc);
    os << config_text;
  }
  const int M = result.epochs.empty() ? result.model.modalities()
                                      : static_cast<int>(result.epochs.front().unimodal_acc.size());
  {
    std::ofstream os(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    os << metrics_csv_header(M) << "\n";
    for (const auto& row : result.epochs) os << metrics_csv_row(row) << "\n";
  }
  result.model.save(dir / "model.bin");

  nlohmann::ordered_json j;
  if (!result.epochs.empty()) {
    const auto& last = result.final();
    j["final_epoch"] = last.epoch;
    j["final_fusion_acc"] = last.fusion_acc;
    j["final_unimodal_acc"] = last.unimodal_acc;
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.epochs.size(); ++i)
      if (result.epochs[i].fusion_acc > result.epochs[best].fusion_acc) best = i;
    j["best_epoch"] = result.epochs[best].epoch;
    j["best_fusion_acc"] = result.epochs[best].fusion_acc;
  }
  j["degenerate_mi_warnings"] = result.degenerate_mi_warnings;
  j["undersampled_mi_warnings"] = result.undersampled_mi_warnings;
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(result.dataset_hash));
  j["provenance"]["dataset_fnv1a"] = hex;
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(config_text)));
  j["provenance"]["config_fnv1a"] = hex;
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(result.model.parameter_checksum()));
  j["provenance"]["model_fnv1a"] = hex;
  std::ofstream os(dir / "summary.json", std::ios::trunc);
  os << j.dump(2) << "\n";
}

TrainResult run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  const MultimodalDataset data = prepare_dataset(cfg);
  TrainResult result = train(cfg, data);
  write_run_directory(out_dir, cfg, result);
  return result;
}

}  // namespace cal
