#include "cal/sweep.hpp"

#include "cal/errors.hpp"
#include "cal/trainer.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace cal {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::string noise_name(const TrainConfig& c) { return c.noise ? to_string(*c.noise) : "none"; }

}  // namespace

std::vector<TrainConfig> SweepGrid::points() const {
  std::vector<TrainConfig> out;
  for (auto s : strategies)
    for (auto v : aib_variants)
      for (auto c : contribution_modes)
        for (const auto& n : noises) {
          TrainConfig cfg = base;
          cfg.strategy = s;
          cfg.aib_variant = v;
          cfg.contribution_mode = c;
          cfg.noise = n;
          out.push_back(cfg);
        }
  return out;
}

SweepGrid parse_sweep_grid(const KeyValues& kv) {
  SweepGrid grid;
  KeyValues rest;
  for (const auto& [key, value] : kv) {
    if (key == "strategy") {
      for (auto& s : split_list(value)) grid.strategies.push_back(parse_strategy(s));
    } else if (key == "aib_variant") {
      for (auto& s : split_list(value)) grid.aib_variants.push_back(parse_aib_variant(s));
    } else if (key == "contribution_mode") {
      for (auto& s : split_list(value)) grid.contribution_modes.push_back(parse_contribution_mode(s));
    } else if (key == "noise") {
      for (auto& s : split_list(value)) grid.noises.push_back(parse_noise(s));
    } else if (key == "seeds") {
      for (auto& s : split_list(value)) grid.seeds.push_back(std::stoull(s));
    } else if (key == "threads") {
      grid.threads = std::stoi(value);
    } else {
      rest[key] = value;
    }
  }
  apply_key_values(grid.base, rest);
  // Axes left out of the file take the base value.
  if (!kv.contains("strategy")) grid.strategies = {grid.base.strategy};
  if (!kv.contains("aib_variant")) grid.aib_variants = {grid.base.aib_variant};
  if (!kv.contains("contribution_mode")) grid.contribution_modes = {grid.base.contribution_mode};
  if (!kv.contains("noise")) grid.noises = {grid.base.noise};
  if (!kv.contains("seeds")) grid.seeds = {grid.base.seed};
  return grid;
}

PointOutcome run_point(const TrainConfig& cfg) {
  TrainConfig clean_cfg = cfg;
  clean_cfg.noise.reset();
  const MultimodalDataset clean = prepare_dataset(clean_cfg);
  const auto spec = cfg.noise_spec();
  const MultimodalDataset data = spec ? apply_noise(clean, *spec) : clean;
  const TrainResult result = train(cfg, data);
  PointOutcome out;
  out.fusion_acc = result.final().fusion_acc;
  out.unimodal_acc = result.final().unimodal_acc;
  out.clean_fusion_acc = evaluate(result.model, clean.test).fusion_acc;
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

SweepSummary run_sweep(const SweepGrid& grid, const PointRunner& runner) {
  if (grid.strategies.empty() || grid.aib_variants.empty() || grid.contribution_modes.empty() ||
      grid.noises.empty() || grid.seeds.empty())
    throw ConfigError("sweep: grid is empty");
  const auto points = grid.points();

  SweepSummary summary;
  for (std::size_t p = 0; p < points.size(); ++p)
    for (auto seed : grid.seeds) {
      SweepRow row;
      row.point = p;
      row.config = points[p];
      row.config.seed = seed;
      row.config.validate();  // fail before launching anything
      summary.detail.push_back(std::move(row));
    }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < summary.detail.size(); i = next++) {
      auto& row = summary.detail[i];
      try {
        row.outcome = runner(row.config);
        row.ok = true;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  };
  unsigned threads = grid.threads > 0 ? static_cast<unsigned>(grid.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(summary.detail.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t p = 0; p < points.size(); ++p) {
    SweepAggregate agg;
    agg.point = p;
    agg.config = points[p];
    std::vector<double> fusion, clean;
    std::vector<std::vector<double>> uni;
    for (const auto& row : summary.detail) {
      if (row.point != p || !row.ok) continue;
      ++agg.runs_ok;
      fusion.push_back(row.outcome.fusion_acc);
      clean.push_back(row.outcome.clean_fusion_acc);
      if (uni.size() < row.outcome.unimodal_acc.size()) uni.resize(row.outcome.unimodal_acc.size());
      for (std::size_t m = 0; m < row.outcome.unimodal_acc.size(); ++m) uni[m].push_back(row.outcome.unimodal_acc[m]);
    }
    std::tie(agg.fusion_mean, agg.fusion_std) = mean_std(fusion);
    std::tie(agg.clean_mean, agg.clean_std) = mean_std(clean);
    for (const auto& u : uni) {
      const auto [m, s] = mean_std(u);
      agg.unimodal_mean.push_back(m);
      agg.unimodal_std.push_back(s);
    }
    summary.aggregate.push_back(std::move(agg));
  }
  return summary;
}

std::string sweep_csv(const SweepSummary& summary) {
  std::size_t M = 0;
  for (const auto& r : summary.detail) M = std::max(M, r.outcome.unimodal_acc.size());
  std::string out = "row_type,point,strategy,aib_variant,contribution_mode,noise,epsilon,noise_scope,seed,status,"
                    "fusion_acc,fusion_acc_std,clean_fusion_acc,clean_fusion_acc_std";
  for (std::size_t m = 0; m < M; ++m)
    out += ",acc_m" + std::to_string(m) + ",acc_m" + std::to_string(m) + "_std";
  out += "\n";

  auto prefix = [](const char* type, std::size_t point, const TrainConfig& c) {
    return std::string(type) + "," + std::to_string(point) + "," + to_string(c.strategy) + "," +
           to_string(c.aib_variant) + "," + to_string(c.contribution_mode) + "," + noise_name(c) + "," +
           format_double(c.epsilon) + "," + to_string(c.noise_scope);
  };
  for (const auto& r : summary.detail) {
    std::string status = r.ok ? "ok" : "error: " + r.error;
    for (char& ch : status)
      if (ch == ',' || ch == '\n') ch = ';';
    out += prefix("detail", r.point, r.config) + "," + std::to_string(r.config.seed) + "," + status;
    if (r.ok) {
      out += "," + format_double(r.outcome.fusion_acc) + ",," + format_double(r.outcome.clean_fusion_acc) + ",";
      for (std::size_t m = 0; m < M; ++m)
        out += "," + (m < r.outcome.unimodal_acc.size() ? format_double(r.outcome.unimodal_acc[m]) : "") + ",";
    } else {
      out += ",,,,";
      for (std::size_t m = 0; m < M; ++m) out += ",,";
    }
    out += "\n";
  }
  for (const auto& a : summary.aggregate) {
    out += prefix("aggregate", a.point, a.config) + ",n=" + std::to_string(a.runs_ok) + "," +
           (a.runs_ok > 0 ? "ok" : "no successful runs");
    out += "," + format_double(a.fusion_mean) + "," + format_double(a.fusion_std) + "," +
           format_double(a.clean_mean) + "," + format_double(a.clean_std);
    for (std::size_t m = 0; m < M; ++m) {
      if (m < a.unimodal_mean.size())
        out += "," + format_double(a.unimodal_mean[m]) + "," + format_double(a.unimodal_std[m]);
      else
        out += ",,";
    }
    out += "\n";
  }
  return out;
}

}  // namespace cal
