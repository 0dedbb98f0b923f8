#include "cal/contribution.hpp"
#include "cal/errors.hpp"
#include "cal/losses.hpp"
#include "cal/synthdata.hpp"
#include "cal/trainer.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <vector>

using namespace cal;
using cal::testing::random_labels;
using cal::testing::random_matrix;

namespace {

Model tiny_model(std::uint64_t seed, std::vector<Index> dims = {3, 3}) {
  ModelConfig cfg;
  cfg.input_dims = std::move(dims);
  cfg.encoder_hidden = {8};
  cfg.latent_dim = 4;
  cfg.fusion_hidden = 6;
  Rng rng(seed);
  return Model(cfg, rng);
}

Batch random_batch(Index n, const std::vector<Index>& dims, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  for (Index d : dims) b.features.push_back(random_matrix(n, d, rng));
  b.labels = random_labels(n, 4, rng);
  return b;
}

PerformanceHistory history_with(std::initializer_list<std::pair<int, double>> entries) {
  PerformanceHistory h(1, 8);
  for (auto [epoch, value] : entries) {
    const double v[] = {value};
    h.record(epoch, v);
  }
  return h;
}

}  // namespace

TEST_CASE("unimodal confidence") {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(unimodal_confidence(ones) == 1.0);
  const std::vector<double> mixed{0.5, 0.7, 0.9};
  CHECK(unimodal_confidence(mixed) == doctest::Approx(0.7).epsilon(1e-12));
  const std::vector<double> uniform(10, 0.25);
  CHECK(unimodal_confidence(uniform) == doctest::Approx(0.25));
  CHECK_THROWS_AS(unimodal_confidence(std::vector<double>{}), ArgumentError);
}

TEST_CASE("marginal contribution") {
  const std::vector<double> a{-0.3, -0.1};
  CHECK(marginal_contribution(a, a) == 0.0);
  const std::vector<double> full{-0.2, -0.2}, worse{-0.5, -0.5}, better{-0.1, -0.1};
  CHECK(marginal_contribution(full, worse) == doctest::Approx(0.3));
  CHECK(marginal_contribution(full, better) == doctest::Approx(-0.1));
  CHECK_THROWS_AS(marginal_contribution(full, std::vector<double>{-0.1}), ArgumentError);
  // Both sides below ln(1e-12) floor to the same value.
  const std::vector<double> tiny_a{-100.0}, tiny_b{-200.0};
  CHECK(marginal_contribution(tiny_a, tiny_b) == 0.0);
  const std::vector<double> inf{-INFINITY};
  const std::vector<double> zero{0.0};
  CHECK(marginal_contribution(zero, inf) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("performance history and relative improvement") {
  SUBCASE("direct evaluation") {
    const auto h = history_with({{0, 0.5}, {5, 0.6}});
    CHECK(relative_improvement(h, 0, 5, 5) == doctest::Approx(0.2));
  }
  SUBCASE("no change clamps to the floor") {
    const auto h = history_with({{0, 0.5}, {5, 0.5}});
    CHECK(relative_improvement(h, 0, 5, 5) == kMinRelImprove);
  }
  SUBCASE("warm-up") {
    const auto h = history_with({{0, 0.1}, {2, 0.9}});
    CHECK(relative_improvement(h, 0, 2, 5) == 1.0);
  }
  SUBCASE("large gains clamp to the ceiling, zero baseline uses eps") {
    const auto h = history_with({{0, 0.01}, {1, 0.0}, {5, 0.5}, {6, 0.3}});
    CHECK(relative_improvement(h, 0, 5, 5) == kMaxRelImprove);
    CHECK(relative_improvement(h, 0, 6, 5) == kMaxRelImprove);
  }
  SUBCASE("ring buffer evicts the oldest epochs") {
    PerformanceHistory h(2, 6);
    for (int e = 0; e <= 10; ++e) {
      const double v[] = {0.1 + 0.05 * e, 0.3};
      h.record(e, v);
    }
    CHECK_FALSE(h.at(0, 4).has_value());
    CHECK(h.at(0, 5).value() == doctest::Approx(0.35));
    CHECK(h.latest_epoch().value() == 10);
    CHECK(relative_improvement(h, 0, 10, 5) == doctest::Approx((0.6 - 0.35) / 0.35));
  }
  SUBCASE("invalid records") {
    PerformanceHistory h(1, 6);
    const double ok[] = {0.5}, bad[] = {1.5};
    h.record(3, ok);
    CHECK_THROWS_AS(h.record(3, ok), ArgumentError);
    CHECK_THROWS_AS(h.record(4, bad), ArgumentError);
    CHECK_THROWS_AS(relative_improvement(h, 0, 3, 0), ArgumentError);
  }
}

TEST_CASE("confidence and weight") {
  CHECK(confidence_score(0.0, 0.7) == 0.0);
  CHECK(confidence_score(0.3, 0.2) == doctest::Approx(0.06));
  CHECK(confidence_score(-0.1, 0.5) == 0.0);
  CHECK(modality_weight(0.06, 0.5) == doctest::Approx(0.03));
  CHECK(modality_weight(0.06, 0.0) == kMinWeight);
  CHECK(modality_weight(1.0, 1.0) == 1.0);

  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const double d = rng.uniform(0.0, 2.0), i = rng.uniform(0.0, 5.0), step = rng.uniform(0.0, 1.0);
    CHECK(modality_weight(d + step, i) >= modality_weight(d, i));
    CHECK(modality_weight(d, i + step) >= modality_weight(d, i));
    CHECK(modality_weight(d, i) >= kMinWeight);
  }
}

TEST_CASE("symmetrised KL") {
  Matrix p(1, 2), q(1, 2);
  p << 0.5, 0.5;
  q << 0.9, 0.1;
  const double expected = (0.5 - 0.9) * std::log(0.5 / 0.9) + (0.5 - 0.1) * std::log(0.5 / 0.1);
  CHECK(mean_symmetric_kl(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(mean_symmetric_kl(p, p) == 0.0);
  CHECK_THROWS_AS(mean_symmetric_kl(p, Matrix::Zero(2, 2)), DimensionError);
}

TEST_CASE("compute_report") {
  const std::vector<Index> dims{3, 3};
  Model model = tiny_model(1);
  const Batch val = random_batch(80, dims, 2);

  SUBCASE("read-only, deterministic and well-formed") {
    const auto before = model.parameter_checksum();
    PerformanceHistory h1(2, 6), h2(2, 6);
    const auto r1 = compute_report(model, val, h1, 0, {});
    const auto r2 = compute_report(model, val, h2, 0, {});
    CHECK(model.parameter_checksum() == before);
    REQUIRE(r1.modality.size() == 2);
    for (std::size_t m = 0; m < 2; ++m) {
      const auto& a = r1.modality[m];
      const auto& b = r2.modality[m];
      CHECK(a.weight == b.weight);
      CHECK(a.info_nats == b.info_nats);
      CHECK(a.marginal == b.marginal);
      CHECK(a.weight >= kMinWeight);
      CHECK(a.info_nats >= 0.0);
      CHECK((a.unimodal_conf >= 0.0 && a.unimodal_conf <= 1.0));
      CHECK(std::isfinite(a.marginal));
      CHECK(a.rel_improve == 1.0);
      CHECK(a.confidence == confidence_score(a.marginal, a.rel_improve));
    }
    CHECK(h1.latest_epoch().value() == 0);
  }
  SUBCASE("all-zero modality has no marginal contribution") {
    Batch zeroed = val;
    zeroed.features[1].setZero();
    PerformanceHistory h(2, 6);
    const auto r = compute_report(model, zeroed, h, 0, {});
    CHECK(r.modality[1].marginal == 0.0);
    CHECK(r.modality[1].confidence == 0.0);
  }
  SUBCASE("contribution modes") {
    const auto report_for = [&](ContributionMode mode) {
      PerformanceHistory h(2, 6);
      ContributionConfig cfg;
      cfg.mode = mode;
      return compute_report(model, val, h, 0, cfg);
    };
    const auto dxi = report_for(ContributionMode::dxi);
    const auto d_only = report_for(ContributionMode::d_only);
    const auto i_only = report_for(ContributionMode::i_only);
    const auto d_plus_i = report_for(ContributionMode::d_plus_i);
    const auto kl = report_for(ContributionMode::kl);
    const Inference full = model.infer(val.features);
    const Matrix fusion = softmax_rows(full.fusion_logits);
    for (std::size_t m = 0; m < 2; ++m) {
      const auto& c = dxi.modality[m];
      CHECK(c.weight == modality_weight(c.confidence, c.info_nats));
      CHECK(d_only.modality[m].weight == std::max(c.confidence, kMinWeight));
      CHECK(i_only.modality[m].weight == std::max(c.info_nats, kMinWeight));
      CHECK(d_plus_i.modality[m].weight == std::max(c.confidence + c.info_nats, kMinWeight));
      const Matrix uni = softmax_rows(full.unimodal_logits[m]);
      double sym = 0.0;
      for (Index i = 0; i < uni.rows(); ++i)
        for (Index k = 0; k < uni.cols(); ++k)
          sym += (uni(i, k) - fusion(i, k)) * (std::log(uni(i, k)) - std::log(fusion(i, k)));
      CHECK(kl.modality[m].weight == doctest::Approx(std::max(sym / uni.rows(), kMinWeight)).epsilon(1e-10));
    }
  }
  SUBCASE("retrain ablation needs the training batch and leaves the model alone") {
    PerformanceHistory h(2, 6);
    ContributionConfig cfg;
    cfg.ablation = AblationMode::retrain;
    cfg.retrain_steps = 5;
    CHECK_THROWS_AS(compute_report(model, val, h, 0, cfg), ArgumentError);
    const Batch train = random_batch(60, dims, 3);
    const auto before = model.parameter_checksum();
    const auto r = compute_report(model, val, h, 0, cfg, &train);
    CHECK(model.parameter_checksum() == before);
    for (const auto& c : r.modality) CHECK(std::isfinite(c.marginal));
  }
  SUBCASE("shape errors") {
    PerformanceHistory h(2, 6);
    Batch one = val;
    one.features.pop_back();
    CHECK_THROWS_AS(compute_report(model, one, h, 0, {}), DimensionError);
    Batch empty;
    empty.features.assign(2, Matrix(0, 3));
    CHECK_THROWS_AS(compute_report(model, empty, h, 0, {}), ArgumentError);
  }
}

TEST_CASE("strong modality outweighs a pure-noise modality") {
  int wins = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    TrainConfig cfg;
    cfg.data.dims = {4, 4};
    cfg.data.signal = {2.0, 0.0};
    cfg.data.n_train = 400;
    cfg.data.n_val = 200;
    cfg.data.n_test = 100;
    cfg.epochs = 20;
    cfg.seed = 500 + trial;
    const auto data = prepare_dataset(cfg);
    const auto result = train(cfg, data);
    PerformanceHistory h(2, 6);
    const auto report = compute_report(result.model, data.val, h, 0, cfg.contribution_config());
    wins += report.modality[0].weight > report.modality[1].weight;
  }
  CHECK(wins >= 19);
}
