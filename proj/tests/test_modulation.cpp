#include "cal/contribution.hpp"
#include "cal/errors.hpp"
#include "cal/modulation.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>

using namespace cal;
using cal::testing::random_matrix;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

GradientBundle random_bundle(int modalities, Rng& rng) {
  GradientBundle b;
  for (int m = 0; m < modalities; ++m)
    b.modality.push_back({{random_matrix(3, 2, rng), random_matrix(1, 2, rng)}, {random_matrix(2, 4, rng)}});
  b.shared = {random_matrix(4, 4, rng), random_matrix(1, 4, rng)};
  return b;
}

double max_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

TEST_CASE("modulation vector") {
  SUBCASE("equal weights are uniform for any temperature") {
    for (double t : {0.01, 1.0, 100.0}) {
      const auto mod = modulation_vector(vec({0.3, 0.3, 0.3}), t, Strategy::strong);
      for (Index m = 0; m < 3; ++m) CHECK(mod.coefficients[m] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }
  SUBCASE("direct softmax") {
    const auto strong = modulation_vector(vec({2, 1}), 1.0, Strategy::strong);
    CHECK(strong.coefficients[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(strong.coefficients[1] == doctest::Approx(0.2689).epsilon(1e-4));
    const auto weak = modulation_vector(vec({2, 1}), 1.0, Strategy::weak);
    CHECK(weak.coefficients[0] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(weak.coefficients[1] == doctest::Approx(0.7311).epsilon(1e-4));
    const auto ogm = modulation_vector(vec({2, 1}), 1.0, Strategy::ogm);
    CHECK(ogm.coefficients == strong.coefficients);
    const auto null = modulation_vector(vec({2, 1}), 1.0, Strategy::null);
    CHECK(null.coefficients[0] == 0.5);
  }
  SUBCASE("temperature limits") {
    const auto cold = modulation_vector(vec({2, 1}), 0.01, Strategy::strong);
    CHECK(cold.coefficients[0] > 1.0 - 1e-12);
    CHECK(cold.coefficients[1] < 1e-12);
    const auto hot = modulation_vector(vec({2, 1}), 1e6, Strategy::strong);
    CHECK(std::abs(hot.coefficients[0] - 0.5) < 1e-6);
  }
  SUBCASE("invalid temperature") {
    CHECK_THROWS_AS(modulation_vector(vec({1, 2}), 0.0, Strategy::strong), ArgumentError);
    CHECK_THROWS_AS(modulation_vector(vec({1, 2}), -1.0, Strategy::weak), ArgumentError);
  }
  SUBCASE("invariants on random weights") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const Index M = 2 + static_cast<Index>(rng.below(4));
      Vector w(M);
      for (Index m = 0; m < M; ++m) w[m] = kMinWeight + rng.uniform(0.0, 3.0);
      const double t = std::exp(rng.uniform(-3.0, 3.0));
      for (auto s : {Strategy::strong, Strategy::null, Strategy::weak, Strategy::ogm}) {
        const auto mod = modulation_vector(w, t, s, 1.0);
        CHECK(std::abs(mod.coefficients.sum() - 1.0) < 1e-12);
        CHECK((mod.coefficients.array() >= 0.0).all());
        const Vector f = mod.scale_factors();
        if (s == Strategy::ogm)
          CHECK(((f.array() >= 0.0) && (f.array() <= 1.0)).all());
        else
          CHECK((f.array() >= 1.0).all());
      }
      const auto strong = modulation_vector(w, t, Strategy::strong);
      Index wa = 0, aa = 0;
      w.maxCoeff(&wa);
      strong.coefficients.maxCoeff(&aa);
      CHECK(wa == aa);
      const double c = rng.uniform(0.1, 10.0);
      const auto scaled = modulation_vector(w * c, t * c, Strategy::strong);
      CHECK((scaled.coefficients - strong.coefficients).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("scale factors") {
  ModulationVector mod{vec({0.7, 0.3}), Strategy::strong, 1.0, 0.1};
  CHECK(mod.scale_factors()[0] == doctest::Approx(1.07));
  CHECK(mod.scale_factors()[1] == doctest::Approx(1.03));
  mod.strategy = Strategy::ogm;
  CHECK(mod.scale_factors()[0] == doctest::Approx(0.93));
  CHECK(mod.scale_factors()[1] == doctest::Approx(0.97));
  mod.eta = 5.0;
  CHECK(mod.scale_factors()[0] == 0.0);
}

TEST_CASE("modulate gradients") {
  Rng rng(8);
  const GradientBundle bundle = random_bundle(2, rng);

  SUBCASE("eta zero is the identity") {
    const auto out = modulate_gradients(bundle, modulation_vector(vec({2, 1}), 1.0, Strategy::strong, 0.0));
    for (int m = 0; m < 2; ++m) {
      CHECK(max_diff(out.modality[m].encoder, bundle.modality[m].encoder) == 0.0);
      CHECK(max_diff(out.modality[m].head, bundle.modality[m].head) == 0.0);
    }
  }
  SUBCASE("blocks scale, shared passes through") {
    ModulationVector mod{vec({0.7, 0.3}), Strategy::strong, 1.0, 0.1};
    const auto out = modulate_gradients(bundle, mod);
    CHECK(max_diff(out.shared, bundle.shared) == 0.0);
    for (int m = 0; m < 2; ++m) {
      const double s = mod.scale_factors()[m];
      for (std::size_t i = 0; i < bundle.modality[m].encoder.size(); ++i)
        CHECK((out.modality[m].encoder[i] - s * bundle.modality[m].encoder[i]).cwiseAbs().maxCoeff() < 1e-15);
      CHECK((out.modality[m].head[0] - s * bundle.modality[m].head[0]).cwiseAbs().maxCoeff() < 1e-15);
    }
    const auto enc_only = modulate_gradients(bundle, mod, false);
    CHECK(max_diff(enc_only.modality[0].head, bundle.modality[0].head) == 0.0);
    CHECK(max_diff(enc_only.modality[0].encoder, out.modality[0].encoder) == 0.0);
  }
  SUBCASE("positively homogeneous") {
    const auto mod = modulation_vector(vec({0.4, 1.3}), 0.5, Strategy::ogm, 0.8);
    GradientBundle scaled = bundle;
    const double c = 3.5;
    for (auto& blk : scaled.modality) {
      for (auto& g : blk.encoder) g *= c;
      for (auto& g : blk.head) g *= c;
    }
    for (auto& g : scaled.shared) g *= c;
    const auto a = modulate_gradients(scaled, mod);
    const auto b = modulate_gradients(bundle, mod);
    for (int m = 0; m < 2; ++m)
      for (std::size_t i = 0; i < a.modality[m].encoder.size(); ++i)
        CHECK((a.modality[m].encoder[i] - c * b.modality[m].encoder[i]).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("modality count mismatch") {
    CHECK_THROWS_AS(modulate_gradients(bundle, modulation_vector(vec({1, 1, 1}), 1.0, Strategy::null)),
                    DimensionError);
  }
}

TEST_CASE("a modulated step descends on a block-separable quadratic") {
  // f = sum_m 1/2 x_m' H_m x_m + 1/2 s' H_s s, with per-block SPD Hessians.
  Rng rng(99);
  for (int instance = 0; instance < 3; ++instance) {
    const int M = 2;
    std::vector<Matrix> h(M + 1);
    std::vector<Matrix> x(M + 1);
    double lipschitz = 0.0;
    for (int b = 0; b <= M; ++b) {
      const Matrix a = random_matrix(4, 4, rng);
      h[b] = a.transpose() * a + 0.1 * Matrix::Identity(4, 4);
      lipschitz = std::max(lipschitz, Eigen::SelfAdjointEigenSolver<Matrix>(h[b]).eigenvalues().maxCoeff());
      x[b] = random_matrix(4, 1, rng);
    }
    auto objective = [&](const std::vector<Matrix>& p) {
      double f = 0.0;
      for (int b = 0; b <= M; ++b) f += 0.5 * (p[b].transpose() * h[b] * p[b])(0, 0);
      return f;
    };
    GradientBundle grads;
    for (int m = 0; m < M; ++m) grads.modality.push_back({{h[m] * x[m]}, {}});
    grads.shared = {h[M] * x[M]};

    Vector w(M);
    w << rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0);
    const double step = 0.9 / lipschitz;
    for (auto s : {Strategy::strong, Strategy::null, Strategy::weak}) {
      const auto mod = modulation_vector(w, 1.0, s, 0.5);
      CHECK((0.5 * mod.coefficients.array() <= 0.5).all());
      const auto g = modulate_gradients(grads, mod);
      std::vector<Matrix> next = x;
      for (int m = 0; m < M; ++m) next[m] -= step * g.modality[m].encoder[0];
      next[M] -= step * g.shared[0];
      CHECK(objective(next) < objective(x));
    }
  }
}
