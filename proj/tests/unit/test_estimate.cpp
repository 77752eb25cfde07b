#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "srcloc/estimate.hpp"
#include "srcloc/experiments.hpp"
#include "srcloc/lattice.hpp"
#include "srcloc/rng.hpp"
#include "srcloc/simulate.hpp"
#include "support.hpp"

using namespace srcloc;

namespace {

ScenarioConfig translated(const ScenarioConfig& c, Point offset) {
  ScenarioConfig t = c;
  t.array = c.array.translated(offset);
  t.box = c.box.translated(offset);
  t.theta0 = c.theta0.translated(offset);
  return t;
}

}  // namespace

TEST_SUITE("estimate") {
  TEST_CASE("MLE never falls below the lattice starts") {
    for (const char* name : {"smooth_default", "cusp", "changepoint"}) {
      auto config = test::load_scenario(name);
      config.model.n = 300.0;
      const auto obs = simulate(config.model, config.array, config.theta0, 31);
      const LogLikelihood ll(obs);
      const auto r = mle(ll, config.box, config.regime(), config.mle);
      const auto scan = lattice_scan_direct(ll, config.box, config.mle.lattice_per_axis);
      double best = -1e300;
      for (const auto& p : scan) best = std::max(best, p.value);
      INFO(name);
      CHECK(r.log_likelihood >= best - 1e-9);
      CHECK(r.log_likelihood == doctest::Approx(ll(r.theta_hat)).epsilon(1e-12));
      CHECK(config.box.contains(r.theta_hat));
      CHECK(r.boundary == config.box.near_boundary(r.theta_hat, kBoundaryTolerance));
      CHECK(r.method == Method::MLE);
      // Deterministic given the data.
      CHECK(mle(ll, config.box, config.regime(), config.mle).theta_hat.values == r.theta_hat.values);
    }
  }

  TEST_CASE("smooth MLE is a stationary point") {
    auto config = test::smooth_scenario();
    config.model.n = 2000.0;
    const auto obs = simulate(config.model, config.array, config.theta0, 32);
    const LogLikelihood ll(obs);
    const auto r = mle(ll, config.box, Regime::Smooth, config.mle);
    REQUIRE_FALSE(r.boundary);
    CHECK(ll.score(r.theta_hat).norm() < 1e-4);
  }

  TEST_CASE("label swap of the truth leaves the error unchanged for identical amplitudes") {
    for (const char* name : {"smooth_default", "changepoint"}) {
      auto config = test::load_scenario(name);
      config.model.n = 500.0;
      for (auto& row : config.model.amplitudes) row[1] = row[0];
      const auto a = simulate(config.model, config.array, config.theta0, 33);
      const auto b = simulate(config.model, config.array, config.theta0.swapped(), 33);
      for (std::size_t k = 0; k < a.records.size(); ++k) REQUIRE(a.records[k].events == b.records[k].events);
      const auto ra = mle(a, config.box, config.regime(), config.mle);
      const auto rb = mle(b, config.box, config.regime(), config.mle);
      CHECK(permutation_min_distance(ra.theta_hat, config.theta0) ==
            permutation_min_distance(rb.theta_hat, config.theta0.swapped()));
      BayesOptions bo = config.bayes;
      bo.draws = 2000;
      bo.seed = 5;
      const auto ba = bayes_estimate(a, config.box, Prior::uniform(), bo);
      const auto bb = bayes_estimate(b, config.box, Prior::uniform(), bo);
      CHECK(permutation_min_distance(ba.theta_hat, config.theta0) ==
            permutation_min_distance(bb.theta_hat, config.theta0.swapped()));
    }
  }

  TEST_CASE("a single detector still yields an estimate") {
    auto config = test::smooth_scenario();
    config.array = DetectorArray({config.array[0]}, config.array.nu());
    config.model.amplitudes.resize(1);
    config.model.n = 200.0;
    const auto obs = simulate(config.model, config.array, config.theta0, 34);
    const auto r = mle(obs, config.box, Regime::Smooth, config.mle);
    CHECK(config.box.contains(r.theta_hat));
    CHECK(identifiability_screen(config.array, config.box).verdict == Verdict::TooFew);
  }

  TEST_CASE("two-atom posterior mean") {
    const std::vector<ThetaVector> pts{ThetaVector(1, 2, 3, 4), ThetaVector(-1, 0, 5, 2)};
    const std::vector<double> logw{std::log(0.25) + 700.0, std::log(0.75) + 700.0};
    const auto m = weighted_posterior_mean(pts, logw);
    const ThetaVector expected(0.25 * 1 + 0.75 * -1, 0.25 * 2 + 0.75 * 0, 0.25 * 3 + 0.75 * 5, 0.25 * 4 + 0.75 * 2);
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(m.mean[c] - expected[c]) < 1e-10);
    CHECK(m.ess == doctest::Approx(1.0 / (0.25 * 0.25 + 0.75 * 0.75)));
  }

  TEST_CASE("flat likelihood gives the box centre") {
    auto config = test::smooth_scenario();
    for (auto& row : config.model.amplitudes) row = {AmplitudeProfile{0.0, 0.0}, AmplitudeProfile{0.0, 0.0}};
    config.model.n = 100.0;
    const auto obs = simulate(config.model, config.array, config.theta0, 35);
    BayesOptions bo = config.bayes;
    bo.seed = 9;
    const auto r = bayes_estimate(obs, config.box, Prior::uniform(), bo);
    const ThetaVector c = config.box.center();
    REQUIRE(r.ess > 100.0);
    for (std::size_t j = 0; j < 4; ++j) {
      const double se = config.box.width(j) / std::sqrt(12.0 * r.ess);
      CHECK(std::abs(r.theta_hat[j] - c[j]) < 4.0 * se);
    }
  }

  TEST_CASE("Bayes estimate is translation equivariant") {
    for (const char* name : {"smooth_default", "cusp", "changepoint"}) {
      auto config = test::load_scenario(name);
      config.model.n = 300.0;
      const Point shift{3.25, -1.5};
      const auto moved = translated(config, shift);
      const auto a = simulate(config.model, config.array, config.theta0, 36);
      const auto b = simulate(moved.model, moved.array, moved.theta0, 36);
      BayesOptions bo = config.bayes;
      bo.draws = 3000;
      bo.seed = 77;
      const auto ra = bayes_estimate(a, config.box, Prior::uniform(), bo);
      const auto rb = bayes_estimate(b, moved.box, Prior::uniform(), bo);
      const ThetaVector expect = ra.theta_hat.translated(shift);
      INFO(name);
      CHECK(distance(rb.theta_hat, expect) < 1e-6);
    }
  }

  TEST_CASE("Bayes estimate reports diagnostics and stays in the box") {
    for (const char* name : {"smooth_default", "cusp", "changepoint"}) {
      auto config = test::load_scenario(name);
      config.model.n = 400.0;
      const auto obs = simulate(config.model, config.array, config.theta0, 37);
      BayesOptions bo = config.bayes;
      bo.draws = 4000;
      bo.seed = 1;
      const auto r = bayes_estimate(obs, config.box, Prior::uniform(), bo);
      INFO(name);
      CHECK(r.method == Method::BE);
      CHECK(config.box.contains(r.theta_hat));
      CHECK(r.ess > 0.0);
      CHECK(r.posterior_mass >= 0.0);
      CHECK(r.posterior_mass <= 1.0);
      CHECK(bayes_estimate(obs, config.box, Prior::uniform(), bo).theta_hat.values == r.theta_hat.values);
    }
  }

  TEST_CASE("truncated Gaussian prior") {
    const auto config = test::smooth_scenario();
    const Prior p = Prior::truncated_gaussian(config.box);
    CHECK(p.log_density(config.box.center()) > p.log_density(config.theta0));
    CHECK(Prior::uniform().log_density(config.theta0) == Prior::uniform().log_density(config.box.center()));
  }
}

TEST_SUITE("slow") {
  TEST_CASE("MLE at large n recovers the sources") {
    auto config = test::smooth_scenario();
    config.model.n = 1e5;
    const auto obs = simulate(config.model, config.array, config.theta0, 38);
    const auto r = mle(obs, config.box, Regime::Smooth, config.mle);
    CHECK(distance(r.theta_hat, config.theta0) < 0.05);
  }

  TEST_CASE("Bayes estimate and MLE agree at n = 10000") {
    auto config = test::smooth_scenario();
    config.model.n = 1e4;
    const int reps = 20;
    std::vector<double> diff[4];
    for (int rep = 0; rep < reps; ++rep) {
      const auto obs = simulate(config.model, config.array, config.theta0, derive_seed(39, {std::uint64_t(rep)}));
      const auto m = mle(obs, config.box, Regime::Smooth, config.mle);
      BayesOptions bo = config.bayes;
      bo.draws = 4000;
      bo.seed = derive_seed(40, {std::uint64_t(rep)});
      const auto b = bayes_estimate(obs, config.box, Prior::uniform(), bo);
      for (std::size_t c = 0; c < 4; ++c) diff[c].push_back(b.theta_hat[c] - m.theta_hat[c]);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double mean = 0.0, sq = 0.0;
      for (double d : diff[c]) mean += d;
      mean /= reps;
      for (double d : diff[c]) sq += (d - mean) * (d - mean);
      const double se = std::sqrt(sq / (reps - 1) / reps);
      INFO("coordinate ", c, " mean difference ", mean, " se ", se);
      CHECK(std::abs(mean) < 2.0 * se);
    }
  }
}
