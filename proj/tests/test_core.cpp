#include <catch2/catch.hpp>

#include <random>

#include "oracles.hpp"
#include "qadmm/core.hpp"

using namespace qadmm;

TEST_CASE("check loss evaluates the asymmetric piecewise form") {
  CHECK(check_loss(0.0, 0.7) == 0.0);
  CHECK(check_loss(2.0, 0.7) == Approx(1.4).margin(1e-15));
  CHECK(check_loss(-1.0, 0.7) == Approx(0.3).margin(1e-15));
  CHECK_THROWS_AS(check_loss(1.0, 0.0), ParamError);
  CHECK_THROWS_AS(check_loss(1.0, 1.5), ParamError);
  CHECK_THROWS_AS(check_loss(1.0, -0.2), ParamError);
}

TEST_CASE("check loss equals its positive/negative-part split") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uu(-5.0, 5.0), ut(0.01, 0.99);
  for (int i = 0; i < 1000; ++i) {
    const double u = uu(rng), tau = ut(rng);
    const double split = tau * std::max(u, 0.0) + (1.0 - tau) * std::max(-u, 0.0);
    REQUIRE(check_loss(u, tau) == Approx(split).margin(1e-12));
  }
}

TEST_CASE("slack decomposition reproduces the loss") {
  Vector r(1);
  r << 2.0;
  auto [xi, eta] = slack_decompose(r, 0.7);
  CHECK(xi[0] == 2.0);
  CHECK(eta[0] == 0.0);
  CHECK(0.7 * xi.sum() + 0.3 * eta.sum() == Approx(check_loss_sum(r, 0.7)));

  Vector z(1);
  z << 0.0;
  auto [xz, ez] = slack_decompose(z, 0.4);
  CHECK(xz[0] == 0.0);
  CHECK(ez[0] == 0.0);

  Vector r2(2);
  r2 << -1.0, 3.0;
  auto [x2, e2] = slack_decompose(r2, 0.5);
  CHECK(x2[0] == 0.0);
  CHECK(x2[1] == 3.0);
  CHECK(e2[0] == 1.0);
  CHECK(e2[1] == 0.0);
  CHECK(0.5 * x2.sum() + 0.5 * e2.sum() == Approx(2.0));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uu(-4.0, 4.0), ut(0.05, 0.95);
  for (int i = 0; i < 200; ++i) {
    Vector v(5);
    for (int j = 0; j < 5; ++j) v[j] = uu(rng);
    const double tau = ut(rng);
    auto [xp, en] = slack_decompose(v, tau);
    REQUIRE((xp - en - v).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE(tau * xp.sum() + (1.0 - tau) * en.sum() ==
            Approx(check_loss_sum(v, tau)).margin(1e-12));
  }
}

TEST_CASE("check-loss prox matches the grid-search oracle") {
  CHECK(prox_check_loss(1.0, 0.7, 1.0) == Approx(0.3).margin(1e-12));
  CHECK(prox_check_loss(0.5, 0.7, 1.0) == 0.0);
  CHECK(prox_check_loss(0.0, 0.7, 1.0) == 0.0);
  // boundary tie resolves to zero
  CHECK(prox_check_loss(0.7, 0.7, 1.0) == 0.0);
  CHECK(prox_check_loss(-0.3, 0.7, 1.0) == 0.0);
  CHECK_THROWS_AS(prox_check_loss(1.0, 0.7, 0.0), ParamError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uu(-3.0, 3.0), ut(0.05, 0.95), um(0.2, 4.0);
  for (int i = 0; i < 100; ++i) {
    const double u = uu(rng), tau = ut(rng), mu = um(rng);
    const double ours = prox_check_loss(u, tau, mu);
    const double ref = oracle::prox_check_grid(u, tau, mu);
    REQUIRE(ours == Approx(ref).margin(2e-5));
  }
}

TEST_CASE("weighted-l1 prox soft-thresholds componentwise") {
  Vector v(1), w(1);
  v << 1.0;
  w << 0.5;
  CHECK(prox_weighted_l1(v, w, 1.0)[0] == Approx(0.5));
  v << 0.0;
  w << 1.0;
  CHECK(prox_weighted_l1(v, w, 1.0)[0] == 0.0);
  v << -2.0;
  w << 0.0;
  CHECK(prox_weighted_l1(v, w, 1.0)[0] == Approx(-2.0));
  CHECK_THROWS_AS(prox_weighted_l1(v, w, 0.0), ParamError);
  CHECK_THROWS_AS(prox_weighted_l1(v, Vector::Zero(3), 1.0), ParamError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uv(-3.0, 3.0), uw(0.0, 2.0), uc(0.2, 4.0);
  for (int i = 0; i < 100; ++i) {
    Vector vv(4), ww(4);
    for (int j = 0; j < 4; ++j) {
      vv[j] = uv(rng);
      ww[j] = uw(rng);
    }
    const double c = uc(rng);
    const Vector out = prox_weighted_l1(vv, ww, c);
    for (int j = 0; j < 4; ++j) {
      // contraction toward zero with preserved (or killed) sign
      REQUIRE(std::abs(out[j]) <= std::abs(vv[j]) + 1e-15);
      REQUIRE((out[j] == 0.0 || out[j] * vv[j] > 0.0));
      const double ref = oracle::prox_abs_grid(vv[j], ww[j], c);
      REQUIRE(out[j] == Approx(ref).margin(2e-5));
    }
  }
}

TEST_CASE("classification transform turns margins into residuals") {
  // after the ingestion transform, y~ - x~'b == 1 - y x'b for every row
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector x(6), beta(6);
    for (int j = 0; j < 6; ++j) {
      x[j] = g(rng);
      beta[j] = g(rng);
    }
    const double y = trial % 2 == 0 ? 1.0 : -1.0;
    const Vector xt = y * x;
    REQUIRE(1.0 - xt.dot(beta) == Approx(1.0 - y * x.dot(beta)).margin(1e-14));
  }
}

TEST_CASE("tau validation distinguishes the tasks") {
  CHECK_NOTHROW(validate_tau(0.5, Task::Regression));
  CHECK_NOTHROW(validate_tau(1.0, Task::Classification));
  CHECK_THROWS_AS(validate_tau(1.0, Task::Regression), ParamError);
  CHECK_THROWS_AS(validate_tau(0.0, Task::Classification), ParamError);
}

TEST_CASE("penalty spec validation") {
  Vector lam = Vector::Constant(4, 0.5);
  CHECK_NOTHROW(PenaltySpec::weighted_l1(lam).validate());
  CHECK_THROWS_AS(PenaltySpec::scad(lam, 2.0).validate(), ParamError);
  CHECK_NOTHROW(PenaltySpec::scad(lam, 3.7).validate());
  CHECK_THROWS_AS(PenaltySpec::mcp(lam, 1.0).validate(), ParamError);
  Vector neg = lam;
  neg[2] = -0.1;
  CHECK_THROWS_AS(PenaltySpec::weighted_l1(neg).validate(), ParamError);
  // intercept coordinate must be unpenalized
  CHECK_THROWS_AS(PenaltySpec::weighted_l1(lam).validate(true), ParamError);
  CHECK(PenaltySpec::broadcast(0.5, 4, true)[0] == 0.0);
}

TEST_CASE("solver config validation") {
  SolverConfig cfg;
  cfg.variant = SolverVariant::QPADMSlackGB;
  cfg.nu = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg.nu = 0.75;
  CHECK_NOTHROW(cfg.validate());
  cfg.variant = SolverVariant::QPADMSlack;
  cfg.nu = 1.5;  // ignored by non-GB variants
  CHECK_NOTHROW(cfg.validate());
  cfg.mu = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
}

TEST_CASE("penalty values integrate their derivative formulas") {
  // continuity at the SCAD/MCP knots
  const double lam = 1.0, a_scad = 3.7, a_mcp = 3.0;
  CHECK(scad_value(lam, lam, a_scad) == Approx(scad_value(lam + 1e-12, lam, a_scad)).margin(1e-9));
  CHECK(scad_value(a_scad * lam, lam, a_scad) ==
        Approx(scad_value(a_scad * lam + 1.0, lam, a_scad)).margin(1e-9));
  CHECK(mcp_value(a_mcp * lam, lam, a_mcp) ==
        Approx(mcp_value(a_mcp * lam + 1.0, lam, a_mcp)).margin(1e-9));
}
