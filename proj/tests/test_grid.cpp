#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "spoofsim/errors.hpp"
#include "spoofsim/grid.hpp"

using namespace spoofsim;

namespace {

GridModel two_bus(double x) {
  return GridModel({{1, 0, 0}, {2, 0, 0}}, {{1, 1, 2, x, 0.0, 100.0}}, 1);
}

// Ring 1-2 (x=0.1), 2-3 (x=0.2), 1-3 (x=0.25), slack at bus 1.
GridModel three_bus_ring() {
  return GridModel({{1, 0, 0}, {2, 0, 0}, {3, 0, 0}},
                   {{1, 1, 2, 0.1, 0, 100}, {2, 2, 3, 0.2, 0, 100}, {3, 1, 3, 0.25, 0, 100}}, 1);
}

}  // namespace

TEST_CASE("susceptance matrix of a single line") {
  const Eigen::MatrixXd b = grid::build_b_matrix(two_bus(0.5));
  CHECK(b(0, 0) == doctest::Approx(2.0));
  CHECK(b(0, 1) == doctest::Approx(-2.0));
  CHECK(b(1, 0) == doctest::Approx(-2.0));
  CHECK(b(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("parallel branches add their susceptances") {
  const GridModel g({{1, 0, 0}, {2, 0, 0}}, {{1, 1, 2, 0.5, 0, 1}, {2, 2, 1, 0.25, 0, 1}}, 2);
  const Eigen::MatrixXd b = grid::build_b_matrix(g);
  CHECK(b(0, 1) == doctest::Approx(-6.0));
  CHECK(b(1, 1) == doctest::Approx(6.0));
}

TEST_CASE("RTS susceptance matrix is a symmetric Laplacian of rank n-1") {
  const GridModel g = grid::load_ieee24_rts();
  const Eigen::MatrixXd b = grid::build_b_matrix(g);
  REQUIRE(b.rows() == 24);
  REQUIRE(b.cols() == 24);
  CHECK((b - b.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  const Eigen::VectorXd ev = es.eigenvalues();
  int nonzero = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) nonzero += ev(i) > 1e-8 * ev.maxCoeff() ? 1 : 0;
  CHECK(nonzero == 23);
  CHECK(ev.minCoeff() > -1e-9);
}

TEST_CASE("RTS dataset: 24 buses, 38 branches, 13-23 rated 500 MVA") {
  const GridModel g = grid::load_ieee24_rts();
  CHECK(g.bus_count() == 24);
  CHECK(g.branch_count() == 38);
  CHECK(g.branches()[g.branch_index(13, 23)].mva_limit == 500.0);
  CHECK(g.branches()[g.branch_index(23, 13)].mva_limit == 500.0);
  CHECK(g.slack_bus() == 23);
  const Eigen::MatrixXd h = grid::build_measurement_jacobian(g);
  CHECK(h.rows() == 38);
  CHECK(h.cols() == 24);
}

TEST_CASE("grid validation rejects malformed networks") {
  CHECK_THROWS_AS(GridModel({{1, 0, 0}}, {}, 1), InvalidArgument);
  CHECK_THROWS_AS(two_bus(0.0), InvalidArgument);
  CHECK_THROWS_AS(two_bus(-0.1), InvalidArgument);
  CHECK_THROWS_AS(GridModel({{1, 0, 0}, {2, 0, 0}}, {{1, 1, 3, 0.1, 0, 1}}, 1), InvalidArgument);
  CHECK_THROWS_AS(GridModel({{1, 0, 0}, {2, 0, 0}}, {{1, 1, 2, 0.1, 0, 1}}, 7), InvalidArgument);
  // Bus 3 is an island.
  CHECK_THROWS_AS(GridModel({{1, 0, 0}, {2, 0, 0}, {3, 0, 0}}, {{1, 1, 2, 0.1, 0, 1}}, 1),
                  InvalidArgument);
}

TEST_CASE("zero injections give a flat angle profile") {
  const GridModel g = grid::load_ieee24_rts();
  const AngleState s = grid::solve_dc_power_flow(g, InjectionVector{Eigen::VectorXd::Zero(24)});
  CHECK(s.theta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("three-bus ring matches a hand solution") {
  const GridModel g = three_bus_ring();
  Eigen::VectorXd p(3);
  p << 0.0, 0.5, -0.8;
  const AngleState s = grid::solve_dc_power_flow(g, InjectionVector{p});
  // Reduced system [[15, -5], [-5, 9]] theta = [0.5, -0.8], by Cramer's rule.
  const double det = 15.0 * 9.0 - 25.0;
  const double t2 = (0.5 * 9.0 - 5.0 * 0.8) / det;
  const double t3 = (15.0 * -0.8 + 5.0 * 0.5) / det;
  CHECK(s.theta(0) == 0.0);
  CHECK(std::abs(s.theta(1) - t2) < 1e-10);
  CHECK(std::abs(s.theta(2) - t3) < 1e-10);
}

TEST_CASE("DC solve residual is tiny for random injections") {
  const GridModel g = grid::load_ieee24_rts();
  const Eigen::MatrixXd b = grid::build_b_matrix(g);
  oracle::Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd p(24);
    for (Eigen::Index i = 0; i < 24; ++i) p(i) = gen.uniform(-3.0, 3.0);
    const InjectionVector bal = grid::balance_at_slack(g, InjectionVector{p});
    CHECK(std::abs(bal.p.sum()) < 1e-9);
    const AngleState s = grid::solve_dc_power_flow(g, bal);
    CHECK(s.theta(static_cast<Eigen::Index>(g.slack_index())) == 0.0);
    const Eigen::VectorXd mismatch = grid::drop_slack(g, b * s.theta - bal.p);
    CHECK(mismatch.cwiseAbs().maxCoeff() < 1e-10);

    // Independent solve of the reduced system.
    const std::size_t sl = g.slack_index();
    oracle::Mat a;
    oracle::Vec rhs;
    for (std::size_t i = 0; i < 24; ++i) {
      if (i == sl) continue;
      oracle::Vec row;
      for (std::size_t j = 0; j < 24; ++j) {
        if (j != sl) row.push_back(b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
      a.push_back(row);
      rhs.push_back(bal.p(static_cast<Eigen::Index>(i)));
    }
    const oracle::Vec ref = oracle::solve(a, rhs);
    const Eigen::VectorXd got = grid::drop_slack(g, s.theta);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(std::abs(got(static_cast<Eigen::Index>(k)) - ref[k]) < 1e-10);
    }
  }
}

TEST_CASE("RTS base case stays inside every branch rating") {
  const GridModel g = grid::load_ieee24_rts();
  const AngleState s = grid::solve_dc_power_flow(g, grid::scenario_injections(g, LoadProfile{}, 0.0));
  for (std::size_t k = 0; k < g.branch_count(); ++k) {
    CHECK(std::abs(grid::branch_flow(g, s, k)) * g.base_mva() < g.branches()[k].mva_limit);
  }
}

TEST_CASE("branch flow formula") {
  const GridModel g({{1, 0, 0}, {2, 0, 0}}, {{1, 1, 2, 0.08, 0, 100}}, 1);
  Eigen::VectorXd th(2);
  th << 0.05, -0.02;
  CHECK(grid::branch_flow(g, th, 0) == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(grid::directed_flow(g, th, 1, 2) == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(grid::directed_flow(g, th, 2, 1) == doctest::Approx(-0.875).epsilon(1e-12));
  th << 0.3, 0.3;
  CHECK(grid::branch_flow(g, th, 0) == 0.0);
  CHECK_THROWS_AS((void)grid::branch_flow(g, th, 1), InvalidArgument);
}

TEST_CASE("measurement Jacobian reproduces branch flows") {
  const GridModel g = grid::load_ieee24_rts();
  const Eigen::MatrixXd h = grid::build_measurement_jacobian(g);
  for (Eigen::Index k = 0; k < h.rows(); ++k) {
    int nz = 0;
    for (Eigen::Index j = 0; j < h.cols(); ++j) nz += h(k, j) != 0.0 ? 1 : 0;
    CHECK(nz == 2);
    CHECK(std::abs(h.row(k).sum()) < 1e-12);
  }
  oracle::Gen gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd th(24);
    for (Eigen::Index i = 0; i < 24; ++i) th(i) = gen.uniform(-0.5, 0.5);
    const Eigen::VectorXd z = h * th;
    for (std::size_t k = 0; k < g.branch_count(); ++k) {
      const Branch& br = g.branches()[k];
      const double flow = grid::branch_flow(g, th, k);
      CHECK(std::abs(z(static_cast<Eigen::Index>(k)) - flow) < 1e-12);
      CHECK(grid::directed_flow(g, th, br.to, br.from) == -flow);
    }
  }
  const Eigen::MatrixXd hr = grid::reduced_jacobian(g);
  CHECK(hr.cols() == 23);
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(hr).rank() == 23);
}

TEST_CASE("AC flow evaluator") {
  CHECK(grid::ac_branch_flow(1, 1, 0.2, 0.2, 0.0, 0.7, -5.0) == doctest::Approx(0.0));
  // V_i^2 (g_si + g_ij) - V_i V_j (g_ij cos d + b_ij sin d), evaluated by hand.
  const double v = 1.02 * 1.02 * (0.01 + 0.5) - 1.02 * 0.98 * (0.5 * std::cos(0.1) + -4.0 * std::sin(0.1));
  CHECK(grid::ac_branch_flow(1.02, 0.98, 0.15, 0.05, 0.01, 0.5, -4.0) == doctest::Approx(v));

  const GridModel g({{1, 0, 0}, {2, 0, 0}}, {{1, 1, 2, 0.05, 0, 100}}, 1);
  oracle::Gen gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double d = gen.uniform(-0.01, 0.01);
    Eigen::VectorXd th(2);
    th << d, 0.0;
    const double ac = grid::ac_branch_flow(1.0, 1.0, d, 0.0, 0.0, 0.0, -1.0 / 0.05);
    CHECK(std::abs(ac - grid::branch_flow(g, th, 0)) < 1e-4);
  }
}

TEST_CASE("noiseless measurements are exact and seeded noise is repeatable") {
  const GridModel g = grid::load_ieee24_rts();
  const AngleState s = grid::solve_dc_power_flow(g, grid::scenario_injections(g, LoadProfile{}, 1.0), 1.0);
  const MeasurementFrame clean = grid::synthesize_measurements(g, s, 9, NoiseSpec{});
  CHECK((clean.z - grid::build_measurement_jacobian(g) * s.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK(clean.theta_meas == s.theta);
  CHECK(clean.timestamp == 1.0);

  const NoiseSpec noise = NoiseSpec::from_angle_variance_deg2(0.5, 0.01);
  const MeasurementFrame a = grid::synthesize_measurements(g, s, 42, noise);
  const MeasurementFrame b = grid::synthesize_measurements(g, s, 42, noise);
  CHECK(a.z == b.z);
  CHECK(a.theta_meas == b.theta_meas);
  CHECK(a.provenance == Provenance::kNoisy);
  CHECK(a.z.size() == 38);
  CHECK(a.theta_meas.size() == 24);
  CHECK_THROWS_AS((void)NoiseSpec::from_angle_variance_deg2(-1.0), InvalidArgument);
}

TEST_CASE("angle noise has the configured variance in degrees squared") {
  const GridModel g = grid::load_ieee24_rts();
  const AngleState s{Eigen::VectorXd::Zero(24), 0.0};
  const NoiseSpec noise = NoiseSpec::from_angle_variance_deg2(0.5);
  const Eigen::MatrixXd h = grid::build_measurement_jacobian(g);
  std::mt19937_64 rng(2024);
  const int draws = 10000;
  double sum = 0.0;
  double sq = 0.0;
  for (int k = 0; k < draws; ++k) {
    const MeasurementFrame f = grid::synthesize_measurements(g, h, s, noise, rng);
    const double deg = f.theta_meas(0) * 180.0 / std::numbers::pi;
    sum += deg;
    sq += deg * deg;
  }
  const double mean = sum / draws;
  const double var = (sq - draws * mean * mean) / (draws - 1);
  CHECK(std::abs(var - 0.5) < 0.05 * 0.5);
  CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("load steps: +50% of base at 5, 9 and 13 s, right-continuous") {
  const GridModel g = grid::load_ieee24_rts();
  const LoadProfile prof;
  const double base = g.buses()[g.bus_index(13)].load_mw;
  CHECK(grid::profile_load_mw(g, prof, 4.9) == base);
  CHECK(grid::profile_load_mw(g, prof, 5.0) == 1.5 * base);
  CHECK(grid::profile_load_mw(g, prof, 9.0) == 2.0 * base);
  CHECK(grid::profile_load_mw(g, prof, 13.5) == doctest::Approx(base + 3 * 0.5 * base));
  CHECK_THROWS_AS((void)grid::scenario_injections(g, prof, -0.1), InvalidArgument);

  const InjectionVector p0 = grid::scenario_injections(g, prof, 4.9);
  const InjectionVector p1 = grid::scenario_injections(g, prof, 13.5);
  const auto k = static_cast<Eigen::Index>(g.bus_index(13));
  CHECK(p0.p(k) - p1.p(k) == doctest::Approx(1.5 * base / g.base_mva()));
  CHECK(std::abs(p1.p.sum()) < 1e-9);
  // Only bus 13 and the slack change.
  const auto sl = static_cast<Eigen::Index>(g.slack_index());
  for (Eigen::Index i = 0; i < 24; ++i) {
    if (i != k && i != sl) CHECK(p0.p(i) == p1.p(i));
  }
}

TEST_CASE("slack handling helpers round-trip") {
  const GridModel g = grid::load_ieee24_rts(13);
  CHECK(g.slack_bus() == 13);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(24, 1.0, 24.0);
  const Eigen::VectorXd r = grid::drop_slack(g, v);
  CHECK(r.size() == 23);
  v(static_cast<Eigen::Index>(g.slack_index())) = 0.0;
  CHECK(grid::insert_slack(g, r) == v);
  CHECK(g.with_slack(1).slack_bus() == 1);
  CHECK_THROWS_AS((void)g.bus_index(99), InvalidArgument);
  CHECK_FALSE(g.find_branch(1, 24).has_value());
}
