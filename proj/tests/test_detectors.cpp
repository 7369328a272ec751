#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "spoofsim/detectors.hpp"
#include "spoofsim/errors.hpp"
#include "spoofsim/harness.hpp"

using namespace spoofsim;
using namespace spoofsim::detect;

namespace {

Eigen::VectorXd random_vec(oracle::Gen& gen, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * gen.normal();
  return v;
}

oracle::Mat to_mat(const Eigen::MatrixXd& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

oracle::Vec to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

const GridModel& rts() {
  static const GridModel g = grid::load_ieee24_rts();
  return g;
}

ScenarioConfig clean_config() {
  ScenarioConfig cfg;
  cfg.attack_enabled = false;
  return cfg;
}

}  // namespace

TEST_CASE("WLS matches the normal equations") {
  oracle::Gen gen(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = static_cast<Eigen::Index>(gen.integer(4, 20));
    const auto n = static_cast<Eigen::Index>(gen.integer(1, static_cast<int>(m) - 1));
    Eigen::MatrixXd h(m, n);
    for (Eigen::Index i = 0; i < m; ++i) h.row(i) = random_vec(gen, n).transpose();
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) r(i) = gen.uniform(0.1, 2.0);
    const Eigen::VectorXd z = random_vec(gen, m);
    const WlsResult w = wls_estimate(h, Eigen::MatrixXd(r.asDiagonal()), z);
    const oracle::Vec ref = oracle::wls(to_mat(h), to_vec(r), to_vec(z));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(w.x_hat(static_cast<Eigen::Index>(i)) - ref[i]) < 1e-9);
    CHECK((w.residual - (z - h * w.x_hat)).cwiseAbs().maxCoeff() < 1e-12);
    double obj = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) obj += w.residual(i) * w.residual(i) / r(i);
    CHECK(w.objective == doctest::Approx(obj));

    // R = I is ordinary least squares.
    const WlsResult ols = wls_estimate(h, Eigen::MatrixXd::Identity(m, m), z);
    const oracle::Vec ref_ols = oracle::wls(to_mat(h), oracle::Vec(static_cast<std::size_t>(m), 1.0), to_vec(z));
    for (std::size_t i = 0; i < ref_ols.size(); ++i)
      CHECK(std::abs(ols.x_hat(static_cast<Eigen::Index>(i)) - ref_ols[i]) < 1e-9);
  }
}

TEST_CASE("WLS errors") {
  Eigen::MatrixXd h(3, 2);
  h << 1, 2, 2, 4, 3, 6;
  CHECK_THROWS_AS((void)wls_estimate(h, Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Ones(3)),
                  SingularSystem);
  CHECK_THROWS_AS((void)wls_estimate(Eigen::MatrixXd::Identity(3, 2), Eigen::MatrixXd::Identity(2, 2),
                                     Eigen::VectorXd::Ones(3)),
                  InvalidArgument);
  CHECK_THROWS_AS((void)wls_estimate(Eigen::MatrixXd::Identity(3, 2), -Eigen::MatrixXd::Identity(3, 3),
                                     Eigen::VectorXd::Ones(3)),
                  InvalidArgument);
  CHECK_THROWS_AS((void)MeasurementModel::from_grid(rts(), 0.0, 0.0), InvalidArgument);
}

TEST_CASE("WLS on the RTS: consistency, fixpoint, invisible injections") {
  const MeasurementModel model = MeasurementModel::from_grid(rts(), 0.5);
  CHECK(model.measurements() == 38);
  CHECK(model.states() == 23);
  oracle::Gen gen(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_vec(gen, 23, 0.1);
    const WlsResult exact = wls_estimate(model, model.h * x);
    CHECK((exact.x_hat - x).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(exact.residual.cwiseAbs().maxCoeff() < 1e-10);
    CHECK_FALSE(lnr_test(exact, 3.0));

    Eigen::VectorXd z = model.h * x;
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) += std::sqrt(model.r(i)) * gen.normal();
    const WlsResult w = wls_estimate(model, z);
    CHECK(w.normalized.allFinite());
    const WlsResult again = wls_estimate(model, model.h * w.x_hat);
    CHECK((again.x_hat - w.x_hat).cwiseAbs().maxCoeff() < 1e-10);

    const Eigen::VectorXd c = random_vec(gen, 23, 0.05);
    const WlsResult shifted = wls_estimate(model, z + model.h * c);
    CHECK(std::abs(shifted.residual.norm() - w.residual.norm()) < 1e-9);
    CHECK((shifted.x_hat - w.x_hat - c).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(whitened_residual_norm(model, shifted) - whitened_residual_norm(model, w)) < 1e-9);
  }
}

TEST_CASE("the largest normalized residual points at the corrupted measurement") {
  const MeasurementModel model = MeasurementModel::from_grid(rts(), 0.5);
  oracle::Gen gen(5);
  const Eigen::VectorXd x = random_vec(gen, 23, 0.1);
  const Eigen::MatrixXd omega = Eigen::MatrixXd(model.r.asDiagonal()) -
                                model.h * wls_estimate(model, model.h * x).covariance * model.h.transpose();
  int tested = 0;
  for (Eigen::Index k = 0; k < 38; ++k) {
    if (omega(k, k) <= 1e-6 * model.r(k)) continue;  // critical measurement: undetectable
    Eigen::VectorXd z = model.h * x;
    z(k) += 20.0 * std::sqrt(model.r(k));
    const WlsResult w = wls_estimate(model, z);
    // Brute force over every index.
    double best = 0.0;
    for (Eigen::Index i = 0; i < 38; ++i) best = std::max(best, std::abs(w.normalized(i)));
    CHECK(std::abs(w.normalized(k)) >= best * (1.0 - 1e-9));
    CHECK(lnr_test(w, 3.0));
    ++tested;
  }
  CHECK(tested > 30);
}

TEST_CASE("LNR threshold semantics") {
  WlsResult w;
  w.normalized = Eigen::VectorXd::Zero(5);
  CHECK_FALSE(lnr_test(w, 3.0));
  w.normalized(2) = -3.5;
  CHECK(lnr_test(w, 3.0));
  CHECK(max_abs_normalized(w) == 3.5);
  w.normalized(2) = 3.0;
  CHECK_FALSE(lnr_test(w, 3.0));
}

TEST_CASE("Kalman filter converges on consistent data and keeps P PSD") {
  const MeasurementModel model = MeasurementModel::from_grid(rts(), 1e-4);
  oracle::Gen gen(77);
  const Eigen::VectorXd x = random_vec(gen, 23, 0.1);
  const Eigen::VectorXd x0 = x + random_vec(gen, 23, 0.05);
  KalmanOptions opt;
  opt.q_scale = 0.0;
  opt.deviation_weighting = false;
  KalmanState s = kf_init(model, model.h * x0, opt);
  const double e0 = (s.x_hat - x).norm();
  double prev = e0;
  for (int t = 0; t < 60; ++t) {
    s = kf_step(std::move(s), model.h * x);
    const double e = (s.x_hat - x).norm();
    CHECK(e < prev);
    prev = e;

    CHECK((s.p - s.p.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.p);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);

    const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(23, 23) - s.k * s.h;
    const Eigen::VectorXcd ev = ikh.eigenvalues();
    CHECK(ev.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
  }
  CHECK(prev < 0.05 * e0);
}

TEST_CASE("Kalman covariance stays PSD under noise and process drift") {
  const MeasurementModel model = MeasurementModel::from_grid(rts(), 0.5);
  oracle::Gen gen(8);
  Eigen::VectorXd x = random_vec(gen, 23, 0.1);
  KalmanState s = kf_init(model, model.h * x);
  for (int t = 0; t < 100; ++t) {
    x += random_vec(gen, 23, 1e-3);
    Eigen::VectorXd z = model.h * x;
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) += std::sqrt(model.r(i)) * gen.normal();
    s = (t % 2 == 0) ? kf_step(std::move(s), z) : dkf_step(std::move(s), z);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.p);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    CHECK((s.w.array() > 0.0).all());
    const Eigen::VectorXcd ev = (Eigen::MatrixXd::Identity(23, 23) - s.k * s.h).eigenvalues();
    CHECK(ev.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
  }
  CHECK_THROWS_AS((void)kf_step(s, Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST_CASE("deviation weighting") {
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 4.0);
  CHECK(dkf_update_weights(w, Eigen::VectorXd::Zero(3)) == w);

  Eigen::VectorXd nu(3);
  nu << 1.0, -1.0, 0.0;
  const Eigen::VectorXd w1 = dkf_update_weights(w, nu);
  CHECK(1.0 / w1(0) == doctest::Approx(std::numbers::e / 4.0));
  CHECK(1.0 / w1(1) == doctest::Approx(std::numbers::e / 4.0));
  CHECK(w1(2) == 4.0);

  oracle::Gen gen(3);
  for (int k = 0; k < 200; ++k) {
    const double a = gen.uniform(0.0, 5.0);
    const double b = a + gen.uniform(0.0, 5.0);
    const Eigen::VectorXd wa = dkf_update_weights(w, Eigen::VectorXd::Constant(3, a));
    const Eigen::VectorXd wb = dkf_update_weights(w, Eigen::VectorXd::Constant(3, -b));
    CHECK((wb.array() <= wa.array()).all());
    CHECK((wb.array() > 0.0).all());
  }
  const Eigen::VectorXd floor = Eigen::VectorXd::Constant(3, 1e-3);
  const Eigen::VectorXd clamped = dkf_update_weights(w, Eigen::VectorXd::Constant(3, 50.0), &floor);
  CHECK(clamped == floor);
  CHECK_THROWS_AS((void)dkf_update_weights(Eigen::VectorXd::Zero(3), nu), InvalidArgument);
  CHECK_THROWS_AS((void)dkf_update_weights(w, Eigen::VectorXd::Zero(2)), InvalidArgument);
}

TEST_CASE("DKF residual series: quiet on clean data, flags a spike") {
  const ScenarioConfig cfg = clean_config();
  const auto sim = harness::simulate_stream(rts(), cfg);
  const MeasurementModel model = MeasurementModel::from_grid(rts(), cfg.noise_variance_deg2);
  const ResidualSeries clean = dkf_residual_series(sim.measured, model, 3.0);
  REQUIRE(clean.max_normalized.size() == sim.measured.size());
  CHECK(clean.max_normalized[0] == 0.0);
  CHECK_FALSE(clean.any());
  CHECK_FALSE(wls_residual_series(sim.measured, model, 3.0).any());

  PhasorStream spiked = sim.measured;
  const std::size_t at = 200;
  const Eigen::Index k = 5;
  spiked.frames[at].z(k) += 10.0 * std::sqrt(model.r(k));
  const ResidualSeries s = dkf_residual_series(spiked, model, 3.0);
  CHECK(s.flags[at]);
  for (std::size_t i = 0; i < at; ++i) CHECK_FALSE(s.flags[i]);
  CHECK(wls_residual_series(spiked, model, 3.0).flags[at]);

  PhasorStream one = sim.measured;
  one.frames.resize(1);
  CHECK_THROWS_AS((void)dkf_residual_series(one, model, 3.0), InvalidArgument);
}

TEST_CASE("Hankel error series") {
  const std::vector<double> c(300, 0.4);
  const auto e = hankel_error_series(c, 80, 1);
  REQUIRE(e.size() == 300);
  for (std::size_t k = 0; k < 79; ++k) CHECK(std::isnan(e[k]));
  for (std::size_t k = 79; k < 300; ++k) CHECK(e[k] < 1e-12);
  CHECK_THROWS_AS((void)hankel_error_series(c, 300, 1), InvalidArgument);

  // A step at sample 150 shows up in every window covering it.
  std::vector<double> step(300, 0.4);
  for (std::size_t k = 150; k < 300; ++k) step[k] = 0.5;
  const auto es = hankel_error_series(step, 80, 1);
  CHECK(es[149] < 1e-12);
  CHECK(es[150] > 1e-4);
  CHECK(es[228] > 1e-4);
  CHECK(es[229] < 1e-12);  // window 150..229 is flat again
  CHECK(es[299] < 1e-12);

  // Wrapped input is unwrapped first: a constant rotation wrapping at pi.
  std::vector<double> ramp(200);
  std::vector<double> wrapped(200);
  for (std::size_t k = 0; k < 200; ++k) {
    ramp[k] = 3.0 + 0.01 * static_cast<double>(k);
    wrapped[k] = hankel::wrap_angle(ramp[k]);
  }
  const auto ew = hankel_error_series(wrapped, 80, 2);
  const auto er = hankel_error_series(ramp, 80, 2);
  for (std::size_t k = 79; k < 200; ++k) CHECK(std::abs(ew[k] - er[k]) < 1e-9);
}

TEST_CASE("Hankel monitor reacts to load steps and to the attack") {
  ScenarioConfig cfg;
  const auto res = harness::run_paper_scenario(cfg);
  const auto& rep = res.report;
  const double fr = cfg.frame_rate;
  const harness::HankelTrace* b13 = rep.find_hankel(13, 80);
  REQUIRE(b13 != nullptr);
  // Before the first load step bus 13 is flat; right after it the window spikes.
  CHECK(b13->error[frame_index(4.9, fr)] < 1e-12);
  CHECK(b13->error[frame_index(5.0, fr) + 1] > 1e-4);

  const harness::HankelTrace* b23 = rep.find_hankel(23, 80);
  REQUIRE(b23 != nullptr);
  CHECK(b23->error[frame_index(1.9, fr)] < 1e-12);
  double after = 0.0;
  for (std::size_t k = frame_index(2.0, fr); k < b23->error.size(); ++k) after = std::max(after, b23->error[k]);
  CHECK(after > 1e-4);
}

TEST_CASE("gradient sign detector") {
  const std::vector<double> a{0.0, 1.0, 2.0, 3.0, 2.0, 1.0};
  const auto same = gradient_sign_detector(a, a, 0.1);
  for (int f : same.flags) CHECK(f == 0);
  CHECK(same.overall_rate == 0.0);

  const std::vector<double> up{0.0, 1.0, 2.0, 3.0, 4.0};
  const std::vector<double> down{4.0, 3.0, 2.0, 1.0, 0.0};
  const auto opp = gradient_sign_detector(up, down, 1.0 / 60.0, 1e-9, 2);
  CHECK(opp.flags == std::vector<int>{0, 1, 1, 1, 1});
  CHECK(opp.valid == std::vector<bool>{false, true, true, true, true});
  CHECK(opp.overall_rate == 1.0);

  // Flat segments are neutral.
  const std::vector<double> flat(5, 1.0);
  const auto fl = gradient_sign_detector(up, flat, 1.0);
  for (int f : fl.flags) CHECK(f == 0);
  CHECK(fl.overall_rate == 0.0);

  // NaN warm-up is skipped.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> warm{nan, nan, 1.0, 2.0, 3.0};
  const std::vector<double> cold{nan, nan, 3.0, 2.0, 3.0};
  const auto g = gradient_sign_detector(warm, cold, 1.0, 1e-9, 10);
  CHECK(g.flags == std::vector<int>{0, 0, 0, 1, 0});
  CHECK(g.overall_rate == doctest::Approx(0.5));
  const std::vector<double> ts{0, 1, 2, 3, 4};
  CHECK(g.rate_between(ts, 0.0, 3.5) == 1.0);
  CHECK(g.rate_between(ts, 3.5, 10.0) == 0.0);
  CHECK(g.rate_between(ts, 100.0, 200.0) == 0.0);

  // Trailing rate over the last two frames.
  const std::vector<double> zig{0, 1, 2, 3, 4, 5};
  const std::vector<double> zag{0, -1, 0, 1, 0, 1};
  const auto z = gradient_sign_detector(zig, zag, 1.0, 1e-9, 2);
  CHECK(z.flags == std::vector<int>{0, 1, 0, 0, 1, 0});
  CHECK(z.rate[4] == doctest::Approx(0.5));
  CHECK(z.rate[5] == doctest::Approx(0.5));

  CHECK_THROWS_AS((void)gradient_sign_detector(up, a, 1.0), InvalidArgument);
  CHECK_THROWS_AS((void)gradient_sign_detector(up, down, 0.0), InvalidArgument);
}

TEST_CASE("property: gradient flags are symmetric and bounded") {
  oracle::Gen gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    const oracle::Vec a = gen.vec(120);
    const oracle::Vec b = gen.vec(120);
    const auto ab = gradient_sign_detector(a, b, 0.5);
    const auto ba = gradient_sign_detector(b, a, 0.5);
    CHECK(ab.flags == ba.flags);
    for (double r : ab.rate) CHECK((r >= 0.0 && r <= 1.0));
    oracle::Vec scaled = b;
    for (auto& v : scaled) v *= 3.0;
    CHECK(gradient_sign_detector(a, scaled, 0.5).flags == ab.flags);
  }
}

TEST_CASE("gradient specificity: a shared load event is not a mismatch") {
  const ScenarioConfig cfg = clean_config();
  const auto sim = harness::simulate_stream(rts(), cfg);
  const harness::DetectorReport rep = harness::run_detectors(rts(), sim.measured, cfg);
  for (const auto& g : rep.gradients) {
    CHECK(g.report.overall_rate < 0.05);
    // Around each load step.
    for (double t0 : cfg.load.step_times) {
      CHECK(g.report.rate_between(rep.t, t0 - 0.5, t0 + 2.0) < 0.05);
    }
  }
  CHECK_FALSE(rep.wls.any());
  CHECK_FALSE(rep.dkf.any());
}

TEST_CASE("verdicts") {
  const std::vector<double> ts{0.0, 0.5, 1.0};
  const auto v = DetectorVerdict::from_flags("x", {0, 1, 1}, ts);
  CHECK(v.detected);
  CHECK(*v.first_detection_s == 0.5);
  const auto q = DetectorVerdict::from_flags("y", {0, 0, 0}, ts);
  CHECK_FALSE(q.detected);
  CHECK_FALSE(q.first_detection_s.has_value());
  CHECK_THROWS_AS((void)DetectorVerdict::from_flags("z", {0}, ts), InvalidArgument);
}
