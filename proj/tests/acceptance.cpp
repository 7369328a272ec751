// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here, next to each check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spoofsim/attack.hpp"
#include "spoofsim/harness.hpp"
#include "spoofsim/hankel.hpp"

using namespace spoofsim;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

constexpr double kRuntimeLimitS = 60.0;
constexpr double kCriticalFraction = 0.95;
constexpr double kBeta = 3.0;
constexpr std::size_t kMinHorizon = 9;
constexpr std::size_t kTargetHorizon = 20;
constexpr double kGradientRatio = 3.0;
constexpr double kQuietPairRate = 0.05;
constexpr double kDcTol = 1e-10;
constexpr double kSolverTol = 1e-6;
constexpr double kInvarianceTol = 1e-9;

void criterion1(const harness::ScenarioResult& r, double seconds) {
  const double critical = kCriticalFraction * r.limit_mva;
  bool crossed_in_peak = false;
  bool early = false;
  double true_peak = 0.0;
  double early_peak = 0.0;
  double peak_perceived = 0.0;
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    true_peak = std::max(true_peak, r.true_mva[k]);
    if (r.t[k] < 13.0) {
      early_peak = std::max(early_peak, r.perceived_mva[k]);
      early = early || r.perceived_mva[k] >= critical;
    }
    if (r.t[k] >= 13.0 && r.t[k] <= 15.0) {
      peak_perceived = std::max(peak_perceived, r.perceived_mva[k]);
      crossed_in_peak = crossed_in_peak || r.perceived_mva[k] > critical;
    }
  }
  const bool ok = seconds < kRuntimeLimitS && crossed_in_peak && true_peak <= r.limit_mva && !early;
  report(1, ok,
         "runtime " + fmt("%.2f s", seconds) + ", perceived max in [13,15] s " +
             fmt("%.1f MVA", peak_perceived) + " (> " + fmt("%.0f", critical) + "), perceived max before 13 s " +
             fmt("%.1f MVA", early_peak) + ", true max " + fmt("%.1f MVA", true_peak) + " (<= 500)");
}

void criterion2(const harness::ScenarioResult& r) {
  const double w = r.report.wls.peak();
  const double d = r.report.dkf.peak();
  report(2, w < kBeta && d < kBeta,
         "max normalized WLS residual " + fmt("%.3g", w) + ", max normalized DKF residual " + fmt("%.3g", d) +
             " (both < 3 at every timestamp)");
}

void criterion3() {
  const auto study = harness::run_forecast_study(ScenarioConfig{});
  const auto* s = study.find(50);
  const std::size_t h = s == nullptr ? 0 : s->horizon;
  std::string detail = "L=50 horizon " + std::to_string(h) + " consecutive steps within tau_e (need >= 9); ";
  detail += h >= kTargetHorizon ? "reaches the >= 20 target" : "below the >= 20 target (not gating)";
  report(3, h >= kMinHorizon, detail);
}

void criterion4(const harness::ScenarioResult& r) {
  const auto* attacked = r.report.find_gradient(13, 23);
  const auto* quiet = r.report.find_gradient(13, 12);
  if (attacked == nullptr || quiet == nullptr) {
    report(4, false, "gradient pairs missing from the report");
    return;
  }
  const double onset = 2.0;
  const double end = r.t.back() + 1.0;
  const double pre = attacked->report.rate_between(r.report.t, 0.0, onset);
  const double post = attacked->report.rate_between(r.report.t, onset, end);
  const double q = quiet->report.overall_rate;
  // A zero pre-onset rate makes the ratio test vacuous, so the post-onset
  // rate must also be nonzero.
  const bool ok = post >= kGradientRatio * pre && post > 0.0 && q < kQuietPairRate;
  report(4, ok,
         "pair 13-23 mismatch rate " + fmt("%.4f", pre) + " before 2 s, " + fmt("%.4f", post) +
             " after; pair 13-12 rate " + fmt("%.4f", q) + " (< 0.05)");
}

bool band_ok(const attack::AttackSchedule& s, double* sum_l1, double* sum_zeta) {
  bool ok = true;
  *sum_l1 = 0.0;
  *sum_zeta = 0.0;
  for (const auto& st : s.steps) {
    if (!st.feasible) continue;
    const double l1 = st.l1();
    ok = ok && st.zeta < l1 && l1 < st.zeta + st.epsilon;
    *sum_l1 += l1;
    *sum_zeta += st.zeta;
  }
  return ok;
}

void criterion5(const harness::ScenarioResult& r) {
  double l1 = 0.0;
  double zs = 0.0;
  const bool band = band_ok(r.schedule, &l1, &zs);
  const bool sum = l1 > zs;

  // All T epochs inside the run with steady true angles, so zeta' is one
  // number and the sum can be held against T * zeta'.
  ScenarioConfig steady;
  steady.load.step_times.clear();
  steady.duration_s = steady.attack_start_s + steady.attack_steps + 1.0;
  const auto s = harness::run_paper_scenario(steady);
  double l1s = 0.0;
  double zss = 0.0;
  const bool band_s = band_ok(s.schedule, &l1s, &zss);
  const bool all_t = s.schedule.accepted_steps() == static_cast<std::size_t>(steady.attack_steps);
  const double zeta0 = s.schedule.steps.empty() ? 0.0 : s.schedule.steps.front().zeta;
  const bool sum_t = l1s > steady.attack_steps * zeta0;

  report(5, band && sum && band_s && all_t && sum_t,
         std::to_string(r.schedule.accepted_steps()) + " accepted steps in band; sum |a|_1 " + fmt("%.6f", l1) +
             " > sum zeta' " + fmt("%.6f", zs) + "; steady run: " + std::to_string(s.schedule.accepted_steps()) +
             " of T=" + std::to_string(steady.attack_steps) + " steps, sum |a|_1 " + fmt("%.6f", l1s) + " > T*zeta' " +
             fmt("%.6f", steady.attack_steps * zeta0));
}

void criterion6() {
  // 3-bus ring against Cramer's rule.
  const GridModel g({{1, 0, 0}, {2, 0, 0}, {3, 0, 0}},
                    {{1, 1, 2, 0.1, 0, 100}, {2, 2, 3, 0.2, 0, 100}, {3, 1, 3, 0.25, 0, 100}}, 1);
  Eigen::VectorXd p(3);
  p << 0.0, 0.5, -0.8;
  const AngleState st = grid::solve_dc_power_flow(g, InjectionVector{p});
  const double det = 15.0 * 9.0 - 25.0;
  const double dc_err = std::max(std::abs(st.theta(1) - (0.5 * 9.0 - 5.0 * 0.8) / det),
                                 std::abs(st.theta(2) - (15.0 * -0.8 + 5.0 * 0.5) / det));

  // Step solver against a 10 x 1000 grid over the band.
  oracle::Gen gen(60606);
  double solver_gap = 0.0;
  int compared = 0;
  for (int trial = 0; trial < 50; ++trial) {
    attack::StepProblem pb;
    pb.effect.resize(gen.integer(2, 10), 2);
    for (Eigen::Index i = 0; i < pb.effect.rows(); ++i)
      for (Eigen::Index j = 0; j < 2; ++j) pb.effect(i, j) = gen.normal();
    pb.zeta = gen.uniform(0.005, 0.05);
    pb.epsilon = 0.05 * pb.zeta;
    pb.headroom = gen.uniform(0.2, 1.5) * pb.effect.norm() * pb.zeta;
    double brute = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 10; ++k) {
      const double rho = pb.zeta + pb.epsilon * (k + 0.5) / 10.0;
      for (int d = 0; d < 1000; ++d) {
        const double u = 4.0 * d / 1000.0;
        const int seg = static_cast<int>(u);
        const double t = u - seg;
        Eigen::Vector2d a;
        if (seg == 0) a << 1 - t, t;
        else if (seg == 1) a << -t, 1 - t;
        else if (seg == 2) a << -(1 - t), -t;
        else a << t, -(1 - t);
        const double obj = (pb.effect * (rho * a)).norm();
        if (obj <= pb.headroom) brute = std::min(brute, obj);
      }
    }
    if (!std::isfinite(brute)) continue;
    const auto sol = attack::solve_attack_step(pb);
    if (!sol.feasible) {
      solver_gap = std::numeric_limits<double>::infinity();
      continue;
    }
    solver_gap = std::max(solver_gap, sol.objective - brute);
    ++compared;
  }

  // WLS residual invariance under a = H c.
  const GridModel rts = grid::load_ieee24_rts();
  const detect::MeasurementModel model = detect::MeasurementModel::from_grid(rts, 0.5);
  double inv_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd z(38);
    for (Eigen::Index i = 0; i < 38; ++i) z(i) = gen.normal();
    Eigen::VectorXd c(23);
    for (Eigen::Index i = 0; i < 23; ++i) c(i) = gen.normal();
    const double r0 = detect::wls_estimate(model, z).residual.norm();
    const double r1 = detect::wls_estimate(model, z + model.h * c).residual.norm();
    inv_err = std::max(inv_err, std::abs(r1 - r0));
  }

  // Low-rank error monotone in r.
  int monotone = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd h(gen.integer(2, 10), gen.integer(2, 10));
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = gen.normal();
    bool ok = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int r = 1; r <= std::min(h.rows(), h.cols()); ++r) {
      const double e = hankel::low_rank_approx(h, r).rel_error;
      ok = ok && e <= prev;
      prev = e;
    }
    monotone += ok ? 1 : 0;
  }

  const bool ok = dc_err < kDcTol && solver_gap <= kSolverTol && compared > 0 && inv_err < kInvarianceTol &&
                  monotone == 100;
  report(6, ok,
         "3-bus DC error " + fmt("%.2e", dc_err) + "; solver minus grid optimum " + fmt("%.2e", solver_gap) +
             " over " + std::to_string(compared) + " problems; a=Hc residual change " + fmt("%.2e", inv_err) +
             "; monotone low-rank error on " + std::to_string(monotone) + "/100 matrices");
}

void criterion7() {
  const char* files[] = {"flows.csv", "residuals.csv", "hankel_errors.csv", "gradients.csv", "schedule.csv"};
  const fs::path root = fs::temp_directory_path() / "spoofsim_acceptance_determinism";
  fs::remove_all(root);
  bool same = true;
  std::size_t compared = 0;
  for (double noise : {0.0, 0.5}) {
    ScenarioConfig cfg;
    cfg.stream_noise_variance_deg2 = noise;
    cfg.seed = 20240;
    const std::string tag = noise > 0.0 ? "noisy" : "clean";
    harness::export_results(harness::run_paper_scenario(cfg), root / (tag + "_a"));
    harness::export_results(harness::run_paper_scenario(cfg), root / (tag + "_b"));
    for (const char* f : files) {
      same = same && slurp(root / (tag + "_a") / f) == slurp(root / (tag + "_b") / f);
      ++compared;
    }
  }
  fs::remove_all(root);
  report(7, same, std::to_string(compared) + " CSV artifacts byte-identical across repeated seeded runs");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::ScenarioResult r = harness::run_paper_scenario(ScenarioConfig{});
  const fs::path out = fs::temp_directory_path() / "spoofsim_acceptance_run";
  harness::export_results(r, out);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fs::remove_all(out);

  criterion1(r, seconds);
  criterion2(r);
  criterion3();
  criterion4(r);
  criterion5(r);
  criterion6();
  criterion7();
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
