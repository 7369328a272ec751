#include "spoofsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "spoofsim/errors.hpp"
#include "spoofsim/hankel.hpp"

namespace spoofsim::harness {
namespace {

constexpr double kNoBadData = -std::numeric_limits<double>::infinity();

std::size_t frame_count(const ScenarioConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.frame_rate));
}

hankel::RankRule forecast_rule(const ScenarioConfig& cfg) {
  return cfg.hankel_rank > 0 ? hankel::RankRule::fixed_rank(cfg.hankel_rank)
                             : hankel::RankRule::energy_fraction(cfg.hankel_energy);
}

std::size_t lead_frames(const ScenarioConfig& cfg) {
  return static_cast<std::size_t>(std::ceil(cfg.attack_lead_time_s * cfg.frame_rate - 1e-9));
}

// Target branch oriented along the flow found in `theta`.
BusPair orient(const GridModel& grid, const Eigen::VectorXd& theta, BusPair branch) {
  return grid::directed_flow(grid, theta, branch.first, branch.second) >= 0.0
             ? branch
             : BusPair{branch.second, branch.first};
}

void fill_flows(const GridModel& grid, const SimulatedStream& sim, ScenarioResult& res) {
  const Branch& br = grid.branches()[grid.branch_index(res.branch.first, res.branch.second)];
  res.limit_mva = br.mva_limit;
  res.critical_mva = 0.95 * br.mva_limit;
  const double base = grid.base_mva();
  res.t = res.observed.timestamps();
  res.true_mva.reserve(res.t.size());
  res.perceived_mva.reserve(res.t.size());
  for (std::size_t k = 0; k < res.t.size(); ++k) {
    res.true_mva.push_back(
        base * grid::directed_flow(grid, sim.truth[k].theta, res.branch.first, res.branch.second));
    res.perceived_mva.push_back(base * grid::directed_flow(grid, res.observed.frames[k].theta_meas,
                                                           res.branch.first, res.branch.second));
  }
}

std::vector<ForecastLogEntry> forecast_log(const GridModel& grid, const ScenarioConfig& cfg,
                                           const PhasorStream& clean,
                                           const attack::AttackSchedule& sched) {
  std::vector<ForecastLogEntry> log;
  const std::size_t lead = lead_frames(cfg);
  const std::size_t L = cfg.hankel_trusted;
  const auto ch_from = clean.angle_channel(grid.bus_index(sched.sending_bus));
  const auto ch_to = clean.angle_channel(grid.bus_index(sched.receiving_bus));
  for (const auto& st : sched.steps) {
    if (!st.forecast_valid) continue;
    const std::size_t seen = st.frame - lead;
    if (seen + 1 < L) continue;
    auto entry = [&](BusId bus, const std::vector<double>& ch, double forecast, double actual) {
      const std::span<const double> trusted(ch.data() + seen + 1 - L, L);
      ForecastLogEntry e;
      e.epoch = st.epoch;
      e.t = st.t;
      e.bus = bus;
      e.forecast = forecast;
      e.actual = actual;
      e.error = std::abs(forecast - actual);
      e.tau_e = hankel::estimation_threshold(trusted, st.t, kNoBadData, L);
      log.push_back(e);
    };
    entry(sched.sending_bus, ch_from, st.forecast_from, st.actual_from);
    entry(sched.receiving_bus, ch_to, st.forecast_to, st.actual_to);
  }
  return log;
}

}  // namespace

GridModel scenario_grid(const ScenarioConfig& cfg) { return grid::load_ieee24_rts(cfg.slack_bus); }

SimulatedStream simulate_stream(const GridModel& grid, const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t n = frame_count(cfg);
  const NoiseSpec noise =
      NoiseSpec::from_angle_variance_deg2(cfg.stream_noise_variance_deg2, cfg.flow_sigma_pu);
  const Eigen::MatrixXd h = grid::build_measurement_jacobian(grid);
  std::mt19937_64 rng(cfg.seed);

  SimulatedStream out;
  out.truth.reserve(n);
  out.measured.frame_rate = cfg.frame_rate;
  out.measured.frames.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / cfg.frame_rate;
    const AngleState state =
        grid::solve_dc_power_flow(grid, grid::scenario_injections(grid, cfg.load, t), t);
    out.measured.frames.push_back(grid::synthesize_measurements(grid, h, state, noise, rng));
    out.truth.push_back(state);
  }
  return out;
}

const HankelTrace* DetectorReport::find_hankel(BusId bus, std::size_t window) const noexcept {
  for (const auto& h : hankel) {
    if (h.bus == bus && h.window == window) return &h;
  }
  return nullptr;
}

const GradientTrace* DetectorReport::find_gradient(BusId a, BusId b) const noexcept {
  for (const auto& g : gradients) {
    if (g.pair.first == a && g.pair.second == b) return &g;
  }
  return nullptr;
}

DetectorReport run_detectors(const GridModel& grid, const PhasorStream& stream,
                             const ScenarioConfig& cfg) {
  cfg.validate();
  const detect::MeasurementModel model =
      detect::MeasurementModel::from_grid(grid, cfg.noise_variance_deg2, cfg.flow_sigma_pu);
  detect::KalmanOptions kopt;
  kopt.q_scale = cfg.kf_q;
  kopt.weight_cap = cfg.dkf_cap;

  DetectorReport rep;
  rep.t = stream.timestamps();

  auto wls = std::async(std::launch::async, [&] {
    return detect::wls_residual_series(stream, model, cfg.beta);
  });
  auto dkf = std::async(std::launch::async, [&] {
    return detect::dkf_residual_series(stream, model, cfg.beta, kopt);
  });

  // One task per (bus, window); results are stored in configuration order.
  struct Job {
    BusId bus;
    std::size_t window;
  };
  std::vector<Job> jobs;
  for (BusId b : cfg.monitor_buses) {
    for (std::size_t w : cfg.detect_windows) jobs.push_back({b, w});
  }
  for (const auto& [a, b] : cfg.gradient_pairs) {
    for (BusId bus : {a, b}) {
      const bool have = std::any_of(jobs.begin(), jobs.end(), [&](const Job& j) {
        return j.bus == bus && j.window == cfg.gradient_window;
      });
      if (!have && cfg.gradient_source == GradientSource::kError) {
        jobs.push_back({bus, cfg.gradient_window});
      }
    }
  }
  std::vector<std::future<std::vector<double>>> errs;
  errs.reserve(jobs.size());
  for (const auto& j : jobs) {
    const std::size_t idx = grid.bus_index(j.bus);
    errs.push_back(std::async(std::launch::async, [&stream, idx, j, &cfg] {
      const auto ch = stream.angle_channel(idx);
      return detect::hankel_error_series(ch, j.window, cfg.detect_hankel_rank);
    }));
  }
  std::vector<HankelTrace> all;
  all.reserve(jobs.size());
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    all.push_back({jobs[k].bus, jobs[k].window, errs[k].get()});
  }
  const std::size_t monitored = cfg.monitor_buses.size() * cfg.detect_windows.size();
  rep.hankel.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(monitored));

  const double dt = 1.0 / stream.frame_rate;
  for (const auto& pair : cfg.gradient_pairs) {
    std::vector<double> si;
    std::vector<double> sj;
    if (cfg.gradient_source == GradientSource::kError) {
      auto find = [&](BusId bus) -> const std::vector<double>& {
        for (const auto& h : all) {
          if (h.bus == bus && h.window == cfg.gradient_window) return h.error;
        }
        throw Error("run_detectors: missing error series");
      };
      si = find(pair.first);
      sj = find(pair.second);
    } else {
      si = hankel::unwrap_phase(stream.angle_channel(grid.bus_index(pair.first)));
      sj = hankel::unwrap_phase(stream.angle_channel(grid.bus_index(pair.second)));
    }
    rep.gradients.push_back({pair, detect::gradient_sign_detector(si, sj, dt, cfg.gradient_deadband,
                                                                  cfg.gradient_rate_window)});
  }

  rep.wls = wls.get();
  rep.dkf = dkf.get();

  auto to_int = [](const std::vector<bool>& f) { return std::vector<int>(f.begin(), f.end()); };
  rep.verdicts.push_back(detect::DetectorVerdict::from_flags("wls_lnr", to_int(rep.wls.flags), rep.t));
  rep.verdicts.push_back(detect::DetectorVerdict::from_flags("dkf_lnr", to_int(rep.dkf.flags), rep.t));
  for (const auto& g : rep.gradients) {
    rep.verdicts.push_back(detect::DetectorVerdict::from_flags(
        "gradient_" + std::to_string(g.pair.first) + "_" + std::to_string(g.pair.second),
        g.report.flags, rep.t));
  }
  return rep;
}

ScenarioResult run_paper_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const GridModel grid = scenario_grid(cfg);
  const SimulatedStream sim = simulate_stream(grid, cfg);

  ScenarioResult res;
  res.name = "default";
  res.clean = sim.measured;
  const std::size_t start = std::min(frame_index(cfg.attack_start_s, cfg.frame_rate),
                                     sim.truth.size() - 1);
  res.branch = orient(grid, sim.truth[start].theta, cfg.attack_branch);

  if (cfg.attack_enabled) {
    const detect::MeasurementModel model =
        detect::MeasurementModel::from_grid(grid, cfg.noise_variance_deg2, cfg.flow_sigma_pu);
    attack::AttackConfig acfg;
    acfg.branch_from = cfg.attack_branch.first;
    acfg.branch_to = cfg.attack_branch.second;
    acfg.support = cfg.attack_support;
    acfg.steps = cfg.attack_steps;
    acfg.epsilon_fraction = cfg.attack_epsilon_fraction;
    acfg.lead_time_s = cfg.attack_lead_time_s;
    acfg.start_time_s = cfg.attack_start_s;
    acfg.tau_r = cfg.attack_tau_r;
    acfg.divisor = cfg.attack_divide_remaining ? attack::ZetaDivisor::kRemainingSteps
                                               : attack::ZetaDivisor::kInitialSteps;
    std::unique_ptr<attack::Forecaster> forecaster;
    if (cfg.attack_forecast == ForecastKind::kHankel) {
      forecaster = std::make_unique<attack::HankelForecaster>(cfg.hankel_tau, cfg.hankel_kappa,
                                                              forecast_rule(cfg));
    } else {
      forecaster = std::make_unique<attack::PerfectForesight>();
    }
    res.schedule = attack::plan_relentless_attack(grid, res.clean, model, acfg, *forecaster);
    res.observed = attack::apply_schedule(grid, res.clean, res.schedule);
    res.branch = {res.schedule.sending_bus, res.schedule.receiving_bus};
    res.forecast_log = forecast_log(grid, cfg, res.clean, res.schedule);
  } else {
    res.schedule.support = cfg.attack_support;
    res.schedule.sending_bus = res.branch.first;
    res.schedule.receiving_bus = res.branch.second;
    res.schedule.frequency_hz = grid.nominal_frequency();
    res.observed = res.clean;
  }
  fill_flows(grid, sim, res);
  res.report = run_detectors(grid, res.observed, cfg);
  return res;
}

ScenarioResult run_random_shift_case(const ScenarioConfig& cfg) {
  cfg.validate();
  if (cfg.random_start_s > cfg.duration_s) {
    throw InvalidArgument("config: random.start_time must lie within the scenario duration");
  }
  const GridModel grid = scenario_grid(cfg);
  const SimulatedStream sim = simulate_stream(grid, cfg);
  for (BusId b : cfg.random_buses) (void)grid.bus_index(b);

  ScenarioResult res;
  res.name = "random-shift";
  res.clean = sim.measured;
  const std::size_t n = sim.truth.size();
  const std::size_t start = std::min(frame_index(cfg.random_start_s, cfg.frame_rate), n - 1);
  res.branch = orient(grid, sim.truth[start].theta, cfg.attack_branch);

  // Size of one relentless step at the onset, used as the unit of the
  // random offsets.
  double zeta = 0.0;
  try {
    zeta = attack::impact_threshold(
        grid, res.branch.first, res.branch.second,
        sim.truth[start].theta(static_cast<Eigen::Index>(grid.bus_index(res.branch.first))),
        sim.truth[start].theta(static_cast<Eigen::Index>(grid.bus_index(res.branch.second))),
        cfg.attack_steps);
  } catch (const TargetUnreachable&) {
    zeta = 0.0;
  }

  auto& sched = res.schedule;
  sched.support = cfg.random_buses;
  sched.sending_bus = res.branch.first;
  sched.receiving_bus = res.branch.second;
  sched.frequency_hz = grid.nominal_frequency();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto s = static_cast<Eigen::Index>(cfg.random_buses.size());
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(s);
  for (int e = 0;; ++e) {
    const double t = cfg.random_start_s + e;
    const std::size_t idx = frame_index(t, cfg.frame_rate);
    if (idx >= n) break;
    attack::AttackStep st;
    st.epoch = e + 1;
    st.t = t;
    st.frame = idx;
    st.zeta = zeta;
    st.cumulative.resize(s);
    for (Eigen::Index k = 0; k < s; ++k) st.cumulative(k) = unit(rng) * cfg.random_scale * zeta;
    st.increment = st.cumulative - prev;
    prev = st.cumulative;
    st.feasible = true;
    sched.steps.push_back(std::move(st));
  }
  res.observed = attack::apply_schedule(grid, res.clean, sched);
  fill_flows(grid, sim, res);
  res.report = run_detectors(grid, res.observed, cfg);
  return res;
}

const ForecastStudySummary* ForecastStudy::find(std::size_t trusted) const noexcept {
  for (const auto& s : summary) {
    if (s.trusted == trusted) return &s;
  }
  return nullptr;
}

ForecastStudy run_forecast_study(const ScenarioConfig& cfg) {
  cfg.validate();
  const GridModel grid = scenario_grid(cfg);
  ScenarioConfig clean_cfg = cfg;
  clean_cfg.stream_noise_variance_deg2 = 0.0;
  const SimulatedStream sim = simulate_stream(grid, clean_cfg);
  const std::size_t bus = grid.bus_index(cfg.forecast_bus);
  const std::size_t n = sim.truth.size();

  std::vector<double> truth(n);
  for (std::size_t k = 0; k < n; ++k) truth[k] = sim.truth[k].theta(static_cast<Eigen::Index>(bus));
  const double sigma = std::sqrt(cfg.noise_variance_deg2) * std::numbers::pi / 180.0;
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> noisy = truth;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t k = 0; k < n; ++k) noisy[k] += noise(rng);
  }

  ForecastStudy out;
  out.bus = cfg.forecast_bus;
  const std::size_t s0 = frame_index(cfg.forecast_start_s, cfg.frame_rate);
  const auto rule = forecast_rule(cfg);
  for (std::size_t L : cfg.forecast_trusted) {
    if (s0 + L + cfg.forecast_horizon > n) {
      throw InvalidArgument("forecast study: L = " + std::to_string(L) + " plus the horizon of " +
                            std::to_string(cfg.forecast_horizon) + " runs past the stream end");
    }
    hankel::HankelWindow w = hankel::HankelWindow::with_default_rows(
        std::vector<double>(noisy.begin() + static_cast<std::ptrdiff_t>(s0),
                            noisy.begin() + static_cast<std::ptrdiff_t>(s0 + L)));
    const double t_i = static_cast<double>(s0 + L) / cfg.frame_rate;
    const double tau_e = hankel::estimation_threshold(w.samples, t_i, kNoBadData, L);
    const hankel::ForecastResult fc = hankel::predict_horizon(w, cfg.forecast_horizon, rule);

    ForecastStudySummary sum;
    sum.trusted = L;
    sum.tau_e = tau_e;
    sum.first_rank = fc.rank.empty() ? 0 : fc.rank.front();
    bool run = true;
    for (std::size_t k = 0; k < fc.horizon(); ++k) {
      ForecastStudyRow row;
      row.trusted = L;
      row.step = k + 1;
      row.predicted = fc.predicted[k];
      row.actual = truth[s0 + L + k];
      row.error = std::abs(row.predicted - row.actual);
      row.tau_e = tau_e;
      if (run && row.error <= tau_e + 1e-12) {
        ++sum.horizon;
      } else {
        run = false;
      }
      out.rows.push_back(row);
    }
    out.summary.push_back(sum);
  }
  return out;
}

}  // namespace spoofsim::harness
