#include "spoofsim/attack.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "spoofsim/csv.hpp"
#include "spoofsim/errors.hpp"

namespace spoofsim::attack {
namespace {

// Both band inequalities must hold with at least this much room.
constexpr double kCertifySlack = 1e-10;

bool finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct Candidate {
  Eigen::VectorXd a;
  double objective;
  double preference;
};

}  // namespace

ProjectionMatrix compute_f_matrix(const Eigen::MatrixXd& h) {
  if (h.rows() < h.cols() || h.cols() == 0) {
    throw SingularSystem("compute_f_matrix: H must have at least as many rows as columns");
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
  if (qr.rank() < h.cols()) {
    throw SingularSystem("compute_f_matrix: H is rank deficient (rank " + std::to_string(qr.rank()) +
                         " < " + std::to_string(h.cols()) + "); check slack handling");
  }
  // H (H^T H)^-1 H^T = Q1 Q1^T with Q1 the thin orthonormal basis of range(H).
  const Eigen::MatrixXd q =
      Eigen::MatrixXd(qr.householderQ()) * Eigen::MatrixXd::Identity(h.rows(), h.cols());
  ProjectionMatrix out;
  out.f = q * q.transpose() - Eigen::MatrixXd::Identity(h.rows(), h.rows());
  out.f = 0.5 * (out.f + out.f.transpose());
  return out;
}

double impact_threshold(double x_pu, double p_lim_pu, double theta_i, double theta_j, int steps) {
  if (steps < 1) throw InvalidArgument("impact_threshold: T must be >= 1");
  if (!(x_pu > 0.0)) throw InvalidArgument("impact_threshold: reactance must be positive");
  const double bracket = std::abs(p_lim_pu) - (theta_i - theta_j) / x_pu;
  if (bracket < 0.0) {
    throw TargetUnreachable("impact_threshold: target unreachable, branch already carries " +
                            fmt((theta_i - theta_j) / x_pu) + " p.u. against a limit of " +
                            fmt(std::abs(p_lim_pu)) + " p.u.");
  }
  return x_pu * bracket / static_cast<double>(steps);
}

double impact_threshold(const GridModel& grid, BusId i, BusId j, double theta_i, double theta_j,
                        int steps) {
  const Branch& br = grid.branches()[grid.branch_index(i, j)];
  return impact_threshold(br.x_pu, br.mva_limit / grid.base_mva(), theta_i, theta_j, steps);
}

StepSolution solve_attack_step(const StepProblem& pb) {
  const auto s = pb.effect.cols();
  if (s < 1 || s > 2) throw InvalidArgument("solve_attack_step: support must have 1 or 2 entries");
  if (pb.preferred.size() != 0 && pb.preferred.size() != s) {
    throw InvalidArgument("solve_attack_step: preferred direction has the wrong length");
  }
  if (!finite(pb.effect) || !pb.preferred.allFinite() || !std::isfinite(pb.headroom) ||
      !std::isfinite(pb.zeta) || !std::isfinite(pb.epsilon)) {
    throw InvalidArgument("solve_attack_step: non-finite problem data");
  }
  if (pb.zeta < 0.0) throw InvalidArgument("solve_attack_step: zeta' must be >= 0");
  if (!(pb.epsilon > 0.0)) throw InvalidArgument("solve_attack_step: epsilon must be > 0");

  StepSolution out;
  out.a = Eigen::VectorXd::Zero(s);
  if (pb.headroom <= 0.0) {
    out.diagnostic = "no residual headroom (" + fmt(pb.headroom) + ")";
    return out;
  }
  const double margin = std::max(1e-3 * pb.epsilon, kCertifySlack);
  if (pb.epsilon <= 2.0 * margin + 2.0 * kCertifySlack) {
    out.diagnostic = "L1 band too narrow to certify (epsilon " + fmt(pb.epsilon) + ")";
    return out;
  }
  // ||E a|| is homogeneous, so over each slice of the band the minimum lies
  // on the inner edge ||a||_1 = c.
  const double c = pb.zeta + margin;
  const Eigen::MatrixXd m = pb.effect.transpose() * pb.effect;

  std::vector<Candidate> cands;
  auto add = [&](Eigen::VectorXd a) {
    const double obj = (pb.effect * a).norm();
    const double pref = pb.preferred.size() == 0 ? 0.0 : pb.preferred.dot(a);
    cands.push_back({std::move(a), obj, pref});
  };
  if (s == 1) {
    add(Eigen::VectorXd::Constant(1, c));
    add(Eigen::VectorXd::Constant(1, -c));
  } else {
    constexpr std::array<std::array<double, 2>, 4> signs{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
    for (const auto& sg : signs) {
      const Eigen::Vector2d u(sg[0], 0.0);
      const Eigen::Vector2d w(0.0, sg[1]);
      const Eigen::Vector2d d = u - w;
      // q(lambda) = (w + lambda d)^T M (w + lambda d) on lambda in [0, 1].
      const double qa = d.dot(m * d);
      const double qb = d.dot(m * w);
      add(c * u);
      add(c * w);
      if (qa > 0.0) {
        const double lam = -qb / qa;
        if (lam > 0.0 && lam < 1.0) add(c * (w + lam * d));
      }
    }
  }

  const double scale = 1.0 + c * std::sqrt(std::max(0.0, m.trace()));
  const double tie = 1e-12 * scale;
  const Candidate* best = &cands.front();
  for (const auto& cand : cands) {
    if (cand.objective < best->objective - tie ||
        (cand.objective <= best->objective + tie && cand.preference > best->preference + tie)) {
      best = &cand;
    }
  }

  if (best->objective > pb.headroom - kCertifySlack) {
    out.diagnostic = "headroom " + fmt(pb.headroom) + " below the least residual " +
                     fmt(best->objective) + " reachable in the band";
    return out;
  }
  const double l1 = best->a.lpNorm<1>();
  if (!(l1 - pb.zeta >= kCertifySlack && pb.zeta + pb.epsilon - l1 >= kCertifySlack)) {
    throw Error("solve_attack_step: certificate failed (||a||_1=" + fmt(l1) + ", zeta'=" +
                fmt(pb.zeta) + ", epsilon=" + fmt(pb.epsilon) + ")");
  }
  out.feasible = true;
  out.a = best->a;
  out.objective = best->objective;
  return out;
}

StepSolution solve_attack_step(const ProjectionMatrix& f, double headroom, double zeta,
                               double epsilon, std::span<const std::size_t> support,
                               const Eigen::VectorXd& preferred) {
  if (support.empty() || support.size() > 2) {
    throw InvalidArgument("solve_attack_step: support must have 1 or 2 entries");
  }
  if (support.size() == 2 && support[0] == support[1]) {
    throw InvalidArgument("solve_attack_step: support entries must differ");
  }
  StepProblem pb;
  pb.effect.resize(f.f.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (support[k] >= static_cast<std::size_t>(f.f.cols())) {
      throw InvalidArgument("solve_attack_step: support index out of range");
    }
    pb.effect.col(static_cast<Eigen::Index>(k)) = f.f.col(static_cast<Eigen::Index>(support[k]));
  }
  pb.preferred = preferred;
  pb.headroom = headroom;
  pb.zeta = zeta;
  pb.epsilon = epsilon;
  return solve_attack_step(pb);
}

double angle_to_time_shift(double angle_rad, double f0_hz) {
  if (!(f0_hz > 0.0)) throw InvalidArgument("angle_to_time_shift: f0 must be positive");
  return angle_rad / (2.0 * std::numbers::pi * f0_hz);
}

double time_shift_to_angle(double seconds, double f0_hz) {
  if (!(f0_hz > 0.0)) throw InvalidArgument("time_shift_to_angle: f0 must be positive");
  return 2.0 * std::numbers::pi * f0_hz * seconds;
}

HankelForecaster::HankelForecaster(std::size_t tau, std::size_t kappa, hankel::RankRule rule)
    : tau_(tau), kappa_(kappa == 0 ? tau / 2 : kappa), rule_(rule) {
  if (kappa_ < 2 || kappa_ + 1 > tau_) {
    throw InvalidArgument("HankelForecaster: need 2 <= kappa <= tau - 1");
  }
}

double HankelForecaster::forecast(std::span<const double> channel, std::size_t available,
                                  std::size_t target) const {
  if (available > channel.size() || available == 0) {
    throw InvalidArgument("forecast: available sample count out of range");
  }
  if (target < available) return channel[target];
  if (available < tau_) {
    throw InvalidArgument("forecast: only " + std::to_string(available) +
                          " samples available, window needs " + std::to_string(tau_));
  }
  hankel::HankelWindow w;
  w.samples.assign(channel.begin() + static_cast<std::ptrdiff_t>(available - tau_),
                   channel.begin() + static_cast<std::ptrdiff_t>(available));
  w.kappa = kappa_;
  return hankel::predict_horizon(w, target - available + 1, rule_).predicted.back();
}

double PerfectForesight::forecast(std::span<const double> channel, std::size_t /*available*/,
                                  std::size_t target) const {
  if (target >= channel.size()) throw InvalidArgument("forecast: target beyond the channel");
  return channel[target];
}

Eigen::VectorXd AttackSchedule::cumulative_at_frame(std::size_t frame) const {
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(support.size()));
  for (const auto& st : steps) {
    if (st.frame > frame) break;
    cum = st.cumulative;
  }
  return cum;
}

std::size_t AttackSchedule::accepted_steps() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const AttackStep& s) { return s.feasible; }));
}

double default_tau_r(std::size_t measurements, std::size_t states) {
  if (measurements <= states) {
    throw InvalidArgument("default_tau_r: need more measurements than states");
  }
  const boost::math::chi_squared dist(static_cast<double>(measurements - states));
  return std::sqrt(boost::math::quantile(dist, 0.95));
}

namespace {

void validate(const GridModel& grid, const AttackConfig& cfg) {
  if (cfg.steps < 1) throw InvalidArgument("attack: T must be >= 1");
  if (!(cfg.epsilon_fraction > 0.0)) throw InvalidArgument("attack: epsilon fraction must be > 0");
  if (!(cfg.lead_time_s >= 0.0)) throw InvalidArgument("attack: lead time must be >= 0");
  if (!(cfg.start_time_s >= 0.0)) throw InvalidArgument("attack: start time must be >= 0");
  if (cfg.tau_r && !(*cfg.tau_r > 0.0)) throw InvalidArgument("attack: tau_r must be > 0");
  (void)grid.branch_index(cfg.branch_from, cfg.branch_to);
  if (cfg.support.empty() || cfg.support.size() > 2) {
    throw InvalidArgument("attack: support must name one or two buses");
  }
  for (BusId b : cfg.support) {
    if (b != cfg.branch_from && b != cfg.branch_to) {
      throw InvalidArgument("attack: support bus " + std::to_string(b) +
                            " is not an end of the target branch");
    }
  }
  if (cfg.support.size() == 2 && cfg.support[0] == cfg.support[1]) {
    throw InvalidArgument("attack: support buses must differ");
  }
}

}  // namespace

AttackSchedule plan_relentless_attack(const GridModel& grid, const PhasorStream& clean,
                                      const detect::MeasurementModel& model,
                                      const AttackConfig& cfg, const Forecaster& forecaster) {
  validate(grid, cfg);
  if (clean.empty()) throw InvalidArgument("attack: empty stream");
  const double fr = clean.frame_rate;
  const std::size_t n_frames = clean.size();
  const Branch& br = grid.branches()[grid.branch_index(cfg.branch_from, cfg.branch_to)];
  const double x = br.x_pu;
  const double p_lim = br.mva_limit / grid.base_mva();

  AttackSchedule sched;
  sched.support = cfg.support;
  sched.frequency_hz = grid.nominal_frequency();
  sched.tau_r = cfg.tau_r ? *cfg.tau_r : default_tau_r(model.measurements(), model.states());

  // Orient the branch along its pre-attack flow so that pushing the sending
  // end up raises the flow toward +P_lim.
  const std::size_t f0 = std::min(frame_index(cfg.start_time_s, fr), n_frames - 1);
  const std::size_t ia = grid.bus_index(br.from);
  const std::size_t ib = grid.bus_index(br.to);
  const auto& th0 = clean.frames[f0].theta_meas;
  const bool forward = th0(static_cast<Eigen::Index>(ia)) >= th0(static_cast<Eigen::Index>(ib));
  sched.sending_bus = forward ? br.from : br.to;
  sched.receiving_bus = forward ? br.to : br.from;
  const std::size_t is = forward ? ia : ib;
  const std::size_t ir = forward ? ib : ia;

  const auto s = static_cast<Eigen::Index>(cfg.support.size());
  Eigen::VectorXd preferred(s);
  Eigen::MatrixXd h_support(model.h_full.rows(), s);
  for (Eigen::Index k = 0; k < s; ++k) {
    const BusId b = cfg.support[static_cast<std::size_t>(k)];
    preferred(k) = b == sched.sending_bus ? 1.0 / x : -1.0 / x;
    h_support.col(k) = model.h_full.col(static_cast<Eigen::Index>(grid.bus_index(b)));
  }

  // Residuals are judged after whitening by R^-1/2.
  const Eigen::VectorXd inv_sd = model.r.cwiseSqrt().cwiseInverse();
  const ProjectionMatrix fw = compute_f_matrix(inv_sd.asDiagonal() * model.h);
  const Eigen::MatrixXd effect = fw.f * (inv_sd.asDiagonal() * h_support);

  const std::vector<double> ch_s = clean.angle_channel(is);
  const std::vector<double> ch_r = clean.angle_channel(ir);
  const auto lead = static_cast<std::size_t>(std::ceil(cfg.lead_time_s * fr - 1e-9));

  Eigen::VectorXd cum = Eigen::VectorXd::Zero(s);
  for (int e = 0; e < cfg.steps; ++e) {
    const double t = cfg.start_time_s + e;
    const std::size_t idx = frame_index(t, fr);
    if (idx >= n_frames) break;

    AttackStep st;
    st.epoch = e + 1;
    st.t = t;
    st.frame = idx;
    st.increment = Eigen::VectorXd::Zero(s);
    st.cumulative = cum;
    st.actual_from = ch_s[idx];
    st.actual_to = ch_r[idx];

    if (idx < lead) {
      st.note = "no data before the lead time";
      sched.steps.push_back(std::move(st));
      continue;
    }
    const std::size_t seen = idx - lead;  // last frame the attacker holds
    try {
      st.forecast_from = forecaster.forecast(ch_s, seen + 1, idx);
      st.forecast_to = forecaster.forecast(ch_r, seen + 1, idx);
      const int divisor = cfg.divisor == ZetaDivisor::kInitialSteps ? cfg.steps : cfg.steps - e;
      st.forecast_valid = true;
      st.zeta = impact_threshold(x, p_lim, st.forecast_from, st.forecast_to, divisor);
    } catch (const Error& err) {
      st.note = err.what();
      sched.steps.push_back(std::move(st));
      continue;
    }
    st.epsilon = cfg.epsilon_fraction * st.zeta;

    Eigen::VectorXd z_seen = clean.frames[seen].z;
    const Eigen::VectorXd cum_seen = sched.cumulative_at_frame(seen);
    if (cum_seen.size() == s) z_seen += h_support * cum_seen;
    const detect::WlsResult wls = detect::wls_estimate(model, z_seen);
    st.headroom = sched.tau_r - detect::whitened_residual_norm(model, wls);

    if (!(st.epsilon > 0.0)) {
      st.note = "zero attack budget";
      sched.steps.push_back(std::move(st));
      continue;
    }
    StepProblem pb;
    pb.effect = effect;
    pb.preferred = preferred;
    pb.headroom = st.headroom;
    pb.zeta = st.zeta;
    pb.epsilon = st.epsilon;
    const StepSolution sol = solve_attack_step(pb);
    st.feasible = sol.feasible;
    st.objective = sol.objective;
    st.note = sol.diagnostic;
    if (sol.feasible) {
      st.increment = sol.a;
      cum += sol.a;
      st.cumulative = cum;
    }
    sched.steps.push_back(std::move(st));
  }
  return sched;
}

PhasorStream apply_schedule(const GridModel& grid, const PhasorStream& stream,
                            const AttackSchedule& schedule) {
  PhasorStream out = stream;
  if (schedule.steps.empty()) return out;
  const Eigen::MatrixXd h = grid::build_measurement_jacobian(grid);
  std::vector<Eigen::Index> cols;
  for (BusId b : schedule.support) cols.push_back(static_cast<Eigen::Index>(grid.bus_index(b)));

  const std::size_t first = schedule.steps.front().frame;
  std::size_t next = 0;
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = first; k < out.size(); ++k) {
    while (next < schedule.steps.size() && schedule.steps[next].frame <= k) {
      cum = schedule.steps[next].cumulative;
      ++next;
    }
    auto& fr = out.frames[k];
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double d = cum(static_cast<Eigen::Index>(c));
      fr.theta_meas(cols[c]) += d;
      fr.z += h.col(cols[c]) * d;
    }
    fr.provenance = Provenance::kAttacked;
  }
  return out;
}

std::string schedule_csv(const AttackSchedule& schedule) {
  std::vector<std::string> header{"epoch", "t_seconds"};
  for (BusId b : schedule.support) header.push_back("a_" + std::to_string(b));
  header.insert(header.end(), {"cum_shift_rad", "time_shift_us", "feasible"});
  std::string out = csv::join(header) + "\n";
  for (const auto& st : schedule.steps) {
    std::vector<std::string> row{std::to_string(st.epoch), csv::format(st.t)};
    for (Eigen::Index k = 0; k < st.increment.size(); ++k) row.push_back(csv::format(st.increment(k)));
    const double cum = st.cumulative.size() == 1 ? st.cumulative(0) : st.cumulative.lpNorm<1>();
    row.push_back(csv::format(cum));
    row.push_back(csv::format(angle_to_time_shift(cum, schedule.frequency_hz) * 1e6));
    row.push_back(st.feasible ? "1" : "0");
    out += csv::join(row) + "\n";
  }
  return out;
}

void write_schedule_csv(const AttackSchedule& schedule, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << schedule_csv(schedule);
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace spoofsim::attack
