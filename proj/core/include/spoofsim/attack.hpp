#pragma once

// Relentless incremental time-shift attack: each GPS second the attacker
// adds a small phase increment at the spoofed PMUs, sized so the increments
// add up to a flow-limit violation while each one stays inside the bad-data
// residual budget.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spoofsim/detectors.hpp"
#include "spoofsim/grid.hpp"
#include "spoofsim/hankel.hpp"
#include "spoofsim/stream.hpp"

namespace spoofsim::attack {

// F = H (H^T H)^-1 H^T - I: minus the projector onto the complement of the
// column space of H, so ||F a|| is the residual an injection a leaves.
struct ProjectionMatrix {
  Eigen::MatrixXd f;
};

// Throws SingularSystem when H lacks full column rank.
[[nodiscard]] ProjectionMatrix compute_f_matrix(const Eigen::MatrixXd& h);

// zeta' = x [ |P_lim| - (theta_i - theta_j) / x ] / T, all in p.u./radians.
// Throws TargetUnreachable when the bracket is negative (already over the
// limit) and InvalidArgument for T < 1 or x <= 0.
[[nodiscard]] double impact_threshold(double x_pu, double p_lim_pu, double theta_i, double theta_j,
                                      int steps);
// Branch (i, j) looked up in the grid; P_lim = mva_limit / base_mva.
[[nodiscard]] double impact_threshold(const GridModel& grid, BusId i, BusId j, double theta_i,
                                      double theta_j, int steps);

// One attack increment: minimize ||E a||_2 subject to
//   ||E a||_2 <= headroom  and  zeta < ||a||_1 < zeta + epsilon,
// with a of dimension 1 or 2. `effect` maps the increment to the residual
// it produces; `preferred` breaks ties toward larger preferred . a.
struct StepProblem {
  Eigen::MatrixXd effect;     // m x s, s in {1, 2}
  Eigen::VectorXd preferred;  // s, may be empty
  double headroom = 0.0;
  double zeta = 0.0;
  double epsilon = 0.0;
};

struct StepSolution {
  bool feasible = false;
  Eigen::VectorXd a;          // zero when infeasible
  double objective = 0.0;     // ||E a||_2
  std::string diagnostic;     // why a step was rejected
};

// Exact: the L1 band is split by sign pattern into linear slices and the
// quadratic is minimized on each. The optimum sits a hair inside the lower
// band edge so both band inequalities hold strictly.
// Infeasible problems return feasible = false; non-finite data throws
// InvalidArgument.
[[nodiscard]] StepSolution solve_attack_step(const StepProblem& problem);

// Same problem with a living in the column space of F: the increment is
// nonzero only at the listed indices and the residual is F a.
[[nodiscard]] StepSolution solve_attack_step(const ProjectionMatrix& f, double headroom, double zeta,
                                             double epsilon, std::span<const std::size_t> support,
                                             const Eigen::VectorXd& preferred = {});

// Delta t = a / (2 pi f0) and its inverse. Throw InvalidArgument for f0 <= 0.
[[nodiscard]] double angle_to_time_shift(double angle_rad, double f0_hz);
[[nodiscard]] double time_shift_to_angle(double seconds, double f0_hz);

// Predicts the value of a channel at index `target` from its first
// `available` samples.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  [[nodiscard]] virtual double forecast(std::span<const double> channel, std::size_t available,
                                        std::size_t target) const = 0;
};

// Recursive Hankel prediction over the last tau available samples.
class HankelForecaster final : public Forecaster {
 public:
  HankelForecaster(std::size_t tau, std::size_t kappa, hankel::RankRule rule);
  [[nodiscard]] double forecast(std::span<const double> channel, std::size_t available,
                                std::size_t target) const override;

 private:
  std::size_t tau_;
  std::size_t kappa_;
  hankel::RankRule rule_;
};

// Reads the answer off the channel; a baseline that isolates the optimizer
// from forecast error.
class PerfectForesight final : public Forecaster {
 public:
  [[nodiscard]] double forecast(std::span<const double> channel, std::size_t available,
                                std::size_t target) const override;
};

enum class ZetaDivisor { kInitialSteps, kRemainingSteps };

struct AttackConfig {
  BusId branch_from = 13;           // target branch, either orientation
  BusId branch_to = 23;
  std::vector<BusId> support{23};   // spoofed buses, subset of the branch ends
  int steps = 20;                   // T
  double epsilon_fraction = 0.05;   // epsilon = fraction * zeta'
  double lead_time_s = 0.15;        // Ts
  double start_time_s = 2.0;
  std::optional<double> tau_r;      // default: chi-square 95% gate on whitened residuals
  ZetaDivisor divisor = ZetaDivisor::kInitialSteps;
};

struct AttackStep {
  int epoch = 0;          // 1-based
  double t = 0.0;         // seconds
  std::size_t frame = 0;  // first frame carrying this increment
  Eigen::VectorXd increment;   // per support bus, radians
  Eigen::VectorXd cumulative;  // per support bus, radians, after this step
  double zeta = 0.0;
  double epsilon = 0.0;
  double headroom = 0.0;
  double objective = 0.0;
  double forecast_from = 0.0;  // forecast angle at the sending end
  double forecast_to = 0.0;    // forecast angle at the receiving end
  double actual_from = 0.0;
  double actual_to = 0.0;
  bool forecast_valid = false;  // forecasts and zeta' were computed
  bool feasible = false;
  std::string note;

  [[nodiscard]] double l1() const { return increment.lpNorm<1>(); }
};

struct AttackSchedule {
  std::vector<BusId> support;
  BusId sending_bus = 0;    // flow runs sending -> receiving before the attack
  BusId receiving_bus = 0;
  double tau_r = 0.0;
  double frequency_hz = 60.0;
  std::vector<AttackStep> steps;

  [[nodiscard]] bool empty() const noexcept { return steps.empty(); }
  // Cumulative shift per support bus in force at frame index `frame`.
  [[nodiscard]] Eigen::VectorXd cumulative_at_frame(std::size_t frame) const;
  [[nodiscard]] std::size_t accepted_steps() const noexcept;
};

// tau^r default: sqrt of the 95% chi-square quantile with m - n degrees of
// freedom.
[[nodiscard]] double default_tau_r(std::size_t measurements, std::size_t states);

// Plans one increment per epoch t = start, start + 1, ..., start + T - 1
// that lies inside the stream. At epoch t the attacker sees frames up to
// t - Ts, forecasts the branch-end angles at t, recomputes zeta' and solves
// for the increment. The residual budget is evaluated on the last frame the
// attacker has seen, with its own earlier increments applied.
[[nodiscard]] AttackSchedule plan_relentless_attack(const GridModel& grid,
                                                    const PhasorStream& clean,
                                                    const detect::MeasurementModel& model,
                                                    const AttackConfig& cfg,
                                                    const Forecaster& forecaster);

// Shifts the supported angles (and the flows derived from them) of every
// frame by the cumulative increment in force; touched frames are marked
// attacked.
[[nodiscard]] PhasorStream apply_schedule(const GridModel& grid, const PhasorStream& stream,
                                          const AttackSchedule& schedule);

// epoch,t_seconds,a_<bus>...,cum_shift_rad,time_shift_us,feasible
// cum_shift_rad and time_shift_us refer to the first support bus when the
// support has one element and to the L1 total otherwise.
[[nodiscard]] std::string schedule_csv(const AttackSchedule& schedule);
void write_schedule_csv(const AttackSchedule& schedule, const std::filesystem::path& path);

}  // namespace spoofsim::attack
