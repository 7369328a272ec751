#pragma once

// Static network model and the lossless DC power flow that stands in for a
// full dynamic simulator. Angles are radians, flows and injections are per
// unit on GridModel::base_mva().

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace spoofsim {

using BusId = int;

struct Bus {
  BusId id = 0;
  double load_mw = 0.0;
  double gen_mw = 0.0;
};

struct Branch {
  int id = 0;
  BusId from = 0;
  BusId to = 0;
  double x_pu = 0.0;
  double r_pu = 0.0;
  double mva_limit = 0.0;
};

// Immutable after construction; safe to share across threads.
class GridModel {
 public:
  // Validates: at least two buses, ids unique, every branch endpoint exists,
  // x > 0, slack exists, graph connected. Throws InvalidArgument otherwise.
  GridModel(std::vector<Bus> buses, std::vector<Branch> branches, BusId slack_bus,
            double base_mva = 100.0, double nominal_frequency_hz = 60.0);

  [[nodiscard]] const std::vector<Bus>& buses() const noexcept { return buses_; }
  [[nodiscard]] const std::vector<Branch>& branches() const noexcept { return branches_; }
  [[nodiscard]] std::size_t bus_count() const noexcept { return buses_.size(); }
  [[nodiscard]] std::size_t branch_count() const noexcept { return branches_.size(); }
  [[nodiscard]] BusId slack_bus() const noexcept { return slack_bus_; }
  [[nodiscard]] std::size_t slack_index() const noexcept { return slack_index_; }
  [[nodiscard]] double base_mva() const noexcept { return base_mva_; }
  [[nodiscard]] double nominal_frequency() const noexcept { return nominal_frequency_; }

  // Position of a bus id in buses(); throws InvalidArgument for unknown ids.
  [[nodiscard]] std::size_t bus_index(BusId id) const;
  [[nodiscard]] bool has_bus(BusId id) const noexcept;

  // First branch joining a and b in either orientation.
  [[nodiscard]] std::optional<std::size_t> find_branch(BusId a, BusId b) const noexcept;
  // As find_branch, but throws InvalidArgument when absent.
  [[nodiscard]] std::size_t branch_index(BusId a, BusId b) const;

  // Copy of this model with a different slack bus.
  [[nodiscard]] GridModel with_slack(BusId slack_bus) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  BusId slack_bus_;
  std::size_t slack_index_ = 0;
  double base_mva_;
  double nominal_frequency_;
};

// Per-bus net injection (generation minus load), per unit, indexed like
// GridModel::buses().
struct InjectionVector {
  Eigen::VectorXd p;
};

struct AngleState {
  Eigen::VectorXd theta;  // radians, theta[slack_index] == 0
  double timestamp = 0.0;
};

enum class Provenance : std::uint8_t { kTrue, kNoisy, kAttacked, kPredicted };

[[nodiscard]] std::string_view to_string(Provenance p) noexcept;
[[nodiscard]] std::optional<Provenance> parse_provenance(std::string_view s) noexcept;

struct MeasurementFrame {
  double timestamp = 0.0;
  Eigen::VectorXd z;           // branch flows, p.u., one per branch
  Eigen::VectorXd theta_meas;  // bus angles, radians
  Provenance provenance = Provenance::kTrue;
};

// Standard deviations of the synthetic PMU errors.
struct NoiseSpec {
  double flow_sigma_pu = 0.0;
  double angle_sigma_rad = 0.0;

  // Angle noise given a variance in deg^2.
  static NoiseSpec from_angle_variance_deg2(double variance_deg2, double flow_sigma_pu = 0.0);
};

// Piecewise-constant load schedule: the load at `bus` grows by
// step_fraction * base load at every entry of step_times (right-continuous).
struct LoadProfile {
  BusId bus = 13;
  std::vector<double> step_times{5.0, 9.0, 13.0};
  double step_fraction = 0.5;
};

namespace grid {

[[nodiscard]] GridModel load_ieee24_rts(BusId slack_bus = 23);

// Parses the buses.csv / branches.csv pair (lines starting with '#' are
// comments). Columns: id,load_mw,gen_mw and id,from,to,x_pu,r_pu,mva_limit.
[[nodiscard]] GridModel parse_grid_csv(std::string_view buses_csv, std::string_view branches_csv,
                                       BusId slack_bus, double base_mva = 100.0,
                                       double nominal_frequency_hz = 60.0);
[[nodiscard]] GridModel load_grid_csv(const std::filesystem::path& buses_csv,
                                      const std::filesystem::path& branches_csv, BusId slack_bus,
                                      double base_mva = 100.0, double nominal_frequency_hz = 60.0);

// Nodal susceptance matrix of the DC model: B[i][j] = -sum 1/x over the
// branches joining i and j, B[i][i] = sum over incident branches of 1/x.
[[nodiscard]] Eigen::MatrixXd build_b_matrix(const GridModel& grid);

// Solves B'theta' = p' with the slack row and column removed. The slack
// entry of inj is ignored (it absorbs the imbalance). Throws SingularSystem
// if the reduced matrix cannot be factored.
[[nodiscard]] AngleState solve_dc_power_flow(const GridModel& grid, const InjectionVector& inj,
                                             double timestamp = 0.0);

// Injections as seen after the solve: the slack entry set to minus the sum
// of the others.
[[nodiscard]] InjectionVector balance_at_slack(const GridModel& grid, InjectionVector inj);

// DC flow from->to of a branch, p.u.
[[nodiscard]] double branch_flow(const GridModel& grid, const Eigen::VectorXd& theta,
                                 std::size_t branch_index);
[[nodiscard]] double branch_flow(const GridModel& grid, const AngleState& state,
                                 std::size_t branch_index);
// Flow measured in the direction a->b along the first branch joining them.
[[nodiscard]] double directed_flow(const GridModel& grid, const Eigen::VectorXd& theta, BusId a,
                                   BusId b);

// Real power on an AC branch, p.u. Kept to quantify the DC approximation.
[[nodiscard]] double ac_branch_flow(double v_i, double v_j, double theta_i, double theta_j,
                                    double g_si, double g_ij, double b_ij) noexcept;

// Branch-flow Jacobian in bus angles, m x n: row k has +1/x at its from bus
// and -1/x at its to bus.
[[nodiscard]] Eigen::MatrixXd build_measurement_jacobian(const GridModel& grid);

// Jacobian with the slack column removed (full column rank for a connected
// grid). Used by every estimator.
[[nodiscard]] Eigen::MatrixXd reduced_jacobian(const GridModel& grid);

// Removes / reinserts the slack entry of a bus-indexed vector.
[[nodiscard]] Eigen::VectorXd drop_slack(const GridModel& grid, const Eigen::VectorXd& v);
[[nodiscard]] Eigen::VectorXd insert_slack(const GridModel& grid, const Eigen::VectorXd& reduced,
                                           double slack_value = 0.0);

// z = H theta + e_flow and theta_meas = theta + e_angle, both drawn from rng.
[[nodiscard]] MeasurementFrame synthesize_measurements(const GridModel& grid,
                                                       const Eigen::MatrixXd& jacobian,
                                                       const AngleState& state,
                                                       const NoiseSpec& noise,
                                                       std::mt19937_64& rng);
[[nodiscard]] MeasurementFrame synthesize_measurements(const GridModel& grid,
                                                       const AngleState& state,
                                                       std::uint64_t noise_seed,
                                                       const NoiseSpec& noise);

// Net injections at time t (seconds) for a load profile. The slack entry is
// balanced. Throws InvalidArgument for t < 0.
[[nodiscard]] InjectionVector scenario_injections(const GridModel& grid, const LoadProfile& profile,
                                                  double t);

// Load at the profile bus at time t, MW.
[[nodiscard]] double profile_load_mw(const GridModel& grid, const LoadProfile& profile, double t);

}  // namespace grid
}  // namespace spoofsim
