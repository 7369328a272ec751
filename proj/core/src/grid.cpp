#include "spoofsim/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <string>
#include <unordered_map>

#include "spoofsim/csv.hpp"
#include "spoofsim/errors.hpp"

namespace spoofsim {

GridModel::GridModel(std::vector<Bus> buses, std::vector<Branch> branches, BusId slack_bus,
                     double base_mva, double nominal_frequency_hz)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      slack_bus_(slack_bus),
      base_mva_(base_mva),
      nominal_frequency_(nominal_frequency_hz) {
  if (buses_.size() < 2) throw InvalidArgument("grid needs at least two buses");
  if (!(base_mva_ > 0.0)) throw InvalidArgument("base_mva must be positive");
  if (!(nominal_frequency_ > 0.0)) throw InvalidArgument("nominal frequency must be positive");

  std::unordered_map<BusId, std::size_t> index;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!index.emplace(buses_[i].id, i).second) {
      throw InvalidArgument("duplicate bus id " + std::to_string(buses_[i].id));
    }
  }
  const auto slack = index.find(slack_bus_);
  if (slack == index.end()) {
    throw InvalidArgument("slack bus " + std::to_string(slack_bus_) + " is not a bus");
  }
  slack_index_ = slack->second;

  std::vector<std::vector<std::size_t>> adjacency(buses_.size());
  for (const auto& br : branches_) {
    const auto f = index.find(br.from);
    const auto t = index.find(br.to);
    if (f == index.end() || t == index.end()) {
      throw InvalidArgument("branch " + std::to_string(br.id) + " references an unknown bus");
    }
    if (br.from == br.to) throw InvalidArgument("branch " + std::to_string(br.id) + " is a loop");
    if (!(br.x_pu > 0.0)) {
      throw InvalidArgument("branch " + std::to_string(br.id) + " has non-positive reactance");
    }
    adjacency[f->second].push_back(t->second);
    adjacency[t->second].push_back(f->second);
  }

  std::vector<bool> seen(buses_.size(), false);
  std::queue<std::size_t> frontier;
  frontier.push(slack_index_);
  seen[slack_index_] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    for (const auto v : adjacency[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  if (reached != buses_.size()) throw InvalidArgument("grid is not connected");
}

std::size_t GridModel::bus_index(BusId id) const {
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].id == id) return i;
  }
  throw InvalidArgument("unknown bus " + std::to_string(id));
}

bool GridModel::has_bus(BusId id) const noexcept {
  return std::any_of(buses_.begin(), buses_.end(), [id](const Bus& b) { return b.id == id; });
}

std::optional<std::size_t> GridModel::find_branch(BusId a, BusId b) const noexcept {
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& br = branches_[k];
    if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return k;
  }
  return std::nullopt;
}

std::size_t GridModel::branch_index(BusId a, BusId b) const {
  if (auto k = find_branch(a, b)) return *k;
  throw InvalidArgument("no branch between " + std::to_string(a) + " and " + std::to_string(b));
}

GridModel GridModel::with_slack(BusId slack_bus) const {
  return GridModel(buses_, branches_, slack_bus, base_mva_, nominal_frequency_);
}

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::kTrue: return "true";
    case Provenance::kNoisy: return "noisy";
    case Provenance::kAttacked: return "attacked";
    case Provenance::kPredicted: return "predicted";
  }
  return "true";
}

std::optional<Provenance> parse_provenance(std::string_view s) noexcept {
  if (s == "true") return Provenance::kTrue;
  if (s == "noisy") return Provenance::kNoisy;
  if (s == "attacked") return Provenance::kAttacked;
  if (s == "predicted") return Provenance::kPredicted;
  return std::nullopt;
}

NoiseSpec NoiseSpec::from_angle_variance_deg2(double variance_deg2, double flow_sigma_pu) {
  if (variance_deg2 < 0.0) throw InvalidArgument("noise variance must be non-negative");
  return NoiseSpec{flow_sigma_pu, std::sqrt(variance_deg2) * std::numbers::pi / 180.0};
}

namespace grid {

GridModel parse_grid_csv(std::string_view buses_csv, std::string_view branches_csv,
                         BusId slack_bus, double base_mva, double nominal_frequency_hz) {
  const auto bus_table = csv::parse(buses_csv);
  const auto branch_table = csv::parse(branches_csv);

  auto require = [](const csv::Table& t, std::string_view name, std::string_view file) {
    if (auto c = t.column(name)) return *c;
    throw InvalidArgument(std::string(file) + " lacks column '" + std::string(name) + "'");
  };
  const auto b_id = require(bus_table, "id", "buses.csv");
  const auto b_load = require(bus_table, "load_mw", "buses.csv");
  const auto b_gen = require(bus_table, "gen_mw", "buses.csv");

  std::vector<Bus> buses;
  buses.reserve(bus_table.rows.size());
  for (const auto& row : bus_table.rows) {
    buses.push_back(Bus{static_cast<BusId>(csv::to_int(row[b_id])), csv::to_double(row[b_load]),
                        csv::to_double(row[b_gen])});
  }

  const auto k_id = require(branch_table, "id", "branches.csv");
  const auto k_from = require(branch_table, "from", "branches.csv");
  const auto k_to = require(branch_table, "to", "branches.csv");
  const auto k_x = require(branch_table, "x_pu", "branches.csv");
  const auto k_r = require(branch_table, "r_pu", "branches.csv");
  const auto k_lim = require(branch_table, "mva_limit", "branches.csv");

  std::vector<Branch> branches;
  branches.reserve(branch_table.rows.size());
  for (const auto& row : branch_table.rows) {
    branches.push_back(Branch{static_cast<int>(csv::to_int(row[k_id])),
                              static_cast<BusId>(csv::to_int(row[k_from])),
                              static_cast<BusId>(csv::to_int(row[k_to])), csv::to_double(row[k_x]),
                              csv::to_double(row[k_r]), csv::to_double(row[k_lim])});
  }
  return GridModel(std::move(buses), std::move(branches), slack_bus, base_mva,
                   nominal_frequency_hz);
}

GridModel load_grid_csv(const std::filesystem::path& buses_csv,
                        const std::filesystem::path& branches_csv, BusId slack_bus,
                        double base_mva, double nominal_frequency_hz) {
  return parse_grid_csv(csv::read_text(buses_csv), csv::read_text(branches_csv), slack_bus, base_mva,
                        nominal_frequency_hz);
}

Eigen::MatrixXd build_b_matrix(const GridModel& grid) {
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (const auto& br : grid.branches()) {
    if (!(br.x_pu > 0.0)) throw InvalidArgument("non-positive reactance");
    const auto i = static_cast<Eigen::Index>(grid.bus_index(br.from));
    const auto j = static_cast<Eigen::Index>(grid.bus_index(br.to));
    const double y = 1.0 / br.x_pu;
    b(i, i) += y;
    b(j, j) += y;
    b(i, j) -= y;
    b(j, i) -= y;
  }
  return b;
}

Eigen::VectorXd drop_slack(const GridModel& grid, const Eigen::VectorXd& v) {
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  if (v.size() != n) throw InvalidArgument("vector length differs from bus count");
  const auto s = static_cast<Eigen::Index>(grid.slack_index());
  Eigen::VectorXd out(n - 1);
  out << v.head(s), v.tail(n - s - 1);
  return out;
}

Eigen::VectorXd insert_slack(const GridModel& grid, const Eigen::VectorXd& reduced,
                             double slack_value) {
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  if (reduced.size() != n - 1) throw InvalidArgument("reduced vector has wrong length");
  const auto s = static_cast<Eigen::Index>(grid.slack_index());
  Eigen::VectorXd out(n);
  out << reduced.head(s), slack_value, reduced.tail(n - s - 1);
  return out;
}

InjectionVector balance_at_slack(const GridModel& grid, InjectionVector inj) {
  const auto s = static_cast<Eigen::Index>(grid.slack_index());
  inj.p(s) = 0.0;
  inj.p(s) = -inj.p.sum();
  return inj;
}

AngleState solve_dc_power_flow(const GridModel& grid, const InjectionVector& inj,
                               double timestamp) {
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  if (inj.p.size() != n) throw InvalidArgument("injection length differs from bus count");
  const auto s = static_cast<Eigen::Index>(grid.slack_index());

  const Eigen::MatrixXd b = build_b_matrix(grid);
  Eigen::MatrixXd reduced(n - 1, n - 1);
  reduced.topLeftCorner(s, s) = b.topLeftCorner(s, s);
  reduced.topRightCorner(s, n - s - 1) = b.topRightCorner(s, n - s - 1);
  reduced.bottomLeftCorner(n - s - 1, s) = b.bottomLeftCorner(n - s - 1, s);
  reduced.bottomRightCorner(n - s - 1, n - s - 1) = b.bottomRightCorner(n - s - 1, n - s - 1);

  const Eigen::VectorXd rhs = drop_slack(grid, inj.p);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reduced);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff()) {
    throw SingularSystem("reduced susceptance matrix is singular (disconnected grid?)");
  }
  const Eigen::VectorXd theta = ldlt.solve(rhs);
  if (!theta.allFinite()) throw SingularSystem("DC power flow produced non-finite angles");
  return AngleState{insert_slack(grid, theta), timestamp};
}

double branch_flow(const GridModel& grid, const Eigen::VectorXd& theta, std::size_t branch_index) {
  if (branch_index >= grid.branch_count()) throw InvalidArgument("branch index out of range");
  const auto& br = grid.branches()[branch_index];
  const auto i = static_cast<Eigen::Index>(grid.bus_index(br.from));
  const auto j = static_cast<Eigen::Index>(grid.bus_index(br.to));
  return (theta(i) - theta(j)) / br.x_pu;
}

double branch_flow(const GridModel& grid, const AngleState& state, std::size_t branch_index) {
  return branch_flow(grid, state.theta, branch_index);
}

double directed_flow(const GridModel& grid, const Eigen::VectorXd& theta, BusId a, BusId b) {
  const auto k = grid.branch_index(a, b);
  const double f = branch_flow(grid, theta, k);
  return grid.branches()[k].from == a ? f : -f;
}

double ac_branch_flow(double v_i, double v_j, double theta_i, double theta_j, double g_si,
                      double g_ij, double b_ij) noexcept {
  const double d = theta_i - theta_j;
  return v_i * v_i * (g_si + g_ij) - v_i * v_j * (g_ij * std::cos(d) + b_ij * std::sin(d));
}

Eigen::MatrixXd build_measurement_jacobian(const GridModel& grid) {
  const auto m = static_cast<Eigen::Index>(grid.branch_count());
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, n);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& br = grid.branches()[static_cast<std::size_t>(k)];
    h(k, static_cast<Eigen::Index>(grid.bus_index(br.from))) = 1.0 / br.x_pu;
    h(k, static_cast<Eigen::Index>(grid.bus_index(br.to))) = -1.0 / br.x_pu;
  }
  return h;
}

Eigen::MatrixXd reduced_jacobian(const GridModel& grid) {
  const Eigen::MatrixXd h = build_measurement_jacobian(grid);
  const auto n = h.cols();
  const auto s = static_cast<Eigen::Index>(grid.slack_index());
  Eigen::MatrixXd out(h.rows(), n - 1);
  out << h.leftCols(s), h.rightCols(n - s - 1);
  return out;
}

MeasurementFrame synthesize_measurements(const GridModel& grid, const Eigen::MatrixXd& jacobian,
                                         const AngleState& state, const NoiseSpec& noise,
                                         std::mt19937_64& rng) {
  if (noise.flow_sigma_pu < 0.0 || noise.angle_sigma_rad < 0.0) {
    throw InvalidArgument("noise sigma must be non-negative");
  }
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  if (state.theta.size() != n || jacobian.cols() != n) {
    throw InvalidArgument("state or jacobian does not match the grid");
  }
  MeasurementFrame frame;
  frame.timestamp = state.timestamp;
  frame.z = jacobian * state.theta;
  frame.theta_meas = state.theta;
  const bool noisy = noise.flow_sigma_pu > 0.0 || noise.angle_sigma_rad > 0.0;
  if (noise.flow_sigma_pu > 0.0) {
    std::normal_distribution<double> e(0.0, noise.flow_sigma_pu);
    for (Eigen::Index k = 0; k < frame.z.size(); ++k) frame.z(k) += e(rng);
  }
  if (noise.angle_sigma_rad > 0.0) {
    std::normal_distribution<double> e(0.0, noise.angle_sigma_rad);
    for (Eigen::Index k = 0; k < n; ++k) frame.theta_meas(k) += e(rng);
  }
  frame.provenance = noisy ? Provenance::kNoisy : Provenance::kTrue;
  return frame;
}

MeasurementFrame synthesize_measurements(const GridModel& grid, const AngleState& state,
                                         std::uint64_t noise_seed, const NoiseSpec& noise) {
  std::mt19937_64 rng(noise_seed);
  return synthesize_measurements(grid, build_measurement_jacobian(grid), state, noise, rng);
}

double profile_load_mw(const GridModel& grid, const LoadProfile& profile, double t) {
  if (t < 0.0) throw InvalidArgument("time must be non-negative");
  const auto base = grid.buses()[grid.bus_index(profile.bus)].load_mw;
  const auto steps = std::count_if(profile.step_times.begin(), profile.step_times.end(),
                                   [t](double s) { return t >= s; });
  return base * (1.0 + profile.step_fraction * static_cast<double>(steps));
}

InjectionVector scenario_injections(const GridModel& grid, const LoadProfile& profile, double t) {
  if (t < 0.0) throw InvalidArgument("time must be non-negative");
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  InjectionVector inj{Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& bus = grid.buses()[static_cast<std::size_t>(i)];
    inj.p(i) = (bus.gen_mw - bus.load_mw) / grid.base_mva();
  }
  const auto k = static_cast<Eigen::Index>(grid.bus_index(profile.bus));
  const auto base_load = grid.buses()[static_cast<std::size_t>(k)].load_mw;
  inj.p(k) -= (profile_load_mw(grid, profile, t) - base_load) / grid.base_mva();
  return balance_at_slack(grid, std::move(inj));
}

}  // namespace grid
}  // namespace spoofsim
