#pragma once

// End-to-end runs: simulate the load-step scenario, plan and inject the
// attack, evaluate every detector, and export plot-ready tables.

#include <filesystem>
#include <string>
#include <vector>

#include "spoofsim/attack.hpp"
#include "spoofsim/config.hpp"
#include "spoofsim/detectors.hpp"
#include "spoofsim/grid.hpp"
#include "spoofsim/stream.hpp"

namespace spoofsim::harness {

struct SimulatedStream {
  std::vector<AngleState> truth;  // physical angles per frame
  PhasorStream measured;          // what the PMUs report
};

// Frames at t = k / frame_rate for k < round(duration * frame_rate).
[[nodiscard]] SimulatedStream simulate_stream(const GridModel& grid, const ScenarioConfig& cfg);

// Builds the grid a config asks for.
[[nodiscard]] GridModel scenario_grid(const ScenarioConfig& cfg);

struct HankelTrace {
  BusId bus = 0;
  std::size_t window = 0;
  std::vector<double> error;  // NaN during warm-up
};

struct GradientTrace {
  BusPair pair{};
  detect::GradientReport report;
};

struct DetectorReport {
  std::vector<double> t;
  detect::ResidualSeries wls;
  detect::ResidualSeries dkf;
  std::vector<HankelTrace> hankel;
  std::vector<GradientTrace> gradients;
  std::vector<detect::DetectorVerdict> verdicts;

  [[nodiscard]] const HankelTrace* find_hankel(BusId bus, std::size_t window) const noexcept;
  [[nodiscard]] const GradientTrace* find_gradient(BusId a, BusId b) const noexcept;
};

// Runs all detectors over a finished stream. Independent detectors are
// evaluated concurrently; the report does not depend on scheduling.
[[nodiscard]] DetectorReport run_detectors(const GridModel& grid, const PhasorStream& stream,
                                           const ScenarioConfig& cfg);

struct ForecastLogEntry {
  int epoch = 0;
  double t = 0.0;
  BusId bus = 0;
  double forecast = 0.0;
  double actual = 0.0;
  double error = 0.0;
  double tau_e = 0.0;
  // A 1e-12 allowance absorbs round-off when tau_e is exactly 0.
  [[nodiscard]] bool within() const noexcept { return error <= tau_e + 1e-12; }
};

struct ScenarioResult {
  std::string name;
  std::vector<double> t;
  std::vector<double> true_mva;       // physical flow on the target branch
  std::vector<double> perceived_mva;  // flow implied by the reported angles
  double limit_mva = 0.0;
  double critical_mva = 0.0;          // 95% of the limit
  BusPair branch{};                   // oriented along the pre-attack flow
  attack::AttackSchedule schedule;
  DetectorReport report;
  std::vector<ForecastLogEntry> forecast_log;
  PhasorStream clean;
  PhasorStream observed;
};

// The load-step scenario with the relentless attack on the target branch.
[[nodiscard]] ScenarioResult run_paper_scenario(const ScenarioConfig& cfg);

// Clean scenario with seeded random jumps at the configured buses, one new
// offset per second from random.start_time, each drawn uniformly from
// +-random.scale x the nominal zeta' of the target branch.
[[nodiscard]] ScenarioResult run_random_shift_case(const ScenarioConfig& cfg);

struct ForecastStudyRow {
  std::size_t trusted = 0;  // L
  std::size_t step = 0;     // 1-based horizon
  double predicted = 0.0;
  double actual = 0.0;      // noiseless angle at that step
  double error = 0.0;
  double tau_e = 0.0;
};

struct ForecastStudySummary {
  std::size_t trusted = 0;
  double tau_e = 0.0;
  std::size_t horizon = 0;  // leading steps with error <= tau_e
  int first_rank = 0;
};

struct ForecastStudy {
  BusId bus = 0;
  std::vector<ForecastStudyRow> rows;
  std::vector<ForecastStudySummary> summary;
  [[nodiscard]] const ForecastStudySummary* find(std::size_t trusted) const noexcept;
};

// Forecasts one noisy bus-angle channel from L trusted samples, for every L
// in forecast.trusted_list, and measures each step against the noiseless
// angle.
[[nodiscard]] ForecastStudy run_forecast_study(const ScenarioConfig& cfg);

// Writes flows.csv, residuals.csv, hankel_errors.csv, gradients.csv,
// schedule.csv and summary.txt. Output bytes depend only on the result.
// Throws IoError naming the path on failure.
void export_results(const ScenarioResult& result, const std::filesystem::path& out_dir);
// residuals.csv, hankel_errors.csv, gradients.csv and summary.txt only.
void export_detector_report(const ScenarioResult& result, const std::filesystem::path& out_dir);
void export_forecast_study(const ForecastStudy& study, const std::filesystem::path& out_dir);

// The verdict block written to summary.txt.
[[nodiscard]] std::string summary_text(const ScenarioResult& result);

}  // namespace spoofsim::harness
