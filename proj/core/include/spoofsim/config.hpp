#pragma once

// Scenario configuration and its flat text form:
//
//   # comment
//   scenario.duration_s = 15
//   attack.support = 23
//
// One dotted key per line; list values are comma separated, bus pairs are
// written 13-23. Every key has a default, so an empty file is valid.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spoofsim/grid.hpp"

namespace spoofsim {

using BusPair = std::pair<BusId, BusId>;

enum class ForecastKind { kHankel, kPerfect };
enum class GradientSource { kError, kAngle };

struct ScenarioConfig {
  // scenario
  double duration_s = 15.0;
  double frame_rate = 60.0;
  std::uint64_t seed = 1;

  // grid
  BusId slack_bus = 23;

  // load
  LoadProfile load{};

  // noise
  double noise_variance_deg2 = 0.5;         // operator's assumed PMU angle variance
  double stream_noise_variance_deg2 = 0.0;  // noise actually added to the scenario stream
  double flow_sigma_pu = 0.0;

  // attack
  bool attack_enabled = true;
  double attack_start_s = 2.0;
  BusPair attack_branch{13, 23};
  std::vector<BusId> attack_support{23};
  int attack_steps = 20;
  double attack_epsilon_fraction = 0.05;
  double attack_lead_time_s = 0.15;
  std::optional<double> attack_tau_r;
  bool attack_divide_remaining = false;
  ForecastKind attack_forecast = ForecastKind::kHankel;

  // hankel (attacker look-ahead)
  std::size_t hankel_trusted = 50;  // L
  std::size_t hankel_tau = 50;
  std::size_t hankel_kappa = 0;     // 0 = floor(tau / 2)
  double hankel_energy = 0.99;
  int hankel_rank = 0;              // > 0 pins the rank

  // detectors
  double beta = 3.0;
  std::vector<std::size_t> detect_windows{80, 100, 120};
  std::vector<BusId> monitor_buses{13, 23, 12};
  std::vector<BusPair> gradient_pairs{{13, 23}, {13, 12}};
  std::size_t gradient_window = 100;
  int detect_hankel_rank = 1;
  double gradient_deadband = 1e-9;
  GradientSource gradient_source = GradientSource::kError;
  std::size_t gradient_rate_window = 60;
  double kf_q = 1e-4;
  double dkf_cap = 1e6;

  // forecast study
  BusId forecast_bus = 3;
  std::vector<std::size_t> forecast_trusted{20, 30, 50};
  std::size_t forecast_horizon = 60;
  double forecast_start_s = 0.0;  // first trusted sample

  // random-shift case
  std::vector<BusId> random_buses{3, 18};
  double random_start_s = 5.0;
  double random_scale = 10.0;  // shift magnitude in units of the nominal zeta'

  // Throws InvalidArgument when an invariant is violated.
  void validate() const;
};

struct ConfigKeyInfo {
  std::string key;
  std::string help;
};

// Every recognised key with a one-line description, in documentation order.
[[nodiscard]] const std::vector<ConfigKeyInfo>& config_keys();

// Current value of a key rendered as config text.
[[nodiscard]] std::string config_value(const ScenarioConfig& cfg, std::string_view key);

// Sets one key. Unknown keys throw InvalidArgument listing every valid key;
// malformed values throw InvalidArgument naming the key.
void apply_setting(ScenarioConfig& cfg, std::string_view key, std::string_view value);

// "key=value" form used by command-line overrides.
void apply_override(ScenarioConfig& cfg, std::string_view assignment);

// Applies every assignment in a config text on top of cfg.
void apply_config_text(ScenarioConfig& cfg, std::string_view text);
[[nodiscard]] ScenarioConfig load_config_file(const std::filesystem::path& path);

// Full config text, one key per line, that reloads to the same config.
[[nodiscard]] std::string dump_config(const ScenarioConfig& cfg);

}  // namespace spoofsim
