#include "spoofsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include "spoofsim/csv.hpp"
#include "spoofsim/errors.hpp"

namespace spoofsim {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw InvalidArgument("config: " + std::string(key) + " = '" + std::string(value) +
                        "' is not " + std::string(want));
}

double parse_double(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

long long parse_int(std::string_view key, std::string_view v) {
  v = trim(v);
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  const long long n = parse_int(key, v);
  if (n < 0) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(n);
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "an unsigned integer");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean (true/false)");
}

BusPair parse_pair(std::string_view key, std::string_view v) {
  const auto parts = split(v, '-');
  if (parts.size() != 2) bad_value(key, v, "a bus pair like 13-23");
  return {static_cast<BusId>(parse_int(key, parts[0])), static_cast<BusId>(parse_int(key, parts[1]))};
}

template <class T, class F>
std::vector<T> parse_list(std::string_view key, std::string_view v, F item) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (auto part : split(v, ',')) out.push_back(item(key, part));
  return out;
}

std::vector<BusId> parse_buses(std::string_view key, std::string_view v) {
  return parse_list<BusId>(key, v, [](std::string_view k, std::string_view p) {
    return static_cast<BusId>(parse_int(k, p));
  });
}

std::string fmt(double v) { return csv::format(v); }

template <class T, class F>
std::string fmt_list(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ",";
    out += f(xs[k]);
  }
  return out;
}

std::string fmt_pair(const BusPair& p) {
  return std::to_string(p.first) + "-" + std::to_string(p.second);
}

struct Entry {
  std::string key;
  std::string help;
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, std::string_view)> set;
};

#define SPOOFSIM_NUM(KEY, FIELD, HELP)                                          \
  Entry {                                                                       \
    KEY, HELP, [](const ScenarioConfig& c) { return fmt(c.FIELD); },           \
        [](ScenarioConfig& c, std::string_view v) { c.FIELD = parse_double(KEY, v); } \
  }
#define SPOOFSIM_SIZE(KEY, FIELD, HELP)                                         \
  Entry {                                                                       \
    KEY, HELP, [](const ScenarioConfig& c) { return std::to_string(c.FIELD); }, \
        [](ScenarioConfig& c, std::string_view v) { c.FIELD = parse_size(KEY, v); } \
  }
#define SPOOFSIM_INT(KEY, FIELD, HELP)                                          \
  Entry {                                                                       \
    KEY, HELP, [](const ScenarioConfig& c) { return std::to_string(c.FIELD); }, \
        [](ScenarioConfig& c, std::string_view v) {                             \
          c.FIELD = static_cast<decltype(c.FIELD)>(parse_int(KEY, v));          \
        }                                                                       \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(SPOOFSIM_NUM("scenario.duration_s", duration_s, "simulated time span, seconds"));
    t.push_back(SPOOFSIM_NUM("scenario.frame_rate", frame_rate, "PMU frames per second"));
    t.push_back({"scenario.seed", "seed for every random draw in a run",
                 [](const ScenarioConfig& c) { return std::to_string(c.seed); },
                 [](ScenarioConfig& c, std::string_view v) { c.seed = parse_u64("scenario.seed", v); }});
    t.push_back(SPOOFSIM_INT("grid.slack_bus", slack_bus, "slack (angle reference) bus"));
    t.push_back(SPOOFSIM_INT("load.bus", load.bus, "bus whose load steps up"));
    t.push_back({"load.step_times", "times of the load steps, seconds",
                 [](const ScenarioConfig& c) { return fmt_list(c.load.step_times, fmt); },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.load.step_times = parse_list<double>("load.step_times", v, parse_double);
                 }});
    t.push_back(SPOOFSIM_NUM("load.step_fraction", load.step_fraction,
                             "load added per step as a fraction of the base load"));
    t.push_back(SPOOFSIM_NUM("noise.variance_deg2", noise_variance_deg2,
                             "PMU angle noise variance assumed by the operator, deg^2"));
    t.push_back(SPOOFSIM_NUM("noise.stream_variance_deg2", stream_noise_variance_deg2,
                             "angle noise variance added to the scenario stream, deg^2"));
    t.push_back(SPOOFSIM_NUM("noise.flow_sigma_pu", flow_sigma_pu,
                             "extra flow measurement noise std dev, p.u."));
    t.push_back({"attack.enabled", "run the attack in scenario runs",
                 [](const ScenarioConfig& c) { return std::string(c.attack_enabled ? "true" : "false"); },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.attack_enabled = parse_bool("attack.enabled", v);
                 }});
    t.push_back(SPOOFSIM_NUM("attack.start_time", attack_start_s, "first attack epoch, seconds"));
    t.push_back({"attack.branch", "target branch as from-to",
                 [](const ScenarioConfig& c) { return fmt_pair(c.attack_branch); },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.attack_branch = parse_pair("attack.branch", v);
                 }});
    t.push_back({"attack.support", "spoofed buses (one or two ends of the target branch)",
                 [](const ScenarioConfig& c) {
                   return fmt_list(c.attack_support, [](BusId b) { return std::to_string(b); });
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.attack_support = parse_buses("attack.support", v);
                 }});
    t.push_back(SPOOFSIM_INT("attack.steps", attack_steps, "T, number of 1-PPS attack epochs"));
    t.push_back(SPOOFSIM_NUM("attack.epsilon_fraction", attack_epsilon_fraction,
                             "L1 band width as a fraction of zeta'"));
    t.push_back(SPOOFSIM_NUM("attack.lead_time_s", attack_lead_time_s,
                             "Ts, solver lead time before each epoch, seconds"));
    t.push_back({"attack.tau_r", "residual gate on whitened residuals, or auto (chi-square 95%)",
                 [](const ScenarioConfig& c) {
                   return c.attack_tau_r ? fmt(*c.attack_tau_r) : std::string("auto");
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   if (trim(v) == "auto") {
                     c.attack_tau_r.reset();
                   } else {
                     c.attack_tau_r = parse_double("attack.tau_r", v);
                   }
                 }});
    t.push_back({"attack.divisor", "zeta' divisor: initial (T) or remaining (T - t)",
                 [](const ScenarioConfig& c) {
                   return std::string(c.attack_divide_remaining ? "remaining" : "initial");
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   v = trim(v);
                   if (v == "initial") {
                     c.attack_divide_remaining = false;
                   } else if (v == "remaining") {
                     c.attack_divide_remaining = true;
                   } else {
                     bad_value("attack.divisor", v, "initial or remaining");
                   }
                 }});
    t.push_back({"attack.forecast", "attacker look-ahead: hankel or perfect",
                 [](const ScenarioConfig& c) {
                   return std::string(c.attack_forecast == ForecastKind::kHankel ? "hankel" : "perfect");
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   v = trim(v);
                   if (v == "hankel") {
                     c.attack_forecast = ForecastKind::kHankel;
                   } else if (v == "perfect") {
                     c.attack_forecast = ForecastKind::kPerfect;
                   } else {
                     bad_value("attack.forecast", v, "hankel or perfect");
                   }
                 }});
    t.push_back(SPOOFSIM_SIZE("hankel.trusted", hankel_trusted,
                              "L, trusted samples behind the estimation threshold"));
    t.push_back(SPOOFSIM_SIZE("hankel.tau", hankel_tau, "forecast window length"));
    t.push_back(SPOOFSIM_SIZE("hankel.kappa", hankel_kappa, "Hankel rows, 0 = tau/2"));
    t.push_back(SPOOFSIM_NUM("hankel.energy", hankel_energy,
                             "singular-value energy kept when hankel.rank = 0"));
    t.push_back(SPOOFSIM_INT("hankel.rank", hankel_rank, "fixed forecast rank, 0 = by energy"));
    t.push_back(SPOOFSIM_NUM("detect.beta", beta, "normalized residual threshold"));
    t.push_back({"detect.windows", "moving-window lengths of the Hankel error monitor",
                 [](const ScenarioConfig& c) {
                   return fmt_list(c.detect_windows, [](std::size_t w) { return std::to_string(w); });
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.detect_windows = parse_list<std::size_t>("detect.windows", v, parse_size);
                 }});
    t.push_back({"detect.monitor_buses", "buses whose angle channels get the Hankel monitor",
                 [](const ScenarioConfig& c) {
                   return fmt_list(c.monitor_buses, [](BusId b) { return std::to_string(b); });
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.monitor_buses = parse_buses("detect.monitor_buses", v);
                 }});
    t.push_back({"detect.pairs", "bus pairs for the gradient-sign detector",
                 [](const ScenarioConfig& c) { return fmt_list(c.gradient_pairs, fmt_pair); },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.gradient_pairs = parse_list<BusPair>("detect.pairs", v, parse_pair);
                 }});
    t.push_back(SPOOFSIM_SIZE("detect.gradient_window", gradient_window,
                              "Hankel window feeding the gradient detector"));
    t.push_back(SPOOFSIM_INT("detect.hankel_rank", detect_hankel_rank,
                             "rank of the monitor's low-rank approximation"));
    t.push_back(SPOOFSIM_NUM("detect.deadband", gradient_deadband,
                             "gradients below this magnitude carry no sign"));
    t.push_back({"detect.gradient_source", "gradient input: error (low-rank error) or angle (raw)",
                 [](const ScenarioConfig& c) {
                   return std::string(c.gradient_source == GradientSource::kError ? "error" : "angle");
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   v = trim(v);
                   if (v == "error") {
                     c.gradient_source = GradientSource::kError;
                   } else if (v == "angle") {
                     c.gradient_source = GradientSource::kAngle;
                   } else {
                     bad_value("detect.gradient_source", v, "error or angle");
                   }
                 }});
    t.push_back(SPOOFSIM_SIZE("detect.rate_window", gradient_rate_window,
                              "frames in the trailing mismatch-rate window"));
    t.push_back(SPOOFSIM_NUM("detect.kf_q", kf_q, "Kalman process noise, Q = kf_q * I"));
    t.push_back(SPOOFSIM_NUM("detect.dkf_cap", dkf_cap,
                             "largest growth factor of a DKF measurement variance"));
    t.push_back(SPOOFSIM_INT("forecast.bus", forecast_bus, "bus used by the forecast study"));
    t.push_back({"forecast.trusted_list", "trusted-window lengths L compared by the forecast study",
                 [](const ScenarioConfig& c) {
                   return fmt_list(c.forecast_trusted, [](std::size_t w) { return std::to_string(w); });
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.forecast_trusted = parse_list<std::size_t>("forecast.trusted_list", v, parse_size);
                 }});
    t.push_back(SPOOFSIM_SIZE("forecast.horizon", forecast_horizon,
                              "recursive forecast steps evaluated by the forecast study"));
    t.push_back(SPOOFSIM_NUM("forecast.start_time", forecast_start_s,
                             "time of the first trusted sample in the forecast study"));
    t.push_back({"random.buses", "buses shifted in the random-shift case",
                 [](const ScenarioConfig& c) {
                   return fmt_list(c.random_buses, [](BusId b) { return std::to_string(b); });
                 },
                 [](ScenarioConfig& c, std::string_view v) {
                   c.random_buses = parse_buses("random.buses", v);
                 }});
    t.push_back(SPOOFSIM_NUM("random.start_time", random_start_s,
                             "first epoch of the random-shift case, seconds"));
    t.push_back(SPOOFSIM_NUM("random.scale", random_scale,
                             "random shift magnitude in multiples of the nominal zeta'"));
    return t;
  }();
  return table;
}

#undef SPOOFSIM_NUM
#undef SPOOFSIM_SIZE
#undef SPOOFSIM_INT

const Entry& find_entry(std::string_view key) {
  const auto& t = entries();
  const auto it = std::find_if(t.begin(), t.end(), [&](const Entry& e) { return e.key == key; });
  if (it == t.end()) {
    std::string valid;
    for (const auto& e : t) valid += "\n  " + e.key;
    throw InvalidArgument("config: unknown key '" + std::string(key) + "'; valid keys:" + valid);
  }
  return *it;
}

}  // namespace

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("config: " + m); };
  if (!(frame_rate > 0.0)) fail("scenario.frame_rate must be > 0");
  if (!(duration_s > 0.0)) fail("scenario.duration_s must be > 0");
  // Steps after the end of the run are allowed; they never fire.
  for (double t : load.step_times) {
    if (!(t >= 0.0)) fail("load.step_times must be >= 0");
  }
  if (attack_start_s < 0.0 || attack_start_s > duration_s) {
    fail("attack.start_time must lie within the scenario duration");
  }
  // random.start_time is checked against the duration by the random case itself.
  if (random_start_s < 0.0) fail("random.start_time must be >= 0");
  if (forecast_start_s < 0.0 || forecast_start_s > duration_s) {
    fail("forecast.start_time must lie within the scenario duration");
  }
  if (attack_steps < 1) fail("attack.steps must be >= 1");
  if (!(attack_epsilon_fraction > 0.0)) fail("attack.epsilon_fraction must be > 0");
  if (attack_lead_time_s < 0.0) fail("attack.lead_time_s must be >= 0");
  if (attack_support.empty() || attack_support.size() > 2) fail("attack.support needs 1 or 2 buses");
  for (BusId b : attack_support) {
    if (b != attack_branch.first && b != attack_branch.second) {
      fail("attack.support buses must be endpoints of attack.branch");
    }
  }
  if (noise_variance_deg2 < 0.0 || stream_noise_variance_deg2 < 0.0 || flow_sigma_pu < 0.0) {
    fail("noise values must be >= 0");
  }
  if (noise_variance_deg2 == 0.0 && flow_sigma_pu == 0.0) {
    fail("noise.variance_deg2 and noise.flow_sigma_pu cannot both be 0");
  }
  if (hankel_trusted < 2) fail("hankel.trusted must be >= 2");
  if (hankel_tau < 3) fail("hankel.tau must be >= 3");
  if (hankel_kappa != 0 && (hankel_kappa < 2 || hankel_kappa + 1 > hankel_tau)) {
    fail("hankel.kappa must be 0 or in [2, tau - 1]");
  }
  if (!(hankel_energy > 0.0 && hankel_energy <= 1.0)) fail("hankel.energy must lie in (0, 1]");
  if (hankel_rank < 0) fail("hankel.rank must be >= 0");
  if (!(beta > 0.0)) fail("detect.beta must be > 0");
  for (std::size_t w : detect_windows) {
    if (w < 4) fail("detect.windows entries must be >= 4");
  }
  if (gradient_window < 4) fail("detect.gradient_window must be >= 4");
  if (detect_hankel_rank < 1) fail("detect.hankel_rank must be >= 1");
  if (gradient_deadband < 0.0) fail("detect.deadband must be >= 0");
  if (gradient_rate_window < 1) fail("detect.rate_window must be >= 1");
  if (kf_q < 0.0) fail("detect.kf_q must be >= 0");
  if (dkf_cap < 1.0) fail("detect.dkf_cap must be >= 1");
  if (forecast_trusted.empty()) fail("forecast.trusted_list must not be empty");
  for (std::size_t l : forecast_trusted) {
    if (l < 4) fail("forecast.trusted_list entries must be >= 4");
  }
  if (forecast_horizon < 1) fail("forecast.horizon must be >= 1");
  if (random_scale < 0.0) fail("random.scale must be >= 0");
}

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> keys = [] {
    std::vector<ConfigKeyInfo> out;
    for (const auto& e : entries()) out.push_back({e.key, e.help});
    return out;
  }();
  return keys;
}

std::string config_value(const ScenarioConfig& cfg, std::string_view key) {
  return find_entry(key).get(cfg);
}

void apply_setting(ScenarioConfig& cfg, std::string_view key, std::string_view value) {
  find_entry(trim(key)).set(cfg, trim(value));
}

void apply_override(ScenarioConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw InvalidArgument("config: expected key=value, got '" + std::string(assignment) + "'");
  }
  apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_config_text(ScenarioConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string_view::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_override(cfg, line);
  }
}

ScenarioConfig load_config_file(const std::filesystem::path& path) {
  ScenarioConfig cfg;
  apply_config_text(cfg, csv::read_text(path));
  return cfg;
}

std::string dump_config(const ScenarioConfig& cfg) {
  std::ostringstream os;
  for (const auto& e : entries()) os << e.key << " = " << e.get(cfg) << "\n";
  return os.str();
}

}  // namespace spoofsim
