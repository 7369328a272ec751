#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <system_error>

#include "spoofsim/csv.hpp"
#include "spoofsim/errors.hpp"
#include "spoofsim/harness.hpp"
#include "spoofsim/stream.hpp"

namespace spoofsim::cli {
namespace {

struct SubcommandInfo {
  Subcommand id;
  const char* name;
  const char* description;
};

constexpr SubcommandInfo kSubcommands[] = {
    {Subcommand::kSimulate, "simulate", "simulate the clean PMU stream and write stream.csv"},
    {Subcommand::kAttack, "attack",
     "plan the attack and write the schedule plus clean and attacked streams"},
    {Subcommand::kDetect, "detect", "run every detector over a stream CSV given with --stream"},
    {Subcommand::kReproduce, "reproduce", "full scenario: attack, detectors, all result tables"},
    {Subcommand::kForecastStudy, "forecast-study",
     "forecast accuracy against the estimation threshold for each trusted length"},
    {Subcommand::kRandomCase, "random-case", "random phase jumps at two buses, detectors only"},
};

std::string config_reference() {
  const ScenarioConfig defaults;
  std::ostringstream os;
  os << "Config keys (file lines or --set key=value), with defaults:\n";
  for (const auto& k : config_keys()) {
    const std::string lhs = "  " + k.key + " = " + config_value(defaults, k.key);
    os << std::left << std::setw(44) << lhs << " " << k.help << "\n";
  }
  os << "Environment: SPOOFSIM_SEED seeds runs that set no seed otherwise.";
  return os.str();
}

std::string one_line(std::string s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] != '\n') {
      out += s[k];
      continue;
    }
    while (k + 1 < s.size() && s[k + 1] == ' ') ++k;
    out += ' ';
  }
  return out;
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

}  // namespace

std::string_view to_string(Subcommand s) noexcept {
  for (const auto& info : kSubcommands) {
    if (info.id == s) return info.name;
  }
  return "?";
}

ParseOutcome parse_args(const std::vector<std::string>& args) {
  CLI::App app{"Synchrophasor time-shift attack and detection workbench", "spoofsim"};
  app.require_subcommand(1);
  app.footer(config_reference());

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "results";
  std::uint64_t seed = 0;
  std::string stream_path;

  std::vector<std::pair<Subcommand, CLI::App*>> subs;
  for (const auto& info : kSubcommands) {
    CLI::App* sub = app.add_subcommand(info.name, info.description);
    sub->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override one config key (repeatable)")
        ->type_name("KEY=VALUE")
        ->allow_extra_args(false);
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "random seed (overrides scenario.seed)");
    if (info.id == Subcommand::kDetect) {
      sub->add_option("--stream", stream_path, "stream CSV to analyse")->required();
    }
    sub->footer(config_reference());
    subs.emplace_back(info.id, sub);
  }

  ParseOutcome outcome;
  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    outcome.help = app.help();
    for (const auto& [id, sub] : subs) {
      if (sub->parsed()) outcome.help = sub->help();
    }
    return outcome;
  } catch (const CLI::CallForAllHelp&) {
    outcome.help = app.help("", CLI::AppFormatMode::All);
    return outcome;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  CliInvocation inv;
  for (const auto& [id, sub] : subs) {
    if (sub->parsed()) inv.subcommand = id;
  }
  const CLI::App* chosen = app.get_subcommands().front();
  if (!config_path.empty()) inv.config_path = config_path;
  inv.overrides = overrides;
  inv.out_dir = out_dir;
  if (chosen->count("--seed") > 0) inv.seed = seed;
  if (!stream_path.empty()) inv.stream_path = stream_path;

  ScenarioConfig probe;
  for (const auto& o : inv.overrides) {
    try {
      apply_override(probe, o);
    } catch (const InvalidArgument& e) {
      throw UsageError(one_line(e.what()));
    }
  }
  outcome.invocation = std::move(inv);
  return outcome;
}

ScenarioConfig resolve_config(const CliInvocation& inv, const char* env_seed) {
  ScenarioConfig cfg;
  if (env_seed != nullptr && *env_seed != '\0') apply_setting(cfg, "scenario.seed", env_seed);
  if (inv.config_path) apply_config_text(cfg, csv::read_text(*inv.config_path));
  for (const auto& o : inv.overrides) apply_override(cfg, o);
  if (inv.seed) cfg.seed = *inv.seed;
  cfg.validate();
  return cfg;
}

int run(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  try {
    const ScenarioConfig cfg = resolve_config(inv, std::getenv("SPOOFSIM_SEED"));
    const auto& dir = inv.out_dir;
    switch (inv.subcommand) {
      case Subcommand::kSimulate: {
        const GridModel grid = harness::scenario_grid(cfg);
        const auto sim = harness::simulate_stream(grid, cfg);
        make_dir(dir);
        stream::write_csv(grid, sim.measured, dir / "stream.csv");
        out << "wrote " << (dir / "stream.csv").string() << " (" << sim.measured.size()
            << " frames)\n";
        break;
      }
      case Subcommand::kAttack: {
        const GridModel grid = harness::scenario_grid(cfg);
        ScenarioConfig acfg = cfg;
        acfg.attack_enabled = true;
        const auto res = harness::run_paper_scenario(acfg);
        make_dir(dir);
        attack::write_schedule_csv(res.schedule, dir / "schedule.csv");
        stream::write_csv(grid, res.clean, dir / "clean_stream.csv");
        stream::write_csv(grid, res.observed, dir / "attacked_stream.csv");
        out << "attack: " << res.schedule.accepted_steps() << " of " << res.schedule.steps.size()
            << " steps accepted; wrote schedule.csv, clean_stream.csv, attacked_stream.csv to "
            << dir.string() << "\n";
        break;
      }
      case Subcommand::kDetect: {
        if (!inv.stream_path) throw InvalidArgument("detect needs --stream");
        const GridModel grid = harness::scenario_grid(cfg);
        harness::ScenarioResult res;
        res.name = "detect";
        res.observed = stream::read_csv(grid, *inv.stream_path);
        res.t = res.observed.timestamps();
        res.report = harness::run_detectors(grid, res.observed, cfg);
        harness::export_detector_report(res, dir);
        out << harness::summary_text(res);
        break;
      }
      case Subcommand::kReproduce: {
        const auto res = harness::run_paper_scenario(cfg);
        harness::export_results(res, dir);
        out << harness::summary_text(res);
        break;
      }
      case Subcommand::kForecastStudy: {
        const auto study = harness::run_forecast_study(cfg);
        harness::export_forecast_study(study, dir);
        for (const auto& s : study.summary) {
          out << "L=" << s.trusted << " horizon=" << s.horizon << " tau_e=" << s.tau_e << "\n";
        }
        break;
      }
      case Subcommand::kRandomCase: {
        const auto res = harness::run_random_shift_case(cfg);
        harness::export_results(res, dir);
        out << harness::summary_text(res);
        break;
      }
    }
    return 0;
  } catch (const std::exception& e) {
    err << "spoofsim: " << one_line(e.what()) << "\n";
    return 1;
  }
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  ParseOutcome parsed;
  try {
    parsed = parse_args(args);
  } catch (const UsageError& e) {
    err << "spoofsim: " << e.what() << "\n"
        << "usage: spoofsim {simulate|attack|detect|reproduce|forecast-study|random-case} "
           "[--config FILE] [--set KEY=VALUE]... [--out DIR] [--seed N]\n";
    return 2;
  }
  if (!parsed.help.empty()) {
    out << parsed.help;
    return 0;
  }
  return run(*parsed.invocation, out, err);
}

}  // namespace spoofsim::cli
