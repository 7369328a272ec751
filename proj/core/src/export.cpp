#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <system_error>

#include "spoofsim/csv.hpp"
#include "spoofsim/errors.hpp"
#include "spoofsim/harness.hpp"

namespace spoofsim::harness {
namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

std::string flows_csv(const ScenarioResult& r) {
  std::string out = "t_seconds,true_mva,perceived_mva,limit_mva,critical_mva\n";
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    out += csv::join({csv::format(r.t[k]), csv::format(r.true_mva[k]), csv::format(r.perceived_mva[k]),
                      csv::format(r.limit_mva), csv::format(r.critical_mva)});
    out += '\n';
  }
  return out;
}

std::string residuals_csv(const ScenarioResult& r) {
  std::string out = "t_seconds,wls_max_norm_resid,dkf_max_norm_resid,beta\n";
  const auto& rep = r.report;
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    out += csv::join({csv::format(rep.t[k]), csv::format(rep.wls.max_normalized[k]),
                      csv::format(rep.dkf.max_normalized[k]), csv::format(rep.wls.beta)});
    out += '\n';
  }
  return out;
}

std::string hankel_csv(const ScenarioResult& r) {
  const auto& rep = r.report;
  std::vector<std::string> header{"t_seconds"};
  for (const auto& h : rep.hankel) {
    header.push_back("w" + std::to_string(h.window) + "_bus" + std::to_string(h.bus));
  }
  std::string out = csv::join(header) + "\n";
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    std::vector<std::string> row{csv::format(rep.t[k])};
    for (const auto& h : rep.hankel) row.push_back(csv::format(h.error[k]));
    out += csv::join(row) + "\n";
  }
  return out;
}

std::string gradients_csv(const ScenarioResult& r) {
  const auto& rep = r.report;
  std::string out = "t_seconds,pair,flag\n";
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    for (const auto& g : rep.gradients) {
      out += csv::format(rep.t[k]) + "," + std::to_string(g.pair.first) + "-" +
             std::to_string(g.pair.second) + "," + std::to_string(g.report.flags[k]) + "\n";
    }
  }
  return out;
}

}  // namespace

std::string summary_text(const ScenarioResult& r) {
  std::string out;
  auto line = [&](const std::string& s) { out += s + "\n"; };
  line("scenario: " + r.name);
  line("frames: " + std::to_string(r.t.size()));
  line("target branch: " + std::to_string(r.branch.first) + "->" + std::to_string(r.branch.second) +
       " limit " + num(r.limit_mva) + " MVA, critical " + num(r.critical_mva) + " MVA");

  if (!r.t.empty() && r.true_mva.size() == r.t.size() && r.perceived_mva.size() == r.t.size()) {
    std::size_t kt = 0;
    std::size_t kp = 0;
    for (std::size_t k = 0; k < r.t.size(); ++k) {
      if (r.true_mva[k] > r.true_mva[kt]) kt = k;
      if (r.perceived_mva[k] > r.perceived_mva[kp]) kp = k;
    }
    line("peak true flow: " + num(r.true_mva[kt]) + " MVA at t=" + num(r.t[kt]) + " s");
    line("peak perceived flow: " + num(r.perceived_mva[kp]) + " MVA at t=" + num(r.t[kp]) + " s");
    std::string cross = "none";
    for (std::size_t k = 0; k < r.t.size(); ++k) {
      if (r.perceived_mva[k] > r.critical_mva) {
        cross = "t=" + num(r.t[k]) + " s";
        break;
      }
    }
    line("perceived flow first above critical: " + cross);
  }

  const auto& sch = r.schedule;
  double l1 = 0.0;
  double zeta = 0.0;
  for (const auto& st : sch.steps) {
    if (!st.feasible) continue;
    l1 += st.l1();
    zeta += st.zeta;
  }
  line("attack steps: " + std::to_string(sch.accepted_steps()) + " accepted of " +
       std::to_string(sch.steps.size()) + ", tau_r " + num(sch.tau_r));
  line("sum |a|_1: " + num(l1) + " rad, sum zeta': " + num(zeta) + " rad");
  for (const auto& st : sch.steps) {
    if (!st.feasible && !st.note.empty()) {
      line("  epoch " + std::to_string(st.epoch) + " skipped: " + st.note);
    }
  }

  const double onset = sch.steps.empty() ? 0.0 : sch.steps.front().t;
  for (const auto& v : r.report.verdicts) {
    std::string s = v.name + ": detected=" + yes_no(v.detected) + " first=" +
                    (v.first_detection_s ? num(*v.first_detection_s) + " s" : std::string("none"));
    if (v.name == "wls_lnr") s += " peak=" + num(r.report.wls.peak());
    if (v.name == "dkf_lnr") s += " peak=" + num(r.report.dkf.peak());
    line(s);
  }
  for (const auto& g : r.report.gradients) {
    const double end = r.t.empty() ? 0.0 : r.t.back() + 1.0;
    line("gradient " + std::to_string(g.pair.first) + "-" + std::to_string(g.pair.second) +
         " mismatch rate: overall " + num(g.report.overall_rate) + ", before " + num(onset) +
         " s " + num(g.report.rate_between(r.report.t, 0.0, onset)) + ", after " +
         num(g.report.rate_between(r.report.t, onset, end)));
  }
  for (const auto& h : r.report.hankel) {
    double peak = 0.0;
    for (double e : h.error) {
      if (std::isfinite(e)) peak = std::max(peak, e);
    }
    line("hankel w" + std::to_string(h.window) + " bus " + std::to_string(h.bus) +
         " peak error: " + num(peak));
  }
  if (!r.forecast_log.empty()) {
    std::size_t ok = 0;
    for (const auto& e : r.forecast_log) ok += e.within() ? 1 : 0;
    line("forecasts within tau_e: " + std::to_string(ok) + " of " +
         std::to_string(r.forecast_log.size()));
  }
  return out;
}

void export_results(const ScenarioResult& result, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  write_file(out_dir / "flows.csv", flows_csv(result));
  write_file(out_dir / "residuals.csv", residuals_csv(result));
  write_file(out_dir / "hankel_errors.csv", hankel_csv(result));
  write_file(out_dir / "gradients.csv", gradients_csv(result));
  write_file(out_dir / "schedule.csv", attack::schedule_csv(result.schedule));
  write_file(out_dir / "summary.txt", summary_text(result));
}

void export_detector_report(const ScenarioResult& result, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  write_file(out_dir / "residuals.csv", residuals_csv(result));
  write_file(out_dir / "hankel_errors.csv", hankel_csv(result));
  write_file(out_dir / "gradients.csv", gradients_csv(result));
  write_file(out_dir / "summary.txt", summary_text(result));
}

void export_forecast_study(const ForecastStudy& study, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  std::string rows = "trusted,step,predicted,actual,error,tau_e,within\n";
  for (const auto& r : study.rows) {
    rows += csv::join({std::to_string(r.trusted), std::to_string(r.step), csv::format(r.predicted),
                       csv::format(r.actual), csv::format(r.error), csv::format(r.tau_e),
                       r.error <= r.tau_e + 1e-12 ? "1" : "0"}) +
            "\n";
  }
  write_file(out_dir / "forecast_study.csv", rows);
  std::string sum = "bus: " + std::to_string(study.bus) + "\n";
  for (const auto& s : study.summary) {
    sum += "L=" + std::to_string(s.trusted) + " tau_e=" + num(s.tau_e) + " rank=" +
           std::to_string(s.first_rank) + " horizon=" + std::to_string(s.horizon) + "\n";
  }
  write_file(out_dir / "forecast_summary.txt", sum);
}

}  // namespace spoofsim::harness
