#include "spoofsim/stream.hpp"

#include <cmath>
#include <fstream>

#include "spoofsim/csv.hpp"
#include "spoofsim/errors.hpp"

namespace spoofsim {

std::vector<double> PhasorStream::angle_channel(std::size_t bus_index) const {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.theta_meas(static_cast<Eigen::Index>(bus_index)));
  return out;
}

std::vector<double> PhasorStream::timestamps() const {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.timestamp);
  return out;
}

std::size_t frame_index(double t, double frame_rate) {
  if (!(frame_rate > 0.0)) throw InvalidArgument("frame rate must be positive");
  if (t <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(t * frame_rate - 1e-9));
}

namespace stream {

std::vector<std::string> required_columns(const GridModel& grid) {
  std::vector<std::string> cols{"t_seconds"};
  for (const auto& b : grid.buses()) cols.push_back("theta_" + std::to_string(b.id));
  return cols;
}

void write_csv(const GridModel& grid, const PhasorStream& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  auto header = required_columns(grid);
  header.emplace_back("provenance");
  out << csv::join(header) << '\n';
  for (const auto& f : s.frames) {
    out << csv::format(f.timestamp);
    for (Eigen::Index i = 0; i < f.theta_meas.size(); ++i) out << ',' << csv::format(f.theta_meas(i));
    out << ',' << to_string(f.provenance) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

PhasorStream read_csv(const GridModel& grid, const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const auto names = required_columns(grid);
  std::vector<std::size_t> cols;
  std::string missing;
  for (const auto& name : names) {
    if (auto c = table.column(name)) {
      cols.push_back(*c);
    } else {
      missing += (missing.empty() ? "" : ", ") + name;
    }
  }
  if (!missing.empty()) {
    throw InvalidArgument(path.string() + " lacks required columns: " + missing);
  }
  const auto prov_col = table.column("provenance");
  const Eigen::MatrixXd h = grid::build_measurement_jacobian(grid);

  PhasorStream s;
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  for (const auto& row : table.rows) {
    MeasurementFrame f;
    f.timestamp = csv::to_double(row[cols[0]]);
    f.theta_meas.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      f.theta_meas(i) = csv::to_double(row[cols[static_cast<std::size_t>(i) + 1]]);
    }
    f.z = h * f.theta_meas;
    if (prov_col) {
      f.provenance = parse_provenance(row[*prov_col]).value_or(Provenance::kTrue);
    }
    s.frames.push_back(std::move(f));
  }
  if (s.frames.size() >= 2) {
    const double dt = s.frames[1].timestamp - s.frames[0].timestamp;
    if (!(dt > 0.0)) throw InvalidArgument(path.string() + ": timestamps are not increasing");
    s.frame_rate = std::round(1.0 / dt * 1e6) / 1e6;
  }
  return s;
}

}  // namespace stream
}  // namespace spoofsim
