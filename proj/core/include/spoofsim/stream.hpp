#pragma once

// Time series of PMU frames at a fixed frame rate, and its CSV form.
//
// Stream CSV columns: t_seconds, theta_<bus id> for every bus (radians),
// optionally provenance. Flows are not stored; readers rebuild them as
// z = H * theta_meas, the flow a control center derives from PMU angles.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spoofsim/grid.hpp"

namespace spoofsim {

struct PhasorStream {
  double frame_rate = 60.0;
  std::vector<MeasurementFrame> frames;

  [[nodiscard]] std::size_t size() const noexcept { return frames.size(); }
  [[nodiscard]] bool empty() const noexcept { return frames.empty(); }

  // Angle channel of one bus (by position in GridModel::buses()).
  [[nodiscard]] std::vector<double> angle_channel(std::size_t bus_index) const;
  [[nodiscard]] std::vector<double> timestamps() const;
};

// Index of the first frame at or after time t, assuming frames start at
// t = 0 and are spaced 1/frame_rate apart.
[[nodiscard]] std::size_t frame_index(double t, double frame_rate);

namespace stream {

// Required column names for a grid, in file order.
[[nodiscard]] std::vector<std::string> required_columns(const GridModel& grid);

void write_csv(const GridModel& grid, const PhasorStream& s, const std::filesystem::path& path);

// Throws InvalidArgument naming every missing column.
[[nodiscard]] PhasorStream read_csv(const GridModel& grid, const std::filesystem::path& path);

}  // namespace stream
}  // namespace spoofsim
