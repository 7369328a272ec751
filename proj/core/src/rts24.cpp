#include <string_view>

#include "spoofsim/grid.hpp"

namespace spoofsim::grid {
namespace detail {
extern const std::string_view kRtsBusesCsv;
extern const std::string_view kRtsBranchesCsv;
}  // namespace detail

GridModel load_ieee24_rts(BusId slack_bus) {
  return parse_grid_csv(detail::kRtsBusesCsv, detail::kRtsBranchesCsv, slack_bus, 100.0, 60.0);
}

}  // namespace spoofsim::grid
