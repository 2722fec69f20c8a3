#pragma once

#include <string>
#include <vector>

#include "spade/data.hpp"
#include "spade/model.hpp"

namespace spade {

struct PlotConfig {
  int lead = 1;          // horizon (by lead) whose forecasts are drawn
  int width = 960;
  int height = 380;
  std::string title;
};

// Line chart of actual demand with P50/P90 forecasts mapped to their target
// periods, peak-event periods shaded. Output is a standalone SVG document;
// identical inputs produce identical bytes.
std::string render_series_svg(const SeriesRecord& record, const ForecastGrid& grid,
                              const PlotConfig& config);

}  // namespace spade
