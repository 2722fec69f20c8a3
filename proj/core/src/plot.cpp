#include "spade/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "spade/errors.hpp"

namespace spade {

namespace {

std::string fixed(double v, int places = 2) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kQuantileColors[] = {"#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string render_series_svg(const SeriesRecord& record, const ForecastGrid& grid,
                              const PlotConfig& config) {
  if (config.width < 200 || config.height < 120) {
    throw ConfigError("plot canvas must be at least 200x120");
  }
  const int T = record.periods();
  if (T < 2) throw DataError("series " + record.series_id + " is too short to plot");

  int h_index = -1;
  for (std::size_t h = 0; h < grid.horizons.size(); ++h) {
    if (grid.horizons[h].lead == config.lead) {
      h_index = static_cast<int>(h);
      break;
    }
  }
  if (h_index < 0) {
    throw ConfigError("no horizon with lead " + std::to_string(config.lead) + " in the forecast grid");
  }
  const HorizonSpec hspec = grid.horizons[static_cast<std::size_t>(h_index)];
  const SeriesForecast* sf = grid.find(record.series_id);
  if (!sf) throw DataError("forecast grid is missing series " + record.series_id);
  const int n_h = static_cast<int>(grid.horizons.size());
  const int n_q = static_cast<int>(grid.quantiles.size());

  // forecast polylines, mapped to the first period of their target window
  struct Line {
    double q;
    std::vector<std::pair<int, double>> pts;  // (period, value)
  };
  std::vector<Line> lines;
  for (int qi = 0; qi < n_q; ++qi) {
    Line line;
    line.q = grid.quantiles[static_cast<std::size_t>(qi)];
    for (int t = sf->t_begin; t < sf->t_begin + sf->t_count; ++t) {
      if (t + hspec.end_offset() > T) continue;
      line.pts.emplace_back(t + hspec.lead, sf->at(t, h_index, qi, n_h, n_q));
    }
    lines.push_back(std::move(line));
  }

  double lo = record.demand[0], hi = record.demand[0];
  for (double v : record.demand) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (const Line& line : lines) {
    for (const auto& [p, v] : line.pts) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double ml = 56.0, mr = 16.0, mt = 34.0, mb = 34.0;
  const double pw = config.width - ml - mr;
  const double ph = config.height - mt - mb;
  auto sx = [&](double t) { return ml + pw * (t / std::max(1.0, static_cast<double>(T - 1))); };
  auto sy = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << config.width << "\" height=\""
      << config.height << "\" viewBox=\"0 0 " << config.width << ' ' << config.height << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << config.width << "\" height=\"" << config.height
      << "\" fill=\"#ffffff\"/>\n";

  const std::string title =
      config.title.empty() ? record.series_id + " (lead " + std::to_string(hspec.lead) + ")"
                           : config.title;
  svg << "<text x=\"" << fixed(ml) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape_xml(title) << "</text>\n";

  // peak-event bands
  for (int t = 0; t < T; ++t) {
    if (record.peak_indicator[static_cast<std::size_t>(t)] != 1) continue;
    const double x0 = sx(std::max(0.0, t - 0.5));
    const double x1 = sx(std::min<double>(T - 1, t + 0.5));
    svg << "<rect class=\"peak-band\" x=\"" << fixed(x0) << "\" y=\"" << fixed(mt) << "\" width=\""
        << fixed(std::max(1.0, x1 - x0)) << "\" height=\"" << fixed(ph)
        << "\" fill=\"#f4b6b6\" fill-opacity=\"0.55\"/>\n";
  }

  // axes and ticks
  svg << "<line x1=\"" << fixed(ml) << "\" y1=\"" << fixed(mt) << "\" x2=\"" << fixed(ml)
      << "\" y2=\"" << fixed(mt + ph) << "\" stroke=\"#333333\"/>\n";
  svg << "<line x1=\"" << fixed(ml) << "\" y1=\"" << fixed(mt + ph) << "\" x2=\"" << fixed(ml + pw)
      << "\" y2=\"" << fixed(mt + ph) << "\" stroke=\"#333333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = sy(v);
    svg << "<line x1=\"" << fixed(ml - 4) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(ml)
        << "\" y2=\"" << fixed(y) << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << fixed(ml - 8) << "\" y=\"" << fixed(y + 4)
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << fixed(v, 1)
        << "</text>\n";
  }
  const int x_step = std::max(1, (T - 1) / 8);
  for (int t = 0; t < T; t += x_step) {
    const double x = sx(t);
    svg << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(mt + ph) << "\" x2=\"" << fixed(x)
        << "\" y2=\"" << fixed(mt + ph + 4) << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(mt + ph + 16)
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << t
        << "</text>\n";
  }

  auto polyline = [&](const std::vector<std::pair<int, double>>& pts, const std::string& color,
                      const std::string& cls, const std::string& dash) {
    if (pts.empty()) return;
    svg << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"";
    if (!dash.empty()) svg << " stroke-dasharray=\"" << dash << "\"";
    svg << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) svg << ' ';
      svg << fixed(sx(pts[i].first)) << ',' << fixed(sy(pts[i].second));
    }
    svg << "\"/>\n";
  };

  std::vector<std::pair<int, double>> actual;
  actual.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) actual.emplace_back(t, record.demand[static_cast<std::size_t>(t)]);
  polyline(actual, "#1f77b4", "actual", "");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string color = kQuantileColors[i % (sizeof(kQuantileColors) / sizeof(char*))];
    const std::string label = "p" + fixed(lines[i].q * 100.0, 0);
    polyline(lines[i].pts, color, "forecast-" + label, i == 0 ? "" : "5,3");
  }

  // legend
  double lx = ml + 8.0;
  const double ly = mt + 12.0;
  auto legend_entry = [&](const std::string& color, const std::string& label, bool dashed) {
    svg << "<line x1=\"" << fixed(lx) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\"" << fixed(lx + 18)
        << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (dashed) svg << " stroke-dasharray=\"5,3\"";
    svg << "/>\n";
    svg << "<text x=\"" << fixed(lx + 22) << "\" y=\"" << fixed(ly)
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape_xml(label) << "</text>\n";
    lx += 30.0 + 7.0 * label.size();
  };
  legend_entry("#1f77b4", "actual", false);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string color = kQuantileColors[i % (sizeof(kQuantileColors) / sizeof(char*))];
    legend_entry(color, "p" + fixed(lines[i].q * 100.0, 0), i != 0);
  }
  svg << "<rect x=\"" << fixed(lx) << "\" y=\"" << fixed(ly - 9) << "\" width=\"12\" height=\"9\""
      << " fill=\"#f4b6b6\" fill-opacity=\"0.55\"/>\n";
  svg << "<text x=\"" << fixed(lx + 16) << "\" y=\"" << fixed(ly)
      << "\" font-family=\"sans-serif\" font-size=\"10\">peak</text>\n";

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace spade
