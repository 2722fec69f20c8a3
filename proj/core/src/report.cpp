#include "spade/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "spade/errors.hpp"

namespace spade {

namespace {

std::string fixed(double v, int places) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return buf;
}

const char* scope_label(HorizonScope s) {
  switch (s) {
    case HorizonScope::All: return "overall";
    case HorizonScope::Peak: return "peak";
    case HorizonScope::PostPeak: return "post_peak";
  }
  return "?";
}

}  // namespace

std::string report_json(const MetricReport& report) {
  nlohmann::json j;
  j["seeds"] = report.seeds;
  j["ppe_window"] = report.ppe_window;
  j["quantiles"] = report.quantiles;
  nlohmann::json variants = nlohmann::json::object();
  for (Variant v : report.variants) {
    nlohmann::json scopes = nlohmann::json::object();
    const auto& slot = report.cells.at(v);
    for (const auto& [key, cell] : slot) {
      nlohmann::json& scope = scopes[scope_label(key.scope)];
      nlohmann::json metric;
      metric["mean"] = cell.mean;
      metric["ci_half_width"] = cell.ci_half_width;
      metric["diff_vs_original_pct"] = cell.diff_vs_original_pct;
      metric["per_seed"] = cell.per_seed;
      scope["p" + fixed(key.quantile * 100.0, 0)] = metric;
    }
    variants[variant_name(v)] = scopes;
  }
  j["variants"] = variants;
  return j.dump(2) + "\n";
}

std::string report_table(const MetricReport& report) {
  // rows: scope x quantile; columns: Diff, then one per variant
  std::vector<Variant> treatments;
  for (Variant v : report.variants)
    if (v != Variant::Original) treatments.push_back(v);

  std::vector<std::string> col_names{"metric", "diff_pct"};
  for (Variant v : report.variants) col_names.push_back(variant_name(v));

  std::vector<std::vector<std::string>> rows;
  for (HorizonScope scope : {HorizonScope::All, HorizonScope::Peak, HorizonScope::PostPeak}) {
    for (double q : report.quantiles) {
      const MetricKey key{scope, q};
      std::vector<std::string> row;
      row.push_back(std::string(scope_label(scope)) + "/p" + fixed(q * 100.0, 0));
      double diff = 0.0;
      int n = 0;
      for (Variant v : treatments) {
        const auto& slot = report.cells.at(v);
        auto it = slot.find(key);
        if (it == slot.end()) continue;
        diff += it->second.diff_vs_original_pct;
        ++n;
      }
      row.push_back(n > 0 ? fixed(diff / n, 2) : "-");
      for (Variant v : report.variants) {
        const auto& slot = report.cells.at(v);
        auto it = slot.find(key);
        row.push_back(it == slot.end()
                          ? "-"
                          : fixed(it->second.mean, 4) + " +- " + fixed(it->second.ci_half_width, 4));
      }
      rows.push_back(std::move(row));
    }
  }

  std::vector<std::size_t> widths(col_names.size());
  for (std::size_t c = 0; c < col_names.size(); ++c) widths[c] = col_names[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      out << row[c];
      for (std::size_t pad = row[c].size(); pad < widths[c]; ++pad) out << ' ';
    }
    out << '\n';
  };
  emit(col_names);
  std::vector<std::string> rule;
  for (std::size_t w : widths) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& row : rows) emit(row);
  out << "seeds: " << report.seeds.size() << ", ppe_window: " << report.ppe_window
      << ", diff_pct averages the non-control variants against " << variant_name(Variant::Original)
      << "\n";
  return out.str();
}

}  // namespace spade
