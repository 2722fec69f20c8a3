#pragma once

#include <string>

#include "spade/evaluation.hpp"

namespace spade {

// JSON document with per-variant metric cells, seeds and diffs.
std::string report_json(const MetricReport& report);

// Aligned plain-text table: rows Overall/Peak/PostPeak x P50/P90, one
// column per variant (mean +- ci), leading Diff column averaging the
// treatment variants' percentage difference vs the Original control.
std::string report_table(const MetricReport& report);

}  // namespace spade
