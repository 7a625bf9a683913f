#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgr/ecg.hpp"
#include "ecgr/masking.hpp"
#include "ecgr/metrics.hpp"

namespace ecgr {

/// Twelve stacked panels, original in black and reconstruction in red. Cells
/// outside the primer are shaded when a mask is given.
std::string render_ecg_svg(const EcgRecord& original, const EcgRecord& recon,
                           const PrimerMask* mask, std::string_view title);

/// Metric reports of one reconstruction method.
struct MethodReports {
  std::string label;
  std::vector<MetricReport> reports;
};

/// Markdown tables, one per metric: a row per config x lead plus an "all"
/// row per config, a "mean±std" column per method.
std::string render_metric_tables(std::span<const MethodReports> methods,
                                 std::span<const std::string_view> metrics);

/// Table of overall means of `metrics` (one row per labelled report), the
/// layout of the alpha sweep.
std::string render_summary_table(std::span<const MethodReports> rows, std::string_view row_header,
                                 std::span<const std::string_view> metrics);

}  // namespace ecgr
