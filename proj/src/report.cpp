#include "ecgr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ecgr/error.hpp"

namespace ecgr {
namespace {

constexpr double kWidth = 960.0;
constexpr double kLeftMargin = 48.0;
constexpr double kTopMargin = 28.0;
constexpr double kPanelHeight = 64.0;
constexpr double kPanelGap = 6.0;

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  // Avoid "-0.00" so output does not depend on the sign of tiny values.
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string polyline(std::span<const float> y, double top, double lo, double hi,
                     std::string_view color) {
  const double plot_w = kWidth - kLeftMargin - 8.0;
  const double span = hi > lo ? hi - lo : 1.0;
  std::string pts;
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double px = kLeftMargin + plot_w * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
    const double py = top + kPanelHeight * (1.0 - (static_cast<double>(y[i]) - lo) / span);
    if (i) pts += ' ';
    pts += fixed(px, 1) + ',' + fixed(py, 1);
  }
  return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"1\" points=\"" + pts + "\"/>\n";
}

std::string mean_std_cell(const MetricSummary& s) {
  std::string cell = s.count == 0 ? "n/a" : fixed(s.mean, 3) + "±" + fixed(s.std, 3);
  if (s.failures) cell += " (" + std::to_string(s.failures) + " failed)";
  return cell;
}

const MetricReport* find_config(const MethodReports& method, std::string_view config) {
  for (const MetricReport& r : method.reports) {
    if (r.config_name == config) return &r;
  }
  return nullptr;
}

}  // namespace

std::string render_ecg_svg(const EcgRecord& original, const EcgRecord& recon,
                           const PrimerMask* mask, std::string_view title) {
  if (original.num_samples() != recon.num_samples()) {
    fail(ErrorKind::kShapeMismatch, "plot: original and reconstruction differ in length");
  }
  const std::size_t n = original.num_samples();
  const double height = kTopMargin + kNumLeads * (kPanelHeight + kPanelGap) + 8.0;
  const double plot_w = kWidth - kLeftMargin - 8.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(kWidth, 0) << "\" height=\""
      << fixed(height, 0) << "\" viewBox=\"0 0 " << fixed(kWidth, 0) << ' ' << fixed(height, 0)
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(kLeftMargin, 0) << "\" y=\"18\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << escape_xml(title) << "</text>\n";

  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const double top = kTopMargin + static_cast<double>(l) * (kPanelHeight + kPanelGap);
    const auto a = original.lead(l);
    const auto b = recon.lead(l);
    double lo = 0.0, hi = 0.0;
    if (n) {
      const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
      const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
      lo = std::min(*amin, *bmin);
      hi = std::max(*amax, *bmax);
    }

    if (mask && mask->num_samples() == n && n > 0) {
      // Shade each maximal run of hidden cells.
      std::size_t i = 0;
      while (i < n) {
        if (mask->keep(l, i)) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j < n && !mask->keep(l, j)) ++j;
        const double x0 = kLeftMargin + plot_w * static_cast<double>(i) / static_cast<double>(n);
        const double x1 = kLeftMargin + plot_w * static_cast<double>(j) / static_cast<double>(n);
        svg << "<rect x=\"" << fixed(x0, 1) << "\" y=\"" << fixed(top, 1) << "\" width=\""
            << fixed(x1 - x0, 1) << "\" height=\"" << fixed(kPanelHeight, 1)
            << "\" fill=\"#eeeeee\"/>\n";
        i = j;
      }
    }
    svg << "<text x=\"4\" y=\"" << fixed(top + kPanelHeight / 2 + 4, 1)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << lead_name(lead_from_ordinal(l))
        << "</text>\n";
    svg << polyline(a, top, lo, hi, "black");
    svg << polyline(b, top, lo, hi, "#d62728");
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_metric_tables(std::span<const MethodReports> methods,
                                 std::span<const std::string_view> metrics) {
  // Config order follows the first method that lists each config.
  std::vector<std::string> configs;
  for (const MethodReports& m : methods) {
    for (const MetricReport& r : m.reports) {
      if (std::find(configs.begin(), configs.end(), r.config_name) == configs.end()) {
        configs.push_back(r.config_name);
      }
    }
  }

  std::ostringstream md;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    const std::string_view metric = metrics[k];
    if (k) md << '\n';
    md << "## " << metric << "\n\n| Config | Lead |";
    for (const MethodReports& m : methods) md << ' ' << m.label << " |";
    md << "\n|---|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) md << "---|";
    md << '\n';
    for (const std::string& config : configs) {
      auto row = [&](std::string_view lead_label, std::optional<LeadId> lead) {
        md << "| " << config << " | " << lead_label << " |";
        for (const MethodReports& m : methods) {
          const MetricReport* r = find_config(m, config);
          md << ' ' << (r ? mean_std_cell(r->summary(metric, lead)) : "n/a") << " |";
        }
        md << '\n';
      };
      for (LeadId lead : kAllLeads) row(lead_name(lead), lead);
      row("all", std::nullopt);
    }
  }
  return md.str();
}

std::string render_summary_table(std::span<const MethodReports> rows, std::string_view row_header,
                                 std::span<const std::string_view> metrics) {
  std::ostringstream md;
  md << "| " << row_header << " |";
  for (std::string_view metric : metrics) md << ' ' << metric << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < metrics.size(); ++i) md << "---|";
  md << '\n';
  for (const MethodReports& row : rows) {
    md << "| " << row.label << " |";
    for (std::string_view metric : metrics) {
      // Pool every config's rows of this method.
      MetricReport pooled;
      for (const MetricReport& r : row.reports) {
        pooled.rows.insert(pooled.rows.end(), r.rows.begin(), r.rows.end());
      }
      md << ' ' << mean_std_cell(pooled.summary(metric)) << " |";
    }
    md << '\n';
  }
  return md.str();
}

}  // namespace ecgr
