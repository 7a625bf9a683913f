#include "ecgr/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "ecgr/error.hpp"
#include "ecgr/fiducials.hpp"
#include "ecgr/rng.hpp"

namespace ecgr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_size(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) fail(ErrorKind::kShapeMismatch, "metric inputs differ in length");
  if (a.empty()) fail(ErrorKind::kInvalidInput, "metric inputs are empty");
}

std::size_t metric_index(std::string_view metric) {
  const auto it = std::find(kMetricNames.begin(), kMetricNames.end(), metric);
  if (it == kMetricNames.end()) {
    fail(ErrorKind::kInvalidInput, "unknown metric '" + std::string(metric) + "'");
  }
  return static_cast<std::size_t>(it - kMetricNames.begin());
}

template <typename F>
std::optional<double> delta_of(const EcgRecord& recon, const EcgRecord& orig, LeadId lead, F mean) {
  const auto a = mean(recon.lead(lead), recon.sampling_rate());
  const auto b = mean(orig.lead(lead), orig.sampling_rate());
  if (!a || !b) return std::nullopt;
  return std::abs(*a - *b);
}

}  // namespace

double pcc(std::span<const float> a, std::span<const float> b, double eps) {
  require_same_size(a, b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double r = sab / std::max(std::sqrt(saa * sbb), eps);
  return std::clamp(r, -1.0, 1.0);
}

double rmse(std::span<const float> a, std::span<const float> b) {
  require_same_size(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

double mae(std::span<const float> a, std::span<const float> b, MaeMode mode) {
  require_same_size(a, b);
  double s = 0.0, m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]);
    s += d;
    m = std::max(m, d);
  }
  return mode == MaeMode::kMean ? s / static_cast<double>(a.size()) : m;
}

double dtw(std::span<const float> a, std::span<const float> b, bool normalize) {
  if (a.empty() || b.empty()) fail(ErrorKind::kInvalidInput, "dtw of an empty sequence");
  const std::size_t m = b.size();
  // Rolling rows of (cost, path length); ties on cost keep the shorter path.
  struct Cell {
    double cost;
    std::size_t len;
  };
  std::vector<Cell> rows(2 * m);
  Cell* prev = rows.data();
  Cell* cur = rows.data() + m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double local = std::abs(static_cast<double>(a[i]) - b[j]);
      if (i == 0 && j == 0) {
        cur[j] = {local, 1};
        continue;
      }
      Cell best{std::numeric_limits<double>::infinity(), 0};
      auto consider = [&](const Cell& c) {
        if (c.cost < best.cost || (c.cost == best.cost && c.len < best.len)) best = c;
      };
      if (i > 0 && j > 0) consider(prev[j - 1]);
      if (i > 0) consider(prev[j]);
      if (j > 0) consider(cur[j - 1]);
      cur[j] = {best.cost + local, best.len + 1};
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m - 1];
  return normalize ? end.cost / static_cast<double>(end.len) : end.cost;
}

std::optional<double> delta_qt(const EcgRecord& recon, const EcgRecord& orig, LeadId lead) {
  return delta_of(recon, orig, lead, mean_qt);
}

std::optional<double> delta_qrs(const EcgRecord& recon, const EcgRecord& orig, LeadId lead) {
  return delta_of(recon, orig, lead, mean_qrs);
}

std::optional<double> r_detect_pct(const EcgRecord& recon, const EcgRecord& orig, LeadId lead) {
  const double fs = orig.sampling_rate();
  const auto ref = detect_r_peaks(orig.lead(lead), fs);
  if (ref.empty()) return std::nullopt;
  const auto got = detect_r_peaks(recon.lead(lead), recon.sampling_rate());
  const double tol = 0.05 * fs;
  std::vector<bool> used(got.size(), false);
  std::size_t matched = 0;
  for (std::size_t r : ref) {
    std::size_t best = got.size();
    double best_d = tol;
    for (std::size_t k = 0; k < got.size(); ++k) {
      const double d = std::abs(static_cast<double>(got[k]) - static_cast<double>(r));
      if (!used[k] && d <= best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best < got.size()) {
      used[best] = true;
      ++matched;
    }
  }
  return std::min(100.0, 100.0 * static_cast<double>(matched) / static_cast<double>(ref.size()));
}

std::optional<double> sqi_avg_qrs(const EcgRecord& record, LeadId lead) {
  const auto x = record.lead(lead);
  const double fs = record.sampling_rate();
  const auto peaks = detect_r_peaks(x, fs);
  const auto half = static_cast<std::size_t>(std::lround(0.1 * fs));
  std::vector<std::vector<float>> windows;
  for (std::size_t r : peaks) {
    if (r < half || r + half >= x.size()) continue;
    std::vector<float> w(x.begin() + static_cast<std::ptrdiff_t>(r - half),
                         x.begin() + static_cast<std::ptrdiff_t>(r + half + 1));
    double mean = 0.0, sq = 0.0;
    for (float v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (float v : w) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(w.size()));
    for (float& v : w) v = sd > 0.0 ? static_cast<float>((v - mean) / sd) : 0.0f;
    windows.push_back(std::move(w));
  }
  if (windows.empty()) return std::nullopt;
  if (windows.size() == 1) return 1.0;
  std::vector<float> mean(windows.front().size(), 0.0f);
  for (const auto& w : windows) {
    for (std::size_t i = 0; i < w.size(); ++i) mean[i] += w[i] / static_cast<float>(windows.size());
  }
  double r = 0.0;
  for (const auto& w : windows) r += pcc(w, mean);
  r /= static_cast<double>(windows.size());
  return std::clamp((r + 1.0) / 2.0, 0.0, 1.0);
}

std::optional<double> LeadMetrics::get(std::string_view metric) const {
  return values[metric_index(metric)];
}

LeadMetrics score_lead(const EcgRecord& recon, const EcgRecord& orig, LeadId lead,
                       const PrimerMask* mask, const ScoreOptions& options) {
  if (recon.num_samples() != orig.num_samples()) {
    fail(ErrorKind::kShapeMismatch, "reconstruction and original differ in length");
  }
  LeadMetrics out;
  std::span<const float> a = recon.lead(lead);
  std::span<const float> b = orig.lead(lead);
  std::vector<float> ra, rb;
  if (options.region == Region::kMasked) {
    if (mask == nullptr) fail(ErrorKind::kInvalidInput, "masked-region scoring needs the mask");
    const std::size_t l = ordinal(lead);
    for (std::size_t n = 0; n < a.size(); ++n) {
      if (!mask->keep(l, n)) {
        ra.push_back(a[n]);
        rb.push_back(b[n]);
      }
    }
    a = ra;
    b = rb;
  }
  if (!a.empty()) {
    out.values[0] = pcc(a, b);
    out.values[1] = rmse(a, b);
    out.values[2] = mae(a, b, MaeMode::kMean);
    out.values[3] = mae(a, b, MaeMode::kMax);
    out.values[4] = dtw(a, b, options.dtw_normalize);
  }
  if (options.clinical) {
    out.values[5] = delta_qt(recon, orig, lead);
    out.values[6] = delta_qrs(recon, orig, lead);
    out.values[7] = r_detect_pct(recon, orig, lead);
    out.values[8] = sqi_avg_qrs(recon, lead);
  }
  return out;
}

MetricSummary MetricReport::summary(std::string_view metric, std::optional<LeadId> lead) const {
  const std::size_t idx = metric_index(metric);
  MetricSummary s;
  double sum = 0.0, sq = 0.0;
  for (const MetricRow& row : rows) {
    if (lead && row.lead != *lead) continue;
    const auto& v = row.metrics.values[idx];
    if (!v || !std::isfinite(*v)) {
      ++s.failures;
      continue;
    }
    sum += *v;
    ++s.count;
  }
  if (s.count == 0) {
    s.mean = kNaN;
    s.std = kNaN;
    return s;
  }
  s.mean = sum / static_cast<double>(s.count);
  for (const MetricRow& row : rows) {
    if (lead && row.lead != *lead) continue;
    const auto& v = row.metrics.values[idx];
    if (v && std::isfinite(*v)) sq += (*v - s.mean) * (*v - s.mean);
  }
  s.std = std::sqrt(sq / static_cast<double>(s.count));
  return s;
}

Reconstructor noise_reconstructor(std::uint64_t seed) {
  return [seed](const MaskedEcg& masked) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : masked.source_id) h = (h ^ c) * 0x100000001b3ULL;
    Rng rng(mix_seed(seed, h));
    EcgRecord out = masked.samples;
    for (float& v : out.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return out;
  };
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<MetricReport> evaluate(const Reconstructor& reconstructor,
                                   std::span<const EcgRecord> records,
                                   std::span<const MaskConfig> configs, const EvalOptions& options) {
  std::vector<MetricReport> reports;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::vector<std::vector<MetricRow>> per_record(records.size());
    parallel_for(records.size(), options.threads, [&](std::size_t r) {
      const EcgRecord& orig = records[r];
      const MaskedEcg masked = mask_record(orig, configs[c], mix_seed(options.seed, r, c), r);
      const EcgRecord recon = reconstructor(masked);
      for (LeadId lead : kAllLeads) {
        per_record[r].push_back(
            {orig.id(), lead, score_lead(recon, orig, lead, &masked.mask, options.score)});
      }
    });
    MetricReport report{configs[c].name(), {}};
    for (auto& rows : per_record) {
      for (auto& row : rows) report.rows.push_back(std::move(row));
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

CorrelationMatrix correlation_matrix(const Reconstructor& reconstructor,
                                     std::span<const EcgRecord> records, const EvalOptions& options) {
  std::vector<MaskConfig> configs;
  for (LeadId lead : kAllLeads) configs.push_back(MaskConfig::Lead(lead));
  EvalOptions opts = options;
  opts.score.clinical = false;
  opts.score.region = Region::kFull;
  const auto reports = evaluate(reconstructor, records, configs, opts);
  CorrelationMatrix m{};
  for (std::size_t i = 0; i < kNumLeads; ++i) {
    for (std::size_t j = 0; j < kNumLeads; ++j) {
      m[i][j] = reports[i].summary("pcc", kAllLeads[j]).mean;
    }
  }
  return m;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, std::span<const MetricReport> reports) {
  out << "record,config,lead";
  for (auto name : kMetricNames) out << ',' << name;
  out << '\n';
  for (const MetricReport& report : reports) {
    for (const MetricRow& row : report.rows) {
      out << row.record_id << ',' << report.config_name << ',' << lead_name(row.lead);
      for (const auto& v : row.metrics.values) out << ',' << format_number(v ? *v : kNaN);
      out << '\n';
    }
  }
}

std::vector<MetricReport> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kSchema, "metrics CSV is empty");
  std::string expected = "record,config,lead";
  for (auto name : kMetricNames) expected += "," + std::string(name);
  if (line != expected) fail(ErrorKind::kSchema, "metrics CSV header mismatch");
  std::vector<MetricReport> reports;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3 + kMetricNames.size()) {
      fail(ErrorKind::kSchema, "metrics CSV line " + std::to_string(line_no) + ": wrong column count");
    }
    MetricRow row;
    row.record_id = cells[0];
    const auto lead = lead_from_name(cells[2]);
    if (!lead) fail(ErrorKind::kSchema, "metrics CSV line " + std::to_string(line_no) + ": unknown lead");
    row.lead = *lead;
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      const std::string& c = cells[3 + k];
      if (c == "nan") continue;
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc{} || res.ptr != c.data() + c.size()) {
        fail(ErrorKind::kSchema, "metrics CSV line " + std::to_string(line_no) + ": bad number");
      }
      row.metrics.values[k] = v;
    }
    if (reports.empty() || reports.back().config_name != cells[1]) {
      reports.push_back({cells[1], {}});
    }
    reports.back().rows.push_back(std::move(row));
  }
  return reports;
}

nlohmann::json metrics_summary_json(std::span<const MetricReport> reports) {
  auto summary_json = [](const MetricSummary& s) {
    nlohmann::json j;
    j["mean"] = s.count > 0 ? nlohmann::json(s.mean) : nlohmann::json(nullptr);
    j["std"] = s.count > 0 ? nlohmann::json(s.std) : nlohmann::json(nullptr);
    j["count"] = s.count;
    j["failures"] = s.failures;
    return j;
  };
  nlohmann::json configs = nlohmann::json::array();
  for (const MetricReport& report : reports) {
    nlohmann::json entry;
    entry["config"] = report.config_name;
    for (auto name : kMetricNames) entry["overall"][std::string(name)] = summary_json(report.summary(name));
    for (LeadId lead : kAllLeads) {
      for (auto name : kMetricNames) {
        entry["per_lead"][std::string(lead_name(lead))][std::string(name)] =
            summary_json(report.summary(name, lead));
      }
    }
    configs.push_back(std::move(entry));
  }
  return {{"configs", std::move(configs)}};
}

}  // namespace ecgr
