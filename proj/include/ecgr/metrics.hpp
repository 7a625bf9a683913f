#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecgr/ecg.hpp"
#include "ecgr/masking.hpp"

namespace ecgr {

/// Pearson correlation; 0 when either input has zero variance (the
/// denominator is floored at eps).
double pcc(std::span<const float> a, std::span<const float> b, double eps = 1e-12);
double rmse(std::span<const float> a, std::span<const float> b);

enum class MaeMode { kMean, kMax };
double mae(std::span<const float> a, std::span<const float> b, MaeMode mode = MaeMode::kMean);

/// Classic DTW: |a_i - b_j| local cost, unrestricted window, unit steps
/// (i-1, j), (i, j-1), (i-1, j-1). The normalized form divides the optimal
/// cost by the number of cells on the optimal path (the shortest such path
/// when several tie). Throws kInvalidInput on empty input.
double dtw(std::span<const float> a, std::span<const float> b, bool normalize = true);

/// |mean QT(recon) - mean QT(orig)| on one lead; nullopt when either side
/// has no measurable beat.
std::optional<double> delta_qt(const EcgRecord& recon, const EcgRecord& orig, LeadId lead);
std::optional<double> delta_qrs(const EcgRecord& recon, const EcgRecord& orig, LeadId lead);

/// Share of the original's R peaks found in the reconstruction within 50 ms
/// (one-to-one matching), in percent. nullopt when the original has none.
std::optional<double> r_detect_pct(const EcgRecord& recon, const EcgRecord& orig, LeadId lead);

/// Average-QRS signal quality in [0, 1]: z-scored +-0.1 s windows around
/// every R peak correlated with their mean, rescaled as (mean r + 1) / 2.
/// A single beat scores 1; nullopt without beats.
std::optional<double> sqi_avg_qrs(const EcgRecord& record, LeadId lead);

inline constexpr std::array<std::string_view, 9> kMetricNames = {
    "pcc", "rmse", "mae_mean", "mae_max", "dtw",
    "delta_qt_s", "delta_qrs_s", "r_detect_pct", "sqi_avg_qrs"};

/// Scores of one reconstructed lead; nullopt marks a failed measurement.
struct LeadMetrics {
  std::array<std::optional<double>, kMetricNames.size()> values{};

  std::optional<double> get(std::string_view metric) const;
};

enum class Region { kFull, kMasked };

struct ScoreOptions {
  Region region = Region::kFull;
  bool dtw_normalize = true;
  /// Fiducial-based metrics (delta_qt_s .. sqi_avg_qrs) are the slow part.
  bool clinical = true;
};

/// Scores one lead of a reconstruction against the original. With
/// Region::kMasked the distortion metrics see only the cells the mask hid;
/// clinical metrics always use the full lead.
LeadMetrics score_lead(const EcgRecord& recon, const EcgRecord& orig, LeadId lead,
                       const PrimerMask* mask, const ScoreOptions& options);

struct MetricRow {
  std::string record_id;
  LeadId lead = LeadId::I;
  LeadMetrics metrics;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  std::size_t failures = 0;
};

struct MetricReport {
  std::string config_name;
  std::vector<MetricRow> rows;

  /// Mean and population standard deviation over rows, optionally restricted
  /// to one lead; failed measurements are counted, not averaged.
  MetricSummary summary(std::string_view metric, std::optional<LeadId> lead = std::nullopt) const;
};

using Reconstructor = std::function<EcgRecord(const MaskedEcg&)>;

/// Emits U[-1, 1) noise unrelated to the input; the null baseline.
Reconstructor noise_reconstructor(std::uint64_t seed);

struct EvalOptions {
  std::uint64_t seed = 0;
  ScoreOptions score;
  std::size_t threads = 1;
};

/// For every config: mask each record (noise seed derived from seed, record
/// index and config index), reconstruct and score all leads. Rows are in
/// record-major, lead order regardless of the thread count.
std::vector<MetricReport> evaluate(const Reconstructor& reconstructor,
                                   std::span<const EcgRecord> records,
                                   std::span<const MaskConfig> configs, const EvalOptions& options);

/// Entry (i, j): mean PCC of lead j when only lead i is given (mask C_<i>).
using CorrelationMatrix = std::array<std::array<double, kNumLeads>, kNumLeads>;
CorrelationMatrix correlation_matrix(const Reconstructor& reconstructor,
                                     std::span<const EcgRecord> records, const EvalOptions& options);

/// One row per record x config x lead: record, config, lead, then the metric
/// columns in kMetricNames order. Failed measurements are written as "nan".
void write_metrics_csv(std::ostream& out, std::span<const MetricReport> reports);
std::vector<MetricReport> read_metrics_csv(std::istream& in);

/// Per config: overall and per-lead mean/std/count/failures of every metric.
nlohmann::json metrics_summary_json(std::span<const MetricReport> reports);

/// Shortest round-trip decimal form of v ("nan" for NaN).
std::string format_number(double v);

}  // namespace ecgr
