#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ecgr/ecg.hpp"

namespace ecgr {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters of the synthetic 12-lead generator. Beats are sums of Gaussian
/// waves (P, Q, R, S, T) from two source channels mixed into I, II and V1..V6;
/// the remaining limb leads are derived, so Einthoven's relations hold.
struct SynthConfig {
  std::size_t num_records = 16;
  Range heart_rate_bpm{50.0, 80.0};
  Range qt_s{0.36, 0.44};
  Range qrs_s{0.08, 0.11};
  double baseline_wander_amp = 0.05;
  double noise_std = 0.01;
  /// Slow noise added as +1/2 to lead II and -1/2 to lead I, so that it
  /// appears in full in III = II - I.
  double lead_iii_independent_amp = 0.06;
  /// Smooth noise added independently to every precordial lead.
  double precordial_independent_amp = 0.03;
  double sampling_rate = 500.0;
  double duration_s = 10.0;
  std::uint64_t seed = 0;

  std::size_t num_samples() const;
  void validate() const;
};

/// Noise-free fiducials of one beat, in seconds, measured on lead II. q is
/// the trough before R (the point QT and QRS are measured from); s_offset and
/// t_end are where the tangent at the steepest edge of the S and T waves
/// meets the baseline.
struct BeatTruth {
  double r = 0.0;
  double q = 0.0;
  double s_offset = 0.0;
  double t_end = 0.0;
};

struct GroundTruth {
  std::string record_id;
  double heart_rate_bpm = 0.0;
  double qt_s = 0.0;
  double qrs_s = 0.0;
  /// Every R peak inside the record.
  std::vector<double> r_times;
  /// Beats whose fiducials all lie inside the record.
  std::vector<BeatTruth> beats;
};

struct SynthOutput {
  std::vector<EcgRecord> records;
  std::vector<GroundTruth> truth;
};

SynthOutput synth_generate(const SynthConfig& config);

/// One record with explicit QT / QRS / heart rate (used for paired tests).
std::pair<EcgRecord, GroundTruth> synth_record(const SynthConfig& config, std::size_t index,
                                               double heart_rate_bpm, double qt_s, double qrs_s);

}  // namespace ecgr
